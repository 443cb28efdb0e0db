"""Deterministic code-token vectors: PPMI co-occurrence + truncated SVD.

The model trains once at construction from the fixed corpus: a positive
pointwise-mutual-information matrix over a +-2 token window, factored with
SVD; word vectors are the leading singular directions scaled by the root of
their singular values, so truncating a vector keeps its strongest semantic
components. Tokens sharing contexts (type names, control keywords) end up
close in cosine.

Native vectors are 768 wide: the semantic block in the leading dimensions,
then a small deterministic per-word hash block that separates words the
corpus never saw. Multi-token texts average their token vectors. Everything
is a pure function of (corpus, parameters), so a restarted service with the
same model_id reproduces vectors bit for bit.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .corpus import corpus_lines

NATIVE_WIDTH = 768
SEMANTIC_RANK = 96
WINDOW = 2
HASH_WEIGHT = 0.05
MODEL_VERSION = "ppmi-svd-v1"

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|\S")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def _hash_block(word: str, width: int) -> np.ndarray:
    digest = hashlib.sha256(f"{MODEL_VERSION}:{word}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    block = rng.standard_normal(width)
    return block / np.linalg.norm(block)


class CodeVectorModel:
    def __init__(self, width: int = NATIVE_WIDTH, rank: int = SEMANTIC_RANK):
        self.width = width
        lines = corpus_lines()
        tokens = [tokenize(line) for line in lines]
        vocab = sorted({w for line in tokens for w in line})
        self._index = {w: i for i, w in enumerate(vocab)}

        n = len(vocab)
        counts = np.zeros((n, n))
        for line in tokens:
            for i, word in enumerate(line):
                row = self._index[word]
                lo = max(0, i - WINDOW)
                hi = min(len(line), i + WINDOW + 1)
                for j in range(lo, hi):
                    if j != i:
                        counts[row, self._index[line[j]]] += 1.0

        total = counts.sum()
        rows = counts.sum(axis=1, keepdims=True)
        cols = counts.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            pmi = np.log(counts * total / (rows @ cols))
        ppmi = np.where(np.isfinite(pmi) & (pmi > 0), pmi, 0.0)

        u, s, _ = np.linalg.svd(ppmi, full_matrices=False)
        self.rank = min(rank, len(s))
        semantic = u[:, : self.rank] * np.sqrt(s[: self.rank])
        norms = np.linalg.norm(semantic, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        self._semantic = semantic / norms

        digest = hashlib.sha256()
        digest.update("\n".join(lines).encode())
        digest.update(f":{self.width}:{self.rank}:{WINDOW}:{HASH_WEIGHT}".encode())
        self.model_id = f"{MODEL_VERSION}-{digest.hexdigest()[:12]}"

    def word_vector(self, word: str) -> np.ndarray:
        vec = np.zeros(self.width)
        row = self._index.get(word)
        if row is not None:
            vec[: self.rank] = self._semantic[row] * (1.0 - HASH_WEIGHT)
        vec[self.rank :] = _hash_block(word, self.width - self.rank) * HASH_WEIGHT
        return vec / np.linalg.norm(vec)

    def text_vector(self, text: str) -> np.ndarray:
        words = tokenize(text)
        if not words:
            vec = np.zeros(self.width)
            vec[self.rank :] = _hash_block(text, self.width - self.rank)
            return vec / np.linalg.norm(vec)
        mean = np.mean([self.word_vector(w) for w in words], axis=0)
        return mean / np.linalg.norm(mean)

    def embed(self, texts: list[str], width: int | None = None) -> np.ndarray:
        """Batch of unit vectors; widths below native truncate the leading
        dimensions and renormalize (deterministic across restarts)."""
        width = self.width if width is None else width
        if width < 1 or width > self.width:
            raise ValueError(f"width must be in 1..{self.width}, got {width}")
        unique: dict[str, np.ndarray] = {}
        for text in texts:
            if text not in unique:
                full = self.text_vector(text)
                cut = full[:width]
                norm = np.linalg.norm(cut)
                unique[text] = cut / norm if norm > 0 else cut
        return np.stack([unique[t] for t in texts])

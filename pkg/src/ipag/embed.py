"""Numeric features for complete graphs and the six typed subgraph slices.

Token and declaration labels become d_t-wide text vectors (deterministic
hash embeddings by default, or an external embedding service). Property
labels become 360-wide ordinal vectors packing one (index, position, depth)
triple per constituent name:

    plain "a"          -> (I_a, 1, 1), zeros
    sequence "a, b"    -> (I_a, 1, 1, I_b, 1, 2), zeros
    aggregation
      "(a‖b‖c, d)"     -> (I_a, 1, 1, I_b, 2, 1, I_c, 3, 1, I_d, 3, 2), zeros

Edges carry a fixed 6-wide one-hot per kind. Each message-passing unit
consumes node vectors concatenated with its edge one-hot; the concatenation
happens at model input, this module stores the pieces.
"""

from __future__ import annotations

import hashlib
import logging
import pickle
import time
from dataclasses import dataclass

import numpy as np

from .compress import label_parts
from .errors import (
    EmbedServiceError,
    IpagError,
    LabelOverflowError,
    StageError,
    VocabularyError,
)
from .graph import EDGE_KINDS, EDGE_SIGNATURES, Ipag, Stage

log = logging.getLogger(__name__)

PROPERTY_WIDTH = 360
MAX_PACKED_TRIPLES = PROPERTY_WIDTH // 3  # 120 names
DEFAULT_TEXT_WIDTH = 768

EDGE_ONE_HOT = {
    "e_pd": (1, 0, 0, 0, 0, 0),
    "e_pp": (0, 1, 0, 0, 0, 0),
    "e_tp": (0, 0, 1, 0, 0, 0),
    "e_tt": (0, 0, 0, 1, 0, 0),
    "e_td": (0, 0, 0, 0, 1, 0),
    "e_dt": (0, 0, 0, 0, 0, 1),
}


def embed_edges(kind: str) -> np.ndarray:
    """The 6-wide one-hot for an edge kind."""
    return np.asarray(EDGE_ONE_HOT[kind], dtype=np.float64)


# --- property vocabulary ------------------------------------------------


@dataclass
class PropertyVocabulary:
    """Dense 1-based ordinals over constituent property names; index 0 is
    reserved for names unseen at predict time."""

    names: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str, strict: bool = True) -> int:
        idx = self.names.get(name)
        if idx is not None:
            return idx
        if strict:
            raise VocabularyError(f"property name {name!r} not in vocabulary")
        log.warning("property name %r unseen at predict time; using index 0", name)
        return 0

    @classmethod
    def from_graphs(cls, graphs: list[Ipag]) -> "PropertyVocabulary":
        seen: set[str] = set()
        for g in graphs:
            for label in g.properties.values():
                for part in label_parts(label):
                    seen.update(part)
        return cls(names={name: i for i, name in enumerate(sorted(seen), start=1)})


def embed_property(
    label: str, vocab: PropertyVocabulary, strict: bool = True
) -> np.ndarray:
    """Pack a property label into the fixed 360-wide ordinal vector."""
    triples: list[tuple[int, int, int]] = []
    parts = label_parts(label)
    for position, part in enumerate(parts, start=1):
        for depth, name in enumerate(part, start=1):
            p = 1 if len(parts) == 1 else position
            triples.append((vocab.index(name, strict=strict), p, depth))
    if len(triples) > MAX_PACKED_TRIPLES:
        raise LabelOverflowError(
            f"label packs {len(triples)} names (> {MAX_PACKED_TRIPLES}): {label!r}"
        )
    vec = np.zeros(PROPERTY_WIDTH, dtype=np.float64)
    for i, (index, position, depth) in enumerate(triples):
        vec[3 * i : 3 * i + 3] = (index, position, depth)
    return vec


def decode_property(vec: np.ndarray, vocab: PropertyVocabulary) -> list[tuple[str, int, int]]:
    """Inverse of embed_property up to names: (name, position, depth) triples."""
    by_index = {i: name for name, i in vocab.names.items()}
    out = []
    for i in range(0, PROPERTY_WIDTH, 3):
        index, position, depth = vec[i : i + 3]
        if index == 0 and position == 0 and depth == 0:
            break
        out.append((by_index.get(int(index), "<unknown>"), int(position), int(depth)))
    return out


# --- text embedders -----------------------------------------------------


class HashEmbedder:
    """Deterministic fallback: the label digest seeds a unit-norm vector."""

    mode = "deterministic_hash"

    def __init__(self, width: int = DEFAULT_TEXT_WIDTH, seed: int = 0):
        self.width = width
        self.seed = seed

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.width), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(
                f"{self.mode}:{self.width}:{self.seed}:{text}".encode()
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.width)
            out[i] = vec / np.linalg.norm(vec)
        return out


class ServiceEmbedder:
    """Client for the external embedding service (POST <endpoint>/embed).

    Bounded retries with backoff; on an unreachable or failing service the
    embedder either raises (strict=True) or falls back to hash vectors with a
    warning. Safe for concurrent use (one request session per call batch).
    """

    mode = "external_service"

    def __init__(
        self,
        endpoint: str,
        width: int = DEFAULT_TEXT_WIDTH,
        strict: bool = False,
        timeout: float = 10.0,
        retries: int = 3,
        fallback_seed: int = 0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.width = width
        self.strict = strict
        self.timeout = timeout
        self.retries = retries
        self._fallback = HashEmbedder(width=width, seed=fallback_seed)

    @property
    def _url(self) -> str:
        if self.endpoint.endswith("/embed"):
            return self.endpoint
        return self.endpoint + "/embed"

    def _request(self, texts: list[str]) -> np.ndarray:
        import requests

        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    self._url,
                    json={"texts": texts, "width": self.width},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code == 200:
                    try:
                        vectors = np.asarray(resp.json()["vectors"], dtype=np.float64)
                    except (ValueError, KeyError) as exc:
                        last = exc
                    else:
                        if vectors.shape == (len(texts), self.width):
                            return vectors
                        last = EmbedServiceError(
                            f"service returned shape {vectors.shape}, "
                            f"want {(len(texts), self.width)}"
                        )
                elif 400 <= resp.status_code < 500:  # will not improve on retry
                    raise EmbedServiceError(
                        f"service rejected request ({resp.status_code}): {resp.text[:200]}"
                    )
                else:
                    last = EmbedServiceError(
                        f"service returned {resp.status_code}: {resp.text[:200]}"
                    )
            time.sleep(0.2 * (2**attempt))
        raise EmbedServiceError(f"embedding service unreachable: {last}")

    def embed(self, texts: list[str]) -> np.ndarray:
        unique = sorted(set(texts))
        try:
            vectors = self._request(unique)
        except EmbedServiceError:
            if self.strict:
                raise
            log.warning("embedding service unavailable; falling back to hash mode")
            vectors = self._fallback.embed(unique)
        row = {text: i for i, text in enumerate(unique)}
        return vectors[[row[t] for t in texts]]


def embed_text(label: str, embedder) -> np.ndarray:
    """Embed one non-empty label."""
    if not label:
        raise IpagError("cannot embed an empty label")
    return embedder.embed([label])[0]


class EmbeddingCache:
    """Label -> vector store keyed by (mode, width, label digest)."""

    def __init__(self, path: str | None = None):
        self.path = path
        self._data: dict[str, np.ndarray] = {}
        if path is not None:
            try:
                with np.load(path) as npz:
                    self._data = {k: npz[k] for k in npz.files}
            except FileNotFoundError:
                pass

    @staticmethod
    def key(mode: str, width: int, label: str) -> str:
        return f"{mode}:{width}:{hashlib.sha256(label.encode()).hexdigest()}"

    def get(self, mode: str, width: int, label: str) -> np.ndarray | None:
        return self._data.get(self.key(mode, width, label))

    def put(self, mode: str, width: int, label: str, vec: np.ndarray) -> None:
        self._data[self.key(mode, width, label)] = np.asarray(vec, dtype=np.float64)

    def save(self) -> None:
        if self.path is not None:
            np.savez(self.path, **self._data)


class CachingEmbedder:
    """Wraps an embedder with an EmbeddingCache."""

    def __init__(self, inner, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache
        self.width = inner.width
        self.mode = inner.mode

    def embed(self, texts: list[str]) -> np.ndarray:
        missing = [
            t for t in dict.fromkeys(texts) if self.cache.get(self.mode, self.width, t) is None
        ]
        if missing:
            fresh = self.inner.embed(missing)
            for text, vec in zip(missing, fresh):
                self.cache.put(self.mode, self.width, text, vec)
        return np.stack([self.cache.get(self.mode, self.width, t) for t in texts])


# --- edge depths -----------------------------------------------------------


def compute_edge_depths(g: Ipag) -> dict[str, list[int]]:
    """Per-edge depth lists parallel to the graph's edge lists.

    Upward edges (e_pd, e_pp, e_tp, e_td) get 1 + the longest upward path
    from the edge's target to its routine's declaration node; edges into a
    declaration are depth 1. Lateral e_tt and e_dt edges form single-tier
    subgraphs and are stored at depth 1. Cycles among upward edges indicate a
    construction bug and raise.
    """
    exits: dict[int, list[int]] = {}
    for src, dst in [*g.e_pp, *g.e_pd]:
        exits.setdefault(src, []).append(dst)

    longest: dict[int, int] = {d: 0 for d in g.declarations}
    state: dict[int, int] = {}  # 1 = visiting, 2 = done

    def lp(node: int) -> int:
        stack = [(node, 0)]
        while stack:
            nid, idx = stack.pop()
            if nid in longest:
                continue
            if idx == 0:
                if state.get(nid) == 1:
                    raise IpagError(
                        f"cyclic upward edges at node {nid} in {g.origin!r}"
                    )
                state[nid] = 1
            outs = exits.get(nid)
            if not outs:
                raise IpagError(
                    f"node {nid} in {g.origin!r} cannot reach a declaration"
                )
            pending = [o for o in outs if o not in longest]
            if pending:
                if any(state.get(o) == 1 for o in pending):
                    raise IpagError(
                        f"cyclic upward edges at node {nid} in {g.origin!r}"
                    )
                stack.append((nid, idx + 1))
                stack.extend((o, 0) for o in pending)
                continue
            longest[nid] = 1 + max(longest[o] for o in outs)
            state[nid] = 2
        return longest[node]

    depths: dict[str, list[int]] = {}
    for kind in ("e_pd", "e_pp", "e_tp", "e_td"):
        depths[kind] = [1 + lp(dst) for _, dst in g.edges(kind)]
    depths["e_tt"] = [1] * len(g.e_tt)
    depths["e_dt"] = [1] * len(g.e_dt)
    return depths


# --- node features and subgraph slicing ------------------------------------


@dataclass
class NodeFeatures:
    token_matrix: np.ndarray  # |N_t| x d_t
    property_matrix: np.ndarray  # |N_p| x 360
    declaration_matrix: np.ndarray  # |N_d| x d_t
    d_t: int


@dataclass
class Subgraph:
    kind: str
    src: np.ndarray  # row indices into the source-type feature matrix
    dst: np.ndarray  # row indices into the target-type feature matrix
    depth: np.ndarray

    @property
    def src_type(self) -> str:
        return EDGE_SIGNATURES[self.kind][0]

    @property
    def dst_type(self) -> str:
        return EDGE_SIGNATURES[self.kind][1]

    @property
    def onehot(self) -> np.ndarray:
        return embed_edges(self.kind)

    def __len__(self) -> int:
        return len(self.src)


@dataclass(eq=False)  # identity semantics; models cache per-graph tensors
class EmbeddedGraph:
    origin: str
    token_ids: list[int]
    property_ids: list[int]
    declaration_ids: list[int]
    features: NodeFeatures
    subgraphs: dict[str, Subgraph]
    label: str | None = None  # "vulnerable" | "non-vulnerable"
    d_t: int = DEFAULT_TEXT_WIDTH

    def counts(self) -> tuple[int, int, int]:
        return len(self.token_ids), len(self.property_ids), len(self.declaration_ids)


def compute_node_features(
    g: Ipag, vocab: PropertyVocabulary, embedder, strict: bool = True
) -> NodeFeatures:
    token_ids = sorted(g.tokens)
    decl_ids = sorted(g.declarations)
    prop_ids = sorted(g.properties)
    texts = [g.tokens[i] for i in token_ids] + [g.declarations[i] for i in decl_ids]
    vectors = embedder.embed(texts) if texts else np.zeros((0, embedder.width))
    token_matrix = vectors[: len(token_ids)]
    decl_matrix = vectors[len(token_ids) :]
    prop_matrix = (
        np.stack([embed_property(g.properties[i], vocab, strict=strict) for i in prop_ids])
        if prop_ids
        else np.zeros((0, PROPERTY_WIDTH))
    )
    return NodeFeatures(
        token_matrix=np.asarray(token_matrix, dtype=np.float64),
        property_matrix=np.asarray(prop_matrix, dtype=np.float64),
        declaration_matrix=np.asarray(decl_matrix, dtype=np.float64),
        d_t=embedder.width,
    )


def slice_subgraphs(g: Ipag, feats: NodeFeatures) -> EmbeddedGraph:
    """Slice a complete graph into its six typed subgraphs.

    Each subgraph holds the graph's edges of one kind as row indices into the
    per-type feature matrices, plus per-edge depths. The six edge lists
    partition the graph's edges; message-passing units later concatenate the
    node vectors with the subgraph's edge one-hot.
    """
    if g.stage != Stage.COMPLETE:
        raise StageError(
            f"slice_subgraphs expects stage complete, got {g.stage.value}; run the "
            "pipeline in order: build-ipag, compress, link, embed"
        )
    rows = {
        "t": {nid: i for i, nid in enumerate(sorted(g.tokens))},
        "p": {nid: i for i, nid in enumerate(sorted(g.properties))},
        "d": {nid: i for i, nid in enumerate(sorted(g.declarations))},
    }
    depths = compute_edge_depths(g)
    subgraphs = {}
    for kind in EDGE_KINDS:
        src_type, dst_type = EDGE_SIGNATURES[kind]
        edges = g.edges(kind)
        subgraphs[kind] = Subgraph(
            kind=kind,
            src=np.asarray([rows[src_type][s] for s, _ in edges], dtype=np.int64),
            dst=np.asarray([rows[dst_type][t] for _, t in edges], dtype=np.int64),
            depth=np.asarray(depths[kind], dtype=np.int64),
        )
    return EmbeddedGraph(
        origin=g.origin,
        token_ids=sorted(g.tokens),
        property_ids=sorted(g.properties),
        declaration_ids=sorted(g.declarations),
        features=feats,
        subgraphs=subgraphs,
        d_t=feats.d_t,
    )


def embed_corpus(
    graphs: list[Ipag],
    embedder,
    vocab: PropertyVocabulary | None = None,
    labels: dict[str, str] | None = None,
    strict_vocab: bool = True,
) -> tuple[list[EmbeddedGraph], PropertyVocabulary]:
    """Embed a complete corpus; builds the vocabulary when none is given."""
    if vocab is None:
        vocab = PropertyVocabulary.from_graphs(graphs)
        strict_vocab = True
    out = []
    for g in graphs:
        feats = compute_node_features(g, vocab, embedder, strict=strict_vocab)
        eg = slice_subgraphs(g, feats)
        if labels is not None and g.origin in labels:
            eg.label = labels[g.origin]
        out.append(eg)
    return out, vocab


# --- embedded corpus persistence -------------------------------------------


def embedder_info(embedder) -> dict:
    """Descriptor persisted alongside artifacts so predict-time embedding
    can reproduce the training-time vectors."""
    return {
        "mode": embedder.mode,
        "width": embedder.width,
        "seed": getattr(embedder, "seed", 0),
    }


def save_embedded(
    graphs: list[EmbeddedGraph],
    vocab: PropertyVocabulary,
    path: str,
    info: dict | None = None,
) -> None:
    doc = {
        "version": 1,
        "kind": "embedded-corpus",
        "vocab": vocab.names,
        "embedder": info or {},
        "graphs": graphs,
    }
    with open(path, "wb") as fh:
        pickle.dump(doc, fh, protocol=4)


def load_embedded(path: str) -> tuple[list[EmbeddedGraph], PropertyVocabulary, dict]:
    with open(path, "rb") as fh:
        doc = pickle.load(fh)
    if not isinstance(doc, dict) or doc.get("kind") != "embedded-corpus":
        raise IpagError(f"{path} is not an embedded-corpus file")
    return doc["graphs"], PropertyVocabulary(names=doc["vocab"]), doc.get("embedder", {})

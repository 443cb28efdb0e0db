"""Lossless graph reduction: property-sequence and aggregation merging.

Sequence merging collapses single-entry/single-exit chains of property nodes
into one node whose label joins the member labels exit-first ("IdExpression,
Name"). Aggregation merging collapses a parent property node together with
its child property nodes into one node labelled "(parent‖child1‖child2‖…)",
but only when every child has exactly one feeder (structural test) and the
parent's construct name is whitelisted for whole-part merging (semantic
test). Token nodes, the token chain, and label order are never touched, so
the retained source text survives every stage.

Merged-label grammar (one aggregation level, never nested):

    plain:        Name
    sequence:     A, B, C            (exit-nearest first)
    aggregation:  (P‖X‖Y, Z)         (parent part, then children in order;
                                      parts may themselves be sequence labels)
"""

from __future__ import annotations

import importlib.resources
import json
import logging
from dataclasses import dataclass, field

from .errors import CorpusMismatchError, IpagError, RulesetError
from .graph import Ipag, Stage, require_stage

log = logging.getLogger(__name__)

SEQ_SEP = ", "
AGG_SEP = "‖"  # ‖ between the parent part and each child part

# A merged label may pack at most this many constituent names; the packed
# (index, position, depth) triples must fit the fixed 360-slot embedding.
MAX_PACKED_NAMES = 120


# --- merged-label grammar ---------------------------------------------------


def is_aggregation_label(label: str) -> bool:
    return label.startswith("(") and label.endswith(")") and AGG_SEP in label


def split_sequence_label(label: str) -> list[str]:
    return [part.strip() for part in label.split(",")]


def label_parts(label: str) -> list[list[str]]:
    """Parts of a label: [[parent names], [child1 names], ...] for an
    aggregation, one part otherwise. Each part lists sequence names in label
    order (exit-nearest first)."""
    if is_aggregation_label(label):
        return [split_sequence_label(p) for p in label[1:-1].split(AGG_SEP)]
    return [split_sequence_label(label)]


def constituent_names(label: str) -> list[str]:
    return [name for part in label_parts(label) for name in part]


def entry_name(label: str) -> str | None:
    """The construct name that receives a node's incoming edges.

    Plain labels name themselves; sequence labels are ordered exit-first, so
    the entry-nearest name is the last; aggregation-merged nodes have no
    single entry construct (they are never merged again).
    """
    if is_aggregation_label(label):
        return None
    return split_sequence_label(label)[-1]


# --- ruleset ----------------------------------------------------------------


@dataclass
class CompressRuleset:
    """Per-language map of property name -> (category, compressible flag)."""

    languages: dict[str, dict[str, tuple[str, bool]]]

    def lookup(self, language: str, name: str) -> tuple[str, bool]:
        table = self.languages.get(language)
        if table is None:
            raise RulesetError(f"no compression rules for language {language!r}")
        entry = table.get(name)
        if entry is None:
            raise RulesetError(
                f"property name {name!r} missing from the {language!r} ruleset"
            )
        return entry

    def compressible(self, language: str, name: str) -> bool:
        return self.lookup(language, name)[1]

    @classmethod
    def from_dict(cls, doc: dict) -> "CompressRuleset":
        languages = {}
        for lang, table in doc.items():
            if lang == "version":
                continue
            languages[lang] = {
                name: (entry["category"], bool(entry["compressible"]))
                for name, entry in table.items()
            }
        return cls(languages=languages)

    @classmethod
    def load(cls, path: str) -> "CompressRuleset":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_ruleset() -> CompressRuleset:
    text = (
        importlib.resources.files("ipag.data")
        .joinpath("aggregation_rules.json")
        .read_text(encoding="utf-8")
    )
    return CompressRuleset.from_dict(json.loads(text))


# --- shared graph views -----------------------------------------------------


def _entries(g: Ipag) -> dict[int, list[tuple[int, str]]]:
    """Incoming (source, edge kind) per property node, in edge-list order."""
    entries: dict[int, list[tuple[int, str]]] = {p: [] for p in g.properties}
    for src, dst in g.e_pp:
        entries.setdefault(dst, []).append((src, "e_pp"))
    for src, dst in g.e_tp:
        entries.setdefault(dst, []).append((src, "e_tp"))
    return entries


def _exits(g: Ipag) -> dict[int, tuple[int, str]]:
    """Unique outgoing (target, edge kind) per property node."""
    exits: dict[int, tuple[int, str]] = {}
    for kind in ("e_pp", "e_pd"):
        for src, dst in g.edges(kind):
            if src in exits:
                raise IpagError(
                    f"property {src} in {g.origin!r} has multiple exits; "
                    "compression expects tree-shaped graphs"
                )
            exits[src] = (dst, kind)
    return exits


# --- sequences ----------------------------------------------------------------


@dataclass
class PropertySequence:
    nodes: list[int]  # entry-nearest first
    entries: list[tuple[int, str]]  # (source id, edge kind) feeding nodes[0]
    exit: int
    exit_kind: str


def find_sequences(g: Ipag) -> list[PropertySequence]:
    """All maximal single-entry/single-exit property chains of length >= 2.

    A chain starts at a property with at least one entry that is not itself
    the sole continuation of a predecessor, runs through properties with
    exactly one entry and one exit, and stops where the next node is the
    declaration or a property with two or more entries. Chains are disjoint.
    """
    require_stage(g, Stage.PRELIMINARY, Stage.SEQUENCE_REDUCED, step="find_sequences")
    entries = _entries(g)
    exits = _exits(g)

    def is_head(n: int) -> bool:
        ins = entries.get(n, [])
        if not ins:
            return False
        if len(ins) >= 2:
            return True
        src, kind = ins[0]
        return kind == "e_tp"  # fed by a token; a property feeder would chain

    sequences = []
    for head in sorted(g.properties):
        if not is_head(head) or head not in exits:
            continue
        chain = [head]
        while True:
            target, kind = exits[chain[-1]]
            if target in g.properties and len(entries.get(target, [])) == 1 and target in exits:
                chain.append(target)
                continue
            break
        if len(chain) < 2:
            continue
        exit_node, exit_kind = exits[chain[-1]]
        sequences.append(
            PropertySequence(
                nodes=chain,
                entries=list(entries[head]),
                exit=exit_node,
                exit_kind=exit_kind,
            )
        )
    return sequences


def _chunk_chain(g: Ipag, chain: list[int]) -> list[list[int]]:
    """Split a chain so each merged chunk packs <= MAX_PACKED_NAMES names.
    Chunks shorter than two nodes are left unmerged."""
    chunks: list[list[int]] = []
    current: list[int] = []
    count = 0
    for node in chain:
        n = len(constituent_names(g.properties[node]))
        if current and count + n > MAX_PACKED_NAMES:
            chunks.append(current)
            current, count = [], 0
        current.append(node)
        count += n
    if current:
        chunks.append(current)
    return [c for c in chunks if len(c) >= 2]


def merge_sequences(g: Ipag) -> Ipag:
    """Collapse every found sequence into one fresh node; labels join the
    member labels from exit-nearest to entry-nearest."""
    require_stage(g, Stage.PRELIMINARY, Stage.SEQUENCE_REDUCED, step="merge_sequences")
    out = g.copy()
    sequences = find_sequences(out)
    next_id = out.next_id()
    mapping: dict[int, int] = {}
    drop: set[tuple[int, int]] = set()
    for seq in sequences:
        chunks = _chunk_chain(out, seq.nodes)
        if sum(len(c) for c in chunks) < len(seq.nodes) and chunks:
            log.warning(
                "sequence in %s exceeds %d packed names; merged in %d chunks",
                out.origin,
                MAX_PACKED_NAMES,
                len(chunks),
            )
        for chunk in chunks:
            label = SEQ_SEP.join(out.properties[n] for n in reversed(chunk))
            merged = next_id
            next_id += 1
            for n in chunk:
                mapping[n] = merged
                del out.properties[n]
            out.properties[merged] = label
            drop.update(zip(chunk, chunk[1:]))

    def rewrite(edges: list[tuple[int, int]]) -> list[tuple[int, int]]:
        return [
            (mapping.get(s, s), mapping.get(t, t))
            for s, t in edges
            if (s, t) not in drop
        ]

    out.e_pp = rewrite(out.e_pp)
    out.e_pd = rewrite(out.e_pd)
    out.e_tp = rewrite(out.e_tp)
    out.stage = Stage.SEQUENCE_REDUCED
    return out


# --- aggregations -------------------------------------------------------------


@dataclass
class AggregationStructure:
    parent: int
    children: list[int]  # source order
    feeders: dict[int, list[tuple[int, str]]] = field(default_factory=dict)
    exit: int = -1
    exit_kind: str = "e_pp"
    structural_ok: bool = False
    semantic_ok: bool = False

    @property
    def compressible(self) -> bool:
        return self.structural_ok and self.semantic_ok


def find_aggregations(g: Ipag, rules: CompressRuleset) -> list[AggregationStructure]:
    """Every parent property fed by two or more property children, tagged.

    Structurally compressible: each child has exactly one feeder edge.
    Semantically compressible: the parent's entry-nearest construct name is
    whitelisted in the ruleset. Aggregation-merged nodes (on either side)
    never merge again — the packed embedding cannot represent nesting.
    """
    require_stage(
        g, Stage.SEQUENCE_REDUCED, Stage.AGGREGATION_REDUCED, step="find_aggregations"
    )
    entries = _entries(g)
    exits = _exits(g)
    found = []
    for parent in sorted(g.properties):
        children = [src for src, kind in entries.get(parent, []) if kind == "e_pp"]
        if len(children) < 2:
            continue
        exit_node, exit_kind = exits.get(parent, (-1, "e_pp"))
        feeders = {child: list(entries.get(child, [])) for child in children}
        structural = all(len(feeders[c]) == 1 for c in children) and not any(
            is_aggregation_label(g.properties[c]) for c in children
        )
        name = entry_name(g.properties[parent])
        if name is None:
            semantic = False
        else:
            semantic = rules.compressible(g.language, name)
        found.append(
            AggregationStructure(
                parent=parent,
                children=children,
                feeders=feeders,
                exit=exit_node,
                exit_kind=exit_kind,
                structural_ok=structural,
                semantic_ok=semantic,
            )
        )
    return found


def merge_aggregations(g: Ipag, rules: CompressRuleset) -> Ipag:
    """Collapse each compressible aggregation into one fresh node labelled
    "(parent‖child1‖…)"; feeder edges re-target the merged node in their own
    edge lists, and the parent's exit edge is re-sourced."""
    require_stage(
        g, Stage.SEQUENCE_REDUCED, Stage.AGGREGATION_REDUCED, step="merge_aggregations"
    )
    out = g.copy()
    aggregations = [a for a in find_aggregations(out, rules) if a.compressible]
    next_id = out.next_id()
    mapping: dict[int, int] = {}
    drop: set[tuple[int, int]] = set()
    for agg in aggregations:
        members = [agg.parent, *agg.children]
        if any(m in mapping for m in members):  # compressible ones are disjoint
            raise AssertionError(
                f"overlapping compressible aggregations in {out.origin!r}"
            )
        names = sum(len(constituent_names(out.properties[m])) for m in members)
        if names > MAX_PACKED_NAMES:
            log.warning(
                "aggregation at %d in %s packs %d names (> %d); left unmerged",
                agg.parent,
                out.origin,
                names,
                MAX_PACKED_NAMES,
            )
            continue
        label = (
            "("
            + out.properties[agg.parent]
            + AGG_SEP
            + AGG_SEP.join(out.properties[c] for c in agg.children)
            + ")"
        )
        merged = next_id
        next_id += 1
        for m in members:
            mapping[m] = merged
            del out.properties[m]
        out.properties[merged] = label
        drop.update((c, agg.parent) for c in agg.children)

    def rewrite(edges: list[tuple[int, int]]) -> list[tuple[int, int]]:
        return [
            (mapping.get(s, s), mapping.get(t, t))
            for s, t in edges
            if (s, t) not in drop
        ]

    out.e_pp = rewrite(out.e_pp)
    out.e_pd = rewrite(out.e_pd)
    out.e_tp = rewrite(out.e_tp)
    out.stage = Stage.AGGREGATION_REDUCED
    return out


def compress(g: Ipag, rules: CompressRuleset | None = None) -> Ipag:
    """Full reduction: sequences once, then aggregations once."""
    return merge_aggregations(merge_sequences(g), rules or default_ruleset())


# --- reporting ----------------------------------------------------------------


@dataclass
class CompressionReport:
    nodes_before: int
    nodes_after: int
    edges_before: int
    edges_after: int
    node_ratio: float  # 1 - after/before
    edge_ratio: float
    node_histogram: dict[str, int]
    edge_histogram: dict[str, int]

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _histogram(fractions: list[float]) -> dict[str, int]:
    bins = {f"{10 * i}-{10 * (i + 1)}%": 0 for i in range(10)}
    for f in fractions:
        idx = min(9, max(0, int(f * 10)))
        bins[f"{10 * idx}-{10 * (idx + 1)}%"] += 1
    return bins


def compression_report(before: list[Ipag], after: list[Ipag]) -> CompressionReport:
    """Corpus-level node/edge reduction ratios plus per-routine histograms."""
    if len(before) != len(after):
        raise CorpusMismatchError(
            f"corpus length mismatch: {len(before)} before vs {len(after)} after"
        )
    for b, a in zip(before, after):
        if b.origin != a.origin:
            raise CorpusMismatchError(
                f"corpus order mismatch: {b.origin!r} vs {a.origin!r}"
            )
    nb = sum(g.node_count() for g in before)
    na = sum(g.node_count() for g in after)
    eb = sum(g.edge_count() for g in before)
    ea = sum(g.edge_count() for g in after)
    node_fracs = [
        1.0 - (a.node_count() / b.node_count()) if b.node_count() else 0.0
        for b, a in zip(before, after)
    ]
    edge_fracs = [
        1.0 - (a.edge_count() / b.edge_count()) if b.edge_count() else 0.0
        for b, a in zip(before, after)
    ]
    return CompressionReport(
        nodes_before=nb,
        nodes_after=na,
        edges_before=eb,
        edges_after=ea,
        node_ratio=1.0 - (na / nb) if nb else 0.0,
        edge_ratio=1.0 - (ea / eb) if eb else 0.0,
        node_histogram=_histogram(node_fracs),
        edge_histogram=_histogram(edge_fracs),
    )

"""Call-relation indexing and callee splicing.

Routines are partitioned by the depth of their deepest traceable call chain
(computed over a cycle-broken call graph), then processed shallow-to-deep:
each resolved call site receives a fresh-id clone of the callee's complete
graph, unioned into the caller on every component except e_dt, plus one
declaration->call-token edge. A caller's e_dt therefore lists exactly its own
resolved call sites; call edges internal to spliced clones are not carried
over (the clones' nodes and other edges are).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .compress import constituent_names
from .errors import IpagError
from .graph import Ipag, Stage, require_stage

log = logging.getLogger(__name__)

CALL_PROPERTY_NAMES = frozenset({"FunctionCallExpression", "MethodCallExpr"})

UNTRACEABLE = "untraceable"


def call_site_candidates(g: Ipag) -> list[int]:
    """Token ids feeding a call-related property node, in ascending id order.

    A property node is call-related when any constituent name of its label is
    a call-expression construct.
    """
    call_props = {
        p
        for p, label in g.properties.items()
        if CALL_PROPERTY_NAMES & set(constituent_names(label))
    }
    return sorted({src for src, dst in g.e_tp if dst in call_props})


@dataclass
class CallDepthIndex:
    partitions: list[list[str]]  # partitions[i] = routines at depth i, sorted
    depth: dict[str, int]
    resolution: dict[tuple[str, int], str]  # (caller, token id) -> callee or UNTRACEABLE
    broken_edges: list[tuple[str, str, int]] = field(default_factory=list)

    def resolved_sites(self, caller: str) -> list[tuple[int, str]]:
        return sorted(
            (tok, callee)
            for (name, tok), callee in self.resolution.items()
            if name == caller and callee != UNTRACEABLE
        )


def index_call_depths(corpus: list[Ipag], max_call_depth: int = 8) -> CallDepthIndex:
    """Partition a corpus by deepest traceable call depth.

    Call sites resolve by literal token-label match against corpus routine
    names; everything else (variables, literals, library routines) is
    untraceable. Cycles are broken by dropping edges that would revisit a
    routine already on the current DFS path (warned, listed in broken_edges);
    afterwards, edges that would push a routine's depth beyond max_call_depth
    are also dropped bottom-up so clone nesting stays bounded.
    """
    graphs: dict[str, Ipag] = {}
    for g in corpus:
        require_stage(g, Stage.AGGREGATION_REDUCED, step="index_call_depths")
        if g.origin in graphs:
            log.warning("duplicate routine %r in corpus: last definition wins", g.origin)
        graphs[g.origin] = g

    resolution: dict[tuple[str, int], str] = {}
    edges: dict[str, list[tuple[int, str]]] = {}
    for name, g in graphs.items():
        out = []
        for tok in call_site_candidates(g):
            callee = g.tokens[tok]
            if callee in graphs:
                out.append((tok, callee))
            else:
                resolution[(name, tok)] = UNTRACEABLE
        edges[name] = out

    # Depth-first over the name-level call graph, cutting back edges.
    depth: dict[str, int] = {}
    state: dict[str, str] = {}  # "visiting" | "done"
    broken: list[tuple[str, str, int]] = []

    def visit(root: str):
        stack: list[tuple[str, int]] = [(root, 0)]
        while stack:
            name, idx = stack.pop()
            if idx == 0:
                if state.get(name) == "done":
                    continue
                state[name] = "visiting"
            outgoing = edges[name]
            advanced = False
            while idx < len(outgoing):
                tok, callee = outgoing[idx]
                idx += 1
                if state.get(callee) == "visiting":
                    resolution[(name, tok)] = UNTRACEABLE
                    broken.append((name, callee, tok))
                    log.warning(
                        "call cycle: dropping %s -> %s (token %d)", name, callee, tok
                    )
                    continue
                resolution[(name, tok)] = callee
                if state.get(callee) != "done":
                    stack.append((name, idx))
                    stack.append((callee, 0))
                    advanced = True
                    break
            if advanced:
                continue
            depth[name] = max(
                (
                    depth[callee] + 1
                    for tok, callee in outgoing
                    if resolution.get((name, tok)) == callee
                ),
                default=0,
            )
            state[name] = "done"

    for name in sorted(graphs):
        visit(name)

    # Bottom-up depth cap: callees are final before their callers.
    capped: dict[str, int] = {}
    for name in sorted(graphs, key=lambda n: (depth[n], n)):
        kept = []
        for tok, callee in edges[name]:
            if resolution.get((name, tok)) != callee:
                continue
            if capped[callee] + 1 > max_call_depth:
                resolution[(name, tok)] = UNTRACEABLE
                broken.append((name, callee, tok))
                log.warning(
                    "max call depth %d exceeded: dropping %s -> %s (token %d)",
                    max_call_depth,
                    name,
                    callee,
                    tok,
                )
                continue
            kept.append(callee)
        capped[name] = max((capped[c] + 1 for c in kept), default=0)

    n = max(capped.values(), default=0)
    partitions = [
        sorted(name for name, d in capped.items() if d == i) for i in range(n + 1)
    ]
    return CallDepthIndex(
        partitions=partitions,
        depth=capped,
        resolution=resolution,
        broken_edges=broken,
    )


def _clone_with_fresh_ids(g: Ipag, base: int) -> tuple[Ipag, int]:
    """Deep-copy g remapping node ids to base..; returns (clone, next free id)."""
    ids = sorted([*g.tokens, *g.properties, *g.declarations])
    remap = {old: base + i for i, old in enumerate(ids)}
    clone = Ipag(
        origin=g.origin,
        stage=g.stage,
        tokens={remap[i]: s for i, s in g.tokens.items()},
        properties={remap[i]: s for i, s in g.properties.items()},
        declarations={remap[i]: s for i, s in g.declarations.items()},
        e_pd=[(remap[a], remap[b]) for a, b in g.e_pd],
        e_pp=[(remap[a], remap[b]) for a, b in g.e_pp],
        e_tp=[(remap[a], remap[b]) for a, b in g.e_tp],
        e_tt=[(remap[a], remap[b]) for a, b in g.e_tt],
        e_td=[(remap[a], remap[b]) for a, b in g.e_td],
        e_dt=[(remap[a], remap[b]) for a, b in g.e_dt],
        root_decl=remap[g.root_decl],
        language=g.language,
    )
    return clone, base + len(ids)


def link_calls(corpus: list[Ipag], index: CallDepthIndex) -> list[Ipag]:
    """Produce complete graphs: depth tiers in order, one clone per resolved
    call site, one e_dt edge per splice. Output preserves corpus order."""
    graphs: dict[str, Ipag] = {}
    for g in corpus:
        require_stage(g, Stage.AGGREGATION_REDUCED, step="link_calls")
        graphs[g.origin] = g

    complete: dict[str, Ipag] = {}
    for tier in index.partitions:
        for name in tier:
            if name not in graphs:
                raise IpagError(
                    f"index/corpus mismatch: routine {name!r} indexed but absent"
                )
            g = graphs[name].copy()
            sites = index.resolved_sites(name)
            e_dt: list[tuple[int, int]] = []
            next_id = g.next_id()
            for tok, callee in sites:
                if tok not in g.tokens:
                    raise IpagError(
                        f"index/corpus mismatch: token {tok} not in {name!r}"
                    )
                if callee not in complete:
                    raise IpagError(
                        f"index/corpus mismatch: callee {callee!r} of {name!r} "
                        "not linked yet (depth partition broken)"
                    )
                clone, next_id = _clone_with_fresh_ids(complete[callee], next_id)
                g.tokens.update(clone.tokens)
                g.properties.update(clone.properties)
                g.declarations.update(clone.declarations)
                g.e_pd.extend(clone.e_pd)
                g.e_pp.extend(clone.e_pp)
                g.e_tp.extend(clone.e_tp)
                g.e_tt.extend(clone.e_tt)
                g.e_td.extend(clone.e_td)
                # clone-internal e_dt edges are dropped: e_dt lists only the
                # caller's own resolved call sites
                e_dt.append((clone.root_decl, tok))
            g.e_dt = e_dt
            g.stage = Stage.COMPLETE
            complete[name] = g

    missing = [g.origin for g in corpus if g.origin not in complete]
    if missing:
        raise IpagError(f"index/corpus mismatch: unindexed routines {missing}")
    return [complete[g.origin] for g in corpus]


def caller_sample_ratio(index: CallDepthIndex, corpus: list[Ipag]) -> float:
    """Fraction of routines with at least one resolved call site."""
    if not corpus:
        return 0.0
    callers = sum(1 for g in corpus if index.resolved_sites(g.origin))
    return callers / len(corpus)

"""Inter-procedural abstract graphs: type, construction, validation, I/O.

An Ipag is the 9-part graph of a routine: token nodes, property nodes,
declaration nodes, and six directed edge lists keyed by endpoint types
(property->declaration, property->property, token->property, token->next
token, token->declaration, declaration->token). A graph carries a stage tag
that records how far through the pipeline it has travelled.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, replace

from .errors import AstValidationError, InterchangeError, StageError
from .frontend.astmodel import PROPERTY, TOKEN, Ast, token_frontier, validate_ast

log = logging.getLogger(__name__)

EDGE_KINDS = ("e_pd", "e_pp", "e_tp", "e_tt", "e_td", "e_dt")

# (source node set, target node set) per edge kind; "t" token, "p" property, "d" declaration
EDGE_SIGNATURES = {
    "e_pd": ("p", "d"),
    "e_pp": ("p", "p"),
    "e_tp": ("t", "p"),
    "e_tt": ("t", "t"),
    "e_td": ("t", "d"),
    "e_dt": ("d", "t"),
}


class Stage(str, enum.Enum):
    PRELIMINARY = "preliminary"
    SEQUENCE_REDUCED = "sequence_reduced"
    AGGREGATION_REDUCED = "aggregation_reduced"
    COMPLETE = "complete"


@dataclass
class Ipag:
    origin: str
    stage: Stage
    tokens: dict[int, str]
    properties: dict[int, str]
    declarations: dict[int, str]
    e_pd: list[tuple[int, int]]
    e_pp: list[tuple[int, int]]
    e_tp: list[tuple[int, int]]
    e_tt: list[tuple[int, int]]
    e_td: list[tuple[int, int]]
    e_dt: list[tuple[int, int]]
    root_decl: int
    language: str = "c"

    def edges(self, kind: str) -> list[tuple[int, int]]:
        return getattr(self, kind)

    def node_count(self) -> int:
        return len(self.tokens) + len(self.properties) + len(self.declarations)

    def edge_count(self) -> int:
        return sum(len(self.edges(k)) for k in EDGE_KINDS)

    def next_id(self) -> int:
        """Smallest id above every node id (fresh-id watermark for merges)."""
        ids = [*self.tokens, *self.properties, *self.declarations]
        return max(ids) + 1 if ids else 0

    def copy(self) -> "Ipag":
        return replace(
            self,
            tokens=dict(self.tokens),
            properties=dict(self.properties),
            declarations=dict(self.declarations),
            **{k: list(self.edges(k)) for k in EDGE_KINDS},
        )

    def token_sequence(self) -> list[tuple[int, str]]:
        """Walk e_tt chains in order; single-routine graphs yield one chain.

        Chains are emitted in ascending order of their head token id, each
        head being a token with no incoming e_tt edge.
        """
        succ: dict[int, int] = {}
        has_pred: set[int] = set()
        for src, dst in self.e_tt:
            succ[src] = dst
            has_pred.add(dst)
        out: list[tuple[int, str]] = []
        heads = sorted(t for t in self.tokens if t not in has_pred)
        for head in heads:
            cur: int | None = head
            while cur is not None:
                out.append((cur, self.tokens[cur]))
                cur = succ.get(cur)
        return out


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str

    def __str__(self):
        return f"[{self.rule}] {self.subject}: {self.message}"


def require_stage(g: Ipag, *stages: Stage, step: str = "") -> None:
    if g.stage not in stages:
        want = " or ".join(s.value for s in stages)
        raise StageError(
            f"{step or 'this step'} expects stage {want}, got {g.stage.value} "
            f"(routine {g.origin!r})"
        )


def build_preliminary(ast: Ast) -> Ipag:
    """Construct the preliminary graph of one routine from its AST.

    All AST edges are reversed and partitioned by endpoint type; every token
    is chained to its successor and linked to the declaration node (the
    relabelled AST root). An AST edge from the root straight to a token folds
    into the token->declaration edge rather than inventing a seventh kind.
    """
    problems = validate_ast(ast)
    if problems:
        raise AstValidationError(
            f"routine {ast.routine_name!r}: " + "; ".join(problems)
        )
    root = ast.root
    tokens: dict[int, str] = {}
    properties: dict[int, str] = {}
    for node in ast.nodes.values():
        if node.kind == TOKEN:
            tokens[node.id] = node.label
        elif node.id != root:
            properties[node.id] = node.label
    declarations = {root: ast.signature or ast.routine_name}

    e_pd: list[tuple[int, int]] = []
    e_pp: list[tuple[int, int]] = []
    e_tp: list[tuple[int, int]] = []
    # Walk in frontier order so edge lists read in source order.
    stack = [root]
    order = []
    while stack:
        nid = stack.pop()
        order.append(nid)
        node = ast.nodes[nid]
        if node.kind == PROPERTY:
            stack.extend(reversed(node.children))
    for nid in order:
        node = ast.nodes[nid]
        if node.kind != PROPERTY:
            continue
        for child in node.children:
            ck = ast.nodes[child].kind
            if nid == root:
                if ck == PROPERTY:
                    e_pd.append((child, root))
                # token child of the root: covered by e_td below
            elif ck == PROPERTY:
                e_pp.append((child, nid))
            else:
                e_tp.append((child, nid))

    frontier = token_frontier(ast)
    e_tt = [(frontier[i][0], frontier[i + 1][0]) for i in range(len(frontier) - 1)]
    e_td = [(tid, root) for tid, _ in frontier]

    return Ipag(
        origin=ast.routine_name,
        stage=Stage.PRELIMINARY,
        tokens=tokens,
        properties=properties,
        declarations=declarations,
        e_pd=e_pd,
        e_pp=e_pp,
        e_tp=e_tp,
        e_tt=e_tt,
        e_td=e_td,
        e_dt=[],
        root_decl=root,
        language=ast.language,
    )


def validate_ipag(g: Ipag) -> list[Violation]:
    """Check every Ipag invariant; violations are data, not errors."""
    violations: list[Violation] = []
    sets = {"t": g.tokens, "p": g.properties, "d": g.declarations}

    ids: dict[int, str] = {}
    for key, nodes in sets.items():
        for nid in nodes:
            if nid in ids:
                violations.append(
                    Violation(
                        "node-sets-disjoint",
                        f"node {nid}",
                        f"appears in both {ids[nid]!r} and {key!r} node sets",
                    )
                )
            ids[nid] = key

    seen_edges: dict[tuple[int, int], str] = {}
    for kind in EDGE_KINDS:
        src_set, dst_set = EDGE_SIGNATURES[kind]
        for src, dst in g.edges(kind):
            if src not in sets[src_set]:
                violations.append(
                    Violation(
                        "edge-signature",
                        f"{kind} edge ({src}, {dst})",
                        f"source {src} is not a {src_set!r} node",
                    )
                )
            if dst not in sets[dst_set]:
                violations.append(
                    Violation(
                        "edge-signature",
                        f"{kind} edge ({src}, {dst})",
                        f"target {dst} is not a {dst_set!r} node",
                    )
                )
            if (src, dst) in seen_edges and seen_edges[(src, dst)] != kind:
                violations.append(
                    Violation(
                        "edge-lists-disjoint",
                        f"edge ({src}, {dst})",
                        f"present in both {seen_edges[(src, dst)]} and {kind}",
                    )
                )
            seen_edges.setdefault((src, dst), kind)

    if g.stage != Stage.COMPLETE:
        if g.e_dt:
            violations.append(
                Violation(
                    "stage-e-dt-empty",
                    f"stage {g.stage.value}",
                    f"{len(g.e_dt)} e_dt edges present before the complete stage",
                )
            )
        if len(g.declarations) != 1:
            violations.append(
                Violation(
                    "stage-single-declaration",
                    f"stage {g.stage.value}",
                    f"{len(g.declarations)} declaration nodes (want exactly 1)",
                )
            )

    violations.extend(_validate_token_paths(g))
    return violations


def _validate_token_paths(g: Ipag) -> list[Violation]:
    """e_tt must form one simple path over each routine's tokens.

    Routine membership comes from e_td (each token points at its routine's
    declaration node).
    """
    violations = []
    routine_of: dict[int, int] = {}
    for tok, decl in g.e_td:
        if tok in routine_of and routine_of[tok] != decl:
            violations.append(
                Violation(
                    "token-single-declaration",
                    f"token {tok}",
                    "has e_td edges to more than one declaration",
                )
            )
        routine_of[tok] = decl
    for tok in g.tokens:
        if tok not in routine_of and tok in {n for e in g.e_tt for n in e}:
            violations.append(
                Violation("token-missing-e-td", f"token {tok}", "token has no e_td edge")
            )

    groups: dict[int, set[int]] = {}
    for tok, decl in routine_of.items():
        groups.setdefault(decl, set()).add(tok)

    out_deg: dict[int, int] = {}
    in_deg: dict[int, int] = {}
    for src, dst in g.e_tt:
        if routine_of.get(src) != routine_of.get(dst):
            violations.append(
                Violation(
                    "token-path-within-routine",
                    f"e_tt edge ({src}, {dst})",
                    "crosses routines (endpoints have different declarations)",
                )
            )
            continue
        out_deg[src] = out_deg.get(src, 0) + 1
        in_deg[dst] = in_deg.get(dst, 0) + 1

    for nid, deg in out_deg.items():
        if deg > 1:
            violations.append(
                Violation("token-path-simple", f"token {nid}", f"out-degree {deg} in e_tt")
            )
    for nid, deg in in_deg.items():
        if deg > 1:
            violations.append(
                Violation("token-path-simple", f"token {nid}", f"in-degree {deg} in e_tt")
            )
    if not any(v.rule.startswith("token-path") for v in violations):
        within: dict[int, int] = {}
        for src, dst in g.e_tt:
            decl = routine_of.get(src)
            if decl is not None and decl == routine_of.get(dst):
                within[decl] = within.get(decl, 0) + 1
        for decl, toks in groups.items():
            expected = len(toks) - 1
            got = within.get(decl, 0)
            if got != expected:
                violations.append(
                    Violation(
                        "token-path-covers",
                        f"declaration {decl}",
                        f"{got} e_tt edges over {len(toks)} tokens (want {expected})",
                    )
                )
    return violations


# --- corpus serialization -------------------------------------------------


def ipag_to_dict(g: Ipag) -> dict:
    return {
        "origin": g.origin,
        "language": g.language,
        "stage": g.stage.value,
        "root_decl": g.root_decl,
        "tokens": sorted(g.tokens.items()),
        "properties": sorted(g.properties.items()),
        "declarations": sorted(g.declarations.items()),
        **{k: [list(e) for e in g.edges(k)] for k in EDGE_KINDS},
    }


def ipag_from_dict(doc: dict) -> Ipag:
    try:
        return Ipag(
            origin=doc["origin"],
            stage=Stage(doc["stage"]),
            tokens={int(i): s for i, s in doc["tokens"]},
            properties={int(i): s for i, s in doc["properties"]},
            declarations={int(i): s for i, s in doc["declarations"]},
            root_decl=int(doc["root_decl"]),
            language=doc.get("language", "c"),
            **{k: [(int(a), int(b)) for a, b in doc[k]] for k in EDGE_KINDS},
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise InterchangeError(f"malformed graph record: {exc}") from exc


def save_corpus(graphs: list[Ipag], path: str) -> None:
    stages = {g.stage for g in graphs}
    doc = {
        "version": 1,
        "kind": "ipag-corpus",
        "stage": stages.pop().value if len(stages) == 1 else "mixed",
        "graphs": [ipag_to_dict(g) for g in graphs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_corpus(path: str, expect_stage: Stage | None = None) -> list[Ipag]:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"malformed corpus file: {exc.msg}", exc.pos) from exc
    if doc.get("kind") != "ipag-corpus" or doc.get("version") != 1:
        raise InterchangeError("not a version-1 ipag-corpus file")
    graphs = [ipag_from_dict(entry) for entry in doc.get("graphs", [])]
    if expect_stage is not None:
        for g in graphs:
            require_stage(g, expect_stage, step=f"loading {path}")
    return graphs

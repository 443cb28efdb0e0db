"""AST domain types, validation, token frontier, and interchange I/O.

An Ast is a rooted ordered tree of property nodes (non-terminals named after
syntactic constructs) and token nodes (terminal lexemes). Token nodes are
always leaves; child order is source order, so the in-order frontier of token
labels is exactly the retained token stream of the routine.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

from ..errors import AstValidationError, InterchangeError

log = logging.getLogger(__name__)

PROPERTY = "property"
TOKEN = "token"

LANGUAGES = ("c", "java", "other")


@dataclass
class AstNode:
    id: int
    kind: str  # PROPERTY or TOKEN
    label: str
    children: list[int] = field(default_factory=list)
    span: tuple[int, int] | None = None  # (line, col)


@dataclass
class Ast:
    """One routine's syntax tree.

    signature is the printable declaration text used to label the routine's
    declaration node downstream; parsers fill it, interchange loaders fall
    back to the routine name.
    """

    nodes: dict[int, AstNode]
    root: int
    routine_name: str
    language: str = "c"
    source_hash: str = ""
    signature: str = ""

    def __post_init__(self):
        if not self.signature:
            self.signature = self.routine_name
        if not self.source_hash:
            self.source_hash = hashlib.sha256(
                " ".join(label for _, label in token_frontier(self)).encode()
            ).hexdigest()

    def node(self, node_id: int) -> AstNode:
        return self.nodes[node_id]


@dataclass
class RoutineCorpus:
    asts: list[Ast]
    index: dict[str, Ast] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            for ast in self.asts:
                if ast.routine_name in self.index:
                    log.warning(
                        "duplicate routine %r: last definition wins for call resolution",
                        ast.routine_name,
                    )
                self.index[ast.routine_name] = ast


def token_frontier(ast: Ast) -> list[tuple[int, str]]:
    """Left-to-right in-order list of (node id, label) over terminal nodes."""
    out: list[tuple[int, str]] = []
    stack = [ast.root]
    while stack:
        nid = stack.pop()
        node = ast.nodes[nid]
        if node.kind == TOKEN:
            out.append((nid, node.label))
        else:
            stack.extend(reversed(node.children))
    return out


def validate_ast(ast: Ast) -> list[str]:
    """Check Ast invariants; returns human-readable violations (empty = valid)."""
    violations: list[str] = []
    if ast.root not in ast.nodes:
        return [f"root id {ast.root} not present"]
    if ast.nodes[ast.root].kind != PROPERTY:
        violations.append(f"node {ast.root}: root must be a property node")
    if ast.language not in LANGUAGES:
        violations.append(f"language {ast.language!r} not one of {LANGUAGES}")
    parents: dict[int, int] = {}
    for node in ast.nodes.values():
        if node.kind == TOKEN and node.children:
            violations.append(f"node {node.id}: token nodes have zero children")
        for child in node.children:
            if child not in ast.nodes:
                violations.append(f"node {node.id}: child {child} does not exist")
                continue
            if child in parents:
                violations.append(f"node {child}: has more than one parent")
            parents[child] = node.id
    for node in ast.nodes.values():
        if node.id != ast.root and node.id not in parents:
            violations.append(f"node {node.id}: unreachable (no parent, not root)")
    # Cycle / connectivity: a tree with unique parents and a reachable root is
    # acyclic iff every node is reached from the root.
    seen = set()
    stack = [ast.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            violations.append(f"node {nid}: cycle detected")
            break
        seen.add(nid)
        stack.extend(ast.nodes[nid].children if nid in ast.nodes else [])
    if len(seen) != len(ast.nodes) and not violations:
        violations.append("graph is not connected")
    return violations


# --- AST interchange format ---------------------------------------------
#
# One file per corpus:
#   {"version": 1, "routines": [
#       {"name": ..., "language": ..., "root": ...,
#        "nodes": [{"id", "kind", "label", "children", "line"?, "col"?}]}]}
# Token children lists are empty; ids are dense from 0.


def export_ast_interchange(asts: list[Ast]) -> dict:
    """Serialize a corpus to the interchange structure (dense ids from 0)."""
    routines = []
    for ast in asts:
        remap = {nid: i for i, nid in enumerate(sorted(ast.nodes))}
        nodes = []
        for nid in sorted(ast.nodes):
            node = ast.nodes[nid]
            entry = {
                "id": remap[nid],
                "kind": node.kind,
                "label": node.label,
                "children": [remap[c] for c in node.children],
            }
            if node.span is not None:
                entry["line"], entry["col"] = node.span
            nodes.append(entry)
        routines.append(
            {
                "name": ast.routine_name,
                "language": ast.language,
                "signature": ast.signature,
                "root": remap[ast.root],
                "nodes": nodes,
            }
        )
    return {"version": 1, "routines": routines}


def save_ast_interchange(asts: list[Ast], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(export_ast_interchange(asts), fh, indent=1, sort_keys=True)


def load_ast_interchange(path: str) -> RoutineCorpus:
    """Load and validate an interchange corpus file.

    Malformed JSON raises InterchangeError with the byte offset; invariant
    violations raise AstValidationError naming node and rule.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"malformed interchange file: {exc.msg}", exc.pos) from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise InterchangeError("unsupported interchange version (want 1)")
    routines = doc.get("routines")
    if not isinstance(routines, list):
        raise InterchangeError("missing 'routines' list")
    asts: list[Ast] = []
    for entry in routines:
        try:
            nodes = {
                n["id"]: AstNode(
                    id=n["id"],
                    kind=n["kind"],
                    label=n["label"],
                    children=list(n.get("children", [])),
                    span=(n["line"], n["col"]) if "line" in n and "col" in n else None,
                )
                for n in entry["nodes"]
            }
            ast = Ast(
                nodes=nodes,
                root=entry["root"],
                routine_name=entry["name"],
                language=entry.get("language", "other"),
                signature=entry.get("signature", ""),
            )
        except (KeyError, TypeError) as exc:
            raise InterchangeError(f"routine entry missing field: {exc}") from exc
        problems = validate_ast(ast)
        if problems:
            raise AstValidationError(
                f"routine {ast.routine_name!r}: " + "; ".join(problems)
            )
        asts.append(ast)
    return RoutineCorpus(asts=asts)

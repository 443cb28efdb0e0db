"""Seeded random generators shared by the test suite.

Everything here is test-side tooling: mini-C source text with a known DAG
call structure, random ASTs with recorded emission order, and small random
graphs for message-passing oracles.
"""

from __future__ import annotations

import random

from ipag.frontend.astmodel import PROPERTY, TOKEN, Ast, AstNode

TYPES = ["int", "long", "char", "unsigned int", "float"]
NAMED_TYPES = ["bfd", "asection", "arelent"]
BINOPS = ["+", "-", "*", "/", "%", "==", "!=", "<", ">", "&&", "||"]


class MiniCGenerator:
    """Random mini-C routines; call targets are passed in so call graphs
    stay acyclic by construction."""

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self._uid = 0

    def fresh(self, prefix: str) -> str:
        self._uid += 1
        return f"{prefix}{self._uid}"

    def expr(self, names: list[str], depth: int = 0) -> str:
        r = self.rng
        if depth >= 2 or r.random() < 0.4:
            if names and r.random() < 0.6:
                return r.choice(names)
            return str(r.randrange(0, 100))
        kind = r.randrange(4)
        if kind == 0:
            return f"{self.expr(names, depth + 1)} {r.choice(BINOPS)} {self.expr(names, depth + 1)}"
        if kind == 1:
            return f"{r.choice(['-', '!', '~'])}{self.expr(names, depth + 1)}"
        if kind == 2 and names:
            return f"{r.choice(names)}[{self.expr(names, depth + 1)}]"
        return f"({self.expr(names, depth + 1)})"

    def statement(self, names: list[str], callees: list[str], depth: int = 0) -> str:
        r = self.rng
        choices = ["decl", "assign", "ret"]
        if depth < 2:
            choices += ["if", "while", "for"]
        if callees:
            choices += ["call", "call"]
        kind = r.choice(choices)
        if kind == "decl":
            name = self.fresh("v")
            names.append(name)
            return f"{r.choice(TYPES)} {name} = {self.expr(names[:-1] or ['0'])};"
        if kind == "assign" and names:
            return f"{r.choice(names)} = {self.expr(names)};"
        if kind == "ret":
            return f"return {self.expr(names)};"
        if kind == "if":
            body = self.statement(names, callees, depth + 1)
            if r.random() < 0.4:
                return (
                    f"if ({self.expr(names)}) {{ {body} }} "
                    f"else {{ {self.statement(names, callees, depth + 1)} }}"
                )
            return f"if ({self.expr(names)}) {{ {body} }}"
        if kind == "while":
            return f"while ({self.expr(names)}) {{ {self.statement(names, callees, depth + 1)} }}"
        if kind == "for":
            v = self.fresh("i")
            names.append(v)
            return (
                f"for (int {v} = 0; {v} < {r.randrange(2, 20)}; {v} = {v} + 1) "
                f"{{ {self.statement(names, callees, depth + 1)} }}"
            )
        if kind == "call" and callees:
            callee = r.choice(callees)
            args = ", ".join(
                r.choice(names) if names and r.random() < 0.7 else str(r.randrange(10))
                for _ in range(r.randrange(1, 3))
            )
            return f"{callee}({args});"
        return f"return {self.expr(names)};"

    def routine(self, name: str, callees: list[str], n_statements: int | None = None) -> str:
        """Filler statements plus one guaranteed call statement per callee
        (identifier arguments, so the call site compresses and links)."""
        r = self.rng
        n_params = r.randrange(0, 3)
        params = []
        names = []
        for _ in range(n_params):
            p = self.fresh("p")
            names.append(p)
            if r.random() < 0.3:
                params.append(f"{r.choice(NAMED_TYPES)} *{p}")
            else:
                params.append(f"{r.choice(TYPES)} {p}")
        body = []
        count = n_statements if n_statements is not None else r.randrange(2, 6)
        for _ in range(count):
            body.append("    " + self.statement(names, []))
        for callee in callees:
            pool = names or ["1", "2"]
            args = ", ".join(r.choice(pool) for _ in range(r.randrange(1, 3)))
            body.append(f"    {callee}({args});")
        spec = r.choice(["int", "void", "static int", "long"])
        return f"{spec} {name}({', '.join(params)}) {{\n" + "\n".join(body) + "\n}\n"

    def corpus(self, n_routines: int, call_density: float = 0.5) -> str:
        """Routines r0..r{n-1}; ri may call rj only for j < i (a DAG)."""
        parts = []
        names = []
        for i in range(n_routines):
            name = f"r{i}"
            callees = []
            if names and self.rng.random() < call_density:
                callees = self.rng.sample(names, k=min(len(names), self.rng.randrange(1, 3)))
            parts.append(self.routine(name, callees))
            names.append(name)
        return "\n".join(parts)


def gen_labeled_call_corpus(seed: int, n_per_class: int = 30) -> tuple[str, dict[str, str]]:
    """A separable corpus: half the routines call sink_handler, half call
    safe_helper; the label is exactly 'calls the sink'."""
    gen = MiniCGenerator(seed)
    parts = [
        "int sink_handler(int a, int b) {\n    int z = a * b + 7;\n    return z - a;\n}\n",
        "int safe_helper(int a, int b) {\n    int w = a + b;\n    return w;\n}\n",
    ]
    labels: dict[str, str] = {}
    for i in range(2 * n_per_class):
        vulnerable = i % 2 == 0
        callee = "sink_handler" if vulnerable else "safe_helper"
        name = f"routine_{i}"
        parts.append(gen.routine(name, [callee]))
        labels[name] = "vulnerable" if vulnerable else "non-vulnerable"
    return "\n".join(parts), labels


def gen_random_ast(seed: int, max_children: int = 4, max_depth: int = 5) -> tuple[Ast, list[str]]:
    """Random valid Ast plus the generator's own token emission order."""
    rng = random.Random(seed)
    labels = ["CompoundStatement", "ExpressionStatement", "BinaryExpression",
              "IdExpression", "Name", "LiteralExpression", "UnaryExpression"]
    nodes: dict[int, AstNode] = {}
    emitted: list[str] = []
    counter = [0]

    def alloc() -> int:
        counter[0] += 1
        return counter[0] - 1

    def build(depth: int) -> int:
        nid = alloc()
        if depth >= max_depth or (depth > 0 and rng.random() < 0.3):
            text = f"tok{nid}"
            nodes[nid] = AstNode(nid, TOKEN, text, [])
            emitted.append(text)
            return nid
        node = AstNode(nid, PROPERTY, rng.choice(labels), [])
        nodes[nid] = node
        for _ in range(rng.randrange(1, max_children + 1)):
            node.children.append(build(depth + 1))
        return nid

    root_id = alloc()
    root = AstNode(root_id, PROPERTY, "FunctionDefinition", [])
    nodes[root_id] = root
    for _ in range(rng.randrange(1, max_children + 1)):
        root.children.append(build(1))
    ast = Ast(nodes=nodes, root=root_id, routine_name=f"gen{seed}", language="other")
    return ast, emitted

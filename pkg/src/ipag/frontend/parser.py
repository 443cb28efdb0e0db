"""Recursive-descent parser for the mini-C subset.

Produces one Ast per function definition. The trees follow the property
vocabulary of Eclipse-CDT-style C ASTs (FunctionDefinition root with
SimpleDeclSpecifier / FunctionDeclarator / CompoundStatement children, and
so on). Only semantically meaningful lexemes survive as token nodes:

  * declaration-specifier text is merged into a single token ("static void",
    "unsigned long"); named (typedef) types keep their name token;
  * identifiers, literals, operators, and control keywords are tokens;
  * structural punctuation — parens, braces, brackets, commas, semicolons,
    case-label colons — is consumed but not retained (the tree holds the
    grouping, the token chain holds the order).

Supported constructs: types and pointers, parameters (including function
pointers and abstract declarators), compound statements, if/for/while/do/
switch/return/break/continue, declarations with initializers (including
brace initializer lists), and expressions with calls, literals, unary and
binary operators, assignments, conditionals, array subscripts, member
references, and pointer-style casts. Anything else raises
UnsupportedConstructError naming the construct.
"""

from __future__ import annotations

import importlib.resources

from ..errors import MiniCSyntaxError, UnsupportedConstructError
from .astmodel import PROPERTY, TOKEN, Ast, AstNode, token_frontier, validate_ast
from .lexer import STORAGE_QUALIFIER_KEYWORDS, TYPE_KEYWORDS, Lexeme, tokenize

ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}

# Binary precedence levels, loosest first.
BINARY_LEVELS = [
    {"||"},
    {"&&"},
    {"|"},
    {"^"},
    {"&"},
    {"==", "!="},
    {"<", ">", "<=", ">="},
    {"<<", ">>"},
    {"+", "-"},
    {"*", "/", "%"},
]

UNARY_PREFIX = {"!", "~", "-", "+", "*", "&", "++", "--"}

UNSUPPORTED_KEYWORDS = {
    "struct": "struct definition or reference",
    "union": "union definition or reference",
    "enum": "enum definition or reference",
    "typedef": "typedef",
    "goto": "goto",
    "sizeof": "sizeof",
}


def mini_c_property_names() -> frozenset[str]:
    """Property labels the parser may emit (the configured vocabulary file)."""
    text = (
        importlib.resources.files("ipag.data")
        .joinpath("c_property_names.txt")
        .read_text(encoding="utf-8")
    )
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


class _Builder:
    """Accumulates nodes for one function definition."""

    def __init__(self):
        self.nodes: dict[int, AstNode] = {}
        self._next = 0

    def _alloc(self) -> int:
        nid = self._next
        self._next += 1
        return nid

    def prop(self, label: str, children: list[int], span=None) -> int:
        nid = self._alloc()
        self.nodes[nid] = AstNode(nid, PROPERTY, label, list(children), span)
        return nid

    def tok(self, text: str, span=None) -> int:
        nid = self._alloc()
        self.nodes[nid] = AstNode(nid, TOKEN, text, [], span)
        return nid


class _Parser:
    def __init__(self, lexemes: list[Lexeme]):
        self.lx = lexemes
        self.pos = 0
        self.b: _Builder = _Builder()

    # --- cursor helpers ---------------------------------------------

    def peek(self, offset: int = 0) -> Lexeme | None:
        i = self.pos + offset
        return self.lx[i] if i < len(self.lx) else None

    def at(self, text: str, offset: int = 0) -> bool:
        lx = self.peek(offset)
        return lx is not None and lx.text == text

    def take(self) -> Lexeme:
        lx = self.peek()
        if lx is None:
            last = self.lx[-1] if self.lx else None
            raise MiniCSyntaxError(
                "unexpected end of input",
                last.line if last else 1,
                last.col if last else 1,
            )
        self.pos += 1
        return lx

    def expect(self, text: str) -> Lexeme:
        lx = self.peek()
        if lx is None or lx.text != text:
            got = lx.text if lx else "end of input"
            line = lx.line if lx else (self.lx[-1].line if self.lx else 1)
            col = lx.col if lx else (self.lx[-1].col if self.lx else 1)
            raise MiniCSyntaxError(f"expected {text!r}, got {got!r}", line, col)
        self.pos += 1
        return lx

    def fail_unsupported(self, construct: str):
        lx = self.peek() or self.lx[-1]
        raise UnsupportedConstructError(construct, lx.line, lx.col)

    # --- specifier -----------------------------------------------------

    def at_specifier_start(self, offset: int = 0) -> bool:
        lx = self.peek(offset)
        if lx is None:
            return False
        return lx.kind == "keyword" and (
            lx.text in TYPE_KEYWORDS or lx.text in STORAGE_QUALIFIER_KEYWORDS
        )

    def parse_specifier(self) -> tuple[int, str]:
        """Parse declaration-specifier words; returns (node id, printable text).

        Built-in types (plus any qualifiers) collapse into one
        SimpleDeclSpecifier with a single merged token; a typedef-style name
        yields NamedTypeSpecifier -> Name -> name token.
        """
        first = self.peek()
        if first is not None and first.kind == "keyword" and first.text in UNSUPPORTED_KEYWORDS:
            self.fail_unsupported(UNSUPPORTED_KEYWORDS[first.text])
        words: list[str] = []
        span = None
        saw_type_keyword = False
        while self.at_specifier_start():
            lx = self.take()
            if span is None:
                span = (lx.line, lx.col)
            words.append(lx.text)
            saw_type_keyword = saw_type_keyword or lx.text in TYPE_KEYWORDS
        if saw_type_keyword:
            text = " ".join(words)
            node = self.b.prop("SimpleDeclSpecifier", [self.b.tok(text, span)], span)
            return node, text
        nxt = self.peek()
        if nxt is not None and nxt.kind == "identifier":
            name_lx = self.take()
            children = []
            if words:  # qualifiers before a named type keep their own token
                children.append(self.b.tok(" ".join(words), span))
            name_node = self.b.prop(
                "Name", [self.b.tok(name_lx.text, (name_lx.line, name_lx.col))]
            )
            children.append(name_node)
            node = self.b.prop("NamedTypeSpecifier", children, span or (name_lx.line, name_lx.col))
            return node, " ".join(words + [name_lx.text])
        got = nxt.text if nxt else "end of input"
        line = nxt.line if nxt else 1
        col = nxt.col if nxt else 1
        raise MiniCSyntaxError(f"expected type specifier, got {got!r}", line, col)

    # --- declarators -----------------------------------------------------

    def parse_pointers(self) -> tuple[list[int], int]:
        nodes = []
        count = 0
        while self.at("*"):
            lx = self.take()
            nodes.append(self.b.prop("Pointer", [self.b.tok("*", (lx.line, lx.col))]))
            count += 1
        return nodes, count

    def parse_param_declarator(self) -> tuple[int | None, list[str]]:
        """Parameter declarator: pointers, optional name, optional function
        pointer or array suffix. Returns (node or None, printable words)."""
        words: list[str] = []
        if self.at("("):  # function-pointer declarator: ( * name? ) ( params )
            self.take()
            ptrs, nptr = self.parse_pointers()
            words.extend(["*"] * nptr)
            inner_children = list(ptrs)
            if self.peek() is not None and self.peek().kind == "identifier":
                lx = self.take()
                words.append(lx.text)
                inner_children.append(
                    self.b.prop("Name", [self.b.tok(lx.text, (lx.line, lx.col))])
                )
            self.expect(")")
            inner = self.b.prop("Declarator", inner_children)
            self.expect("(")
            params, pwords = self.parse_parameter_list()
            words.append("(" + ", ".join(pwords) + ")")
            return self.b.prop("FunctionDeclarator", [inner] + params), words
        ptrs, nptr = self.parse_pointers()
        words.extend(["*"] * nptr)
        children = list(ptrs)
        name_node = None
        if self.peek() is not None and self.peek().kind == "identifier":
            lx = self.take()
            words.append(lx.text)
            name_node = self.b.prop("Name", [self.b.tok(lx.text, (lx.line, lx.col))])
            children.append(name_node)
        if self.at("["):
            self.take()
            if not self.at("]"):
                children.append(self.parse_assignment())
            self.expect("]")
            return self.b.prop("ArrayDeclarator", children), words
        if not children:
            return None, words
        return self.b.prop("Declarator", children), words

    def parse_parameter_list(self) -> tuple[list[int], list[str]]:
        """Parses up to and including the closing paren."""
        params: list[int] = []
        words: list[str] = []
        if self.at(")"):
            self.take()
            return params, words
        if self.at("void") and self.at(")", 1):  # (void) means no parameters
            self.take()
            self.take()
            return params, ["void"]
        while True:
            if self.at("..."):
                self.fail_unsupported("variadic parameters")
            spec, spec_text = self.parse_specifier()
            decl, dwords = self.parse_param_declarator()
            children = [spec] + ([decl] if decl is not None else [])
            params.append(self.b.prop("ParameterDeclaration", children))
            words.append(" ".join([spec_text] + dwords))
            if self.at(","):
                self.take()
                continue
            self.expect(")")
            return params, words

    # --- statements ------------------------------------------------------

    def at_declaration_start(self) -> bool:
        lx = self.peek()
        if lx is None:
            return False
        if lx.kind == "keyword":
            return lx.text in TYPE_KEYWORDS or lx.text in STORAGE_QUALIFIER_KEYWORDS
        if lx.kind != "identifier":
            return False
        # typedef-name heuristic: id ('*')* id followed by ; = , or [
        k = 1
        while self.at("*", k):
            k += 1
        nxt = self.peek(k)
        if nxt is None or nxt.kind != "identifier":
            return False
        if k == 1:  # "id id" needs a declarator-ish continuation
            after = self.peek(2)
            return after is not None and after.text in {";", "=", ",", "[", "("}
        return True

    def parse_declaration_body(self) -> int:
        """Specifier plus comma-separated declarators -> SimpleDeclaration.
        Caller consumes the trailing ';'."""
        spec, _ = self.parse_specifier()
        children = [spec]
        while True:
            decl = self.parse_init_declarator()
            children.append(decl)
            if self.at(","):
                self.take()
                continue
            break
        return self.b.prop("SimpleDeclaration", children)

    def parse_init_declarator(self) -> int:
        ptrs, _ = self.parse_pointers()
        children = list(ptrs)
        lx = self.peek()
        if lx is None or lx.kind != "identifier":
            got = lx.text if lx else "end of input"
            raise MiniCSyntaxError(
                f"expected declarator name, got {got!r}",
                lx.line if lx else 1,
                lx.col if lx else 1,
            )
        lx = self.take()
        children.append(self.b.prop("Name", [self.b.tok(lx.text, (lx.line, lx.col))]))
        label = "Declarator"
        if self.at("["):
            label = "ArrayDeclarator"
            self.take()
            if not self.at("]"):
                children.append(self.parse_assignment())
            self.expect("]")
        if self.at("="):
            eq = self.take()
            children.append(self.b.tok("=", (eq.line, eq.col)))
            children.append(self.parse_initializer())
        return self.b.prop(label, children)

    def parse_initializer(self) -> int:
        if self.at("{"):
            self.take()
            items = []
            if not self.at("}"):
                while True:
                    items.append(self.parse_initializer())
                    if self.at(","):
                        self.take()
                        if self.at("}"):
                            break
                        continue
                    break
            self.expect("}")
            return self.b.prop("InitializerList", items)
        return self.parse_assignment()

    def parse_compound(self) -> int:
        open_lx = self.expect("{")
        children = []
        while not self.at("}"):
            if self.peek() is None:
                raise MiniCSyntaxError("unterminated block", open_lx.line, open_lx.col)
            stmt = self.parse_statement()
            if stmt is not None:
                children.append(stmt)
        self.expect("}")
        return self.b.prop("CompoundStatement", children, (open_lx.line, open_lx.col))

    def parse_statement(self) -> int | None:
        lx = self.peek()
        if lx is None:
            raise MiniCSyntaxError("expected statement", 1, 1)
        if lx.text == ";":  # empty statement contributes nothing
            self.take()
            return None
        if lx.text == "{":
            return self.parse_compound()
        if lx.kind == "keyword":
            if lx.text in UNSUPPORTED_KEYWORDS:
                self.fail_unsupported(UNSUPPORTED_KEYWORDS[lx.text])
            if lx.text == "if":
                return self.parse_if()
            if lx.text == "for":
                return self.parse_for()
            if lx.text == "while":
                return self.parse_while()
            if lx.text == "do":
                return self.parse_do()
            if lx.text == "switch":
                return self.parse_switch()
            if lx.text == "return":
                kw = self.take()
                children = [self.b.tok("return", (kw.line, kw.col))]
                if not self.at(";"):
                    children.append(self.parse_expression())
                self.expect(";")
                return self.b.prop("ReturnStatement", children, (kw.line, kw.col))
            if lx.text == "break":
                kw = self.take()
                self.expect(";")
                return self.b.prop(
                    "BreakStatement", [self.b.tok("break", (kw.line, kw.col))]
                )
            if lx.text == "continue":
                kw = self.take()
                self.expect(";")
                return self.b.prop(
                    "ContinueStatement", [self.b.tok("continue", (kw.line, kw.col))]
                )
            if lx.text == "case":
                kw = self.take()
                children = [self.b.tok("case", (kw.line, kw.col)), self.parse_expression()]
                self.expect(":")
                return self.b.prop("CaseStatement", children)
            if lx.text == "default":
                kw = self.take()
                self.expect(":")
                return self.b.prop(
                    "DefaultStatement", [self.b.tok("default", (kw.line, kw.col))]
                )
        if self.at_declaration_start():
            decl = self.parse_declaration_body()
            self.expect(";")
            return self.b.prop("DeclarationStatement", [decl])
        expr = self.parse_expression()
        self.expect(";")
        return self.b.prop("ExpressionStatement", [expr])

    def parse_if(self) -> int:
        kw = self.take()
        children = [self.b.tok("if", (kw.line, kw.col))]
        self.expect("(")
        children.append(self.parse_expression())
        self.expect(")")
        then = self.parse_statement()
        children.append(then if then is not None else self.b.prop("CompoundStatement", []))
        if self.at("else"):
            el = self.take()
            children.append(self.b.tok("else", (el.line, el.col)))
            stmt = self.parse_statement()
            children.append(stmt if stmt is not None else self.b.prop("CompoundStatement", []))
        return self.b.prop("IfStatement", children, (kw.line, kw.col))

    def parse_while(self) -> int:
        kw = self.take()
        children = [self.b.tok("while", (kw.line, kw.col))]
        self.expect("(")
        children.append(self.parse_expression())
        self.expect(")")
        body = self.parse_statement()
        children.append(body if body is not None else self.b.prop("CompoundStatement", []))
        return self.b.prop("WhileStatement", children, (kw.line, kw.col))

    def parse_do(self) -> int:
        kw = self.take()
        children = [self.b.tok("do", (kw.line, kw.col))]
        body = self.parse_statement()
        children.append(body if body is not None else self.b.prop("CompoundStatement", []))
        wh = self.expect("while")
        children.append(self.b.tok("while", (wh.line, wh.col)))
        self.expect("(")
        children.append(self.parse_expression())
        self.expect(")")
        self.expect(";")
        return self.b.prop("DoStatement", children, (kw.line, kw.col))

    def parse_for(self) -> int:
        kw = self.take()
        children = [self.b.tok("for", (kw.line, kw.col))]
        self.expect("(")
        if self.at(";"):
            self.take()
        elif self.at_declaration_start():
            decl = self.parse_declaration_body()
            self.expect(";")
            children.append(self.b.prop("DeclarationStatement", [decl]))
        else:
            init = self.parse_expression()
            self.expect(";")
            children.append(self.b.prop("ExpressionStatement", [init]))
        if not self.at(";"):
            children.append(self.parse_expression())
        self.expect(";")
        if not self.at(")"):
            children.append(self.parse_expression())
        self.expect(")")
        body = self.parse_statement()
        children.append(body if body is not None else self.b.prop("CompoundStatement", []))
        return self.b.prop("ForStatement", children, (kw.line, kw.col))

    def parse_switch(self) -> int:
        kw = self.take()
        children = [self.b.tok("switch", (kw.line, kw.col))]
        self.expect("(")
        children.append(self.parse_expression())
        self.expect(")")
        body = self.parse_statement()
        children.append(body if body is not None else self.b.prop("CompoundStatement", []))
        return self.b.prop("SwitchStatement", children, (kw.line, kw.col))

    # --- expressions -------------------------------------------------

    def parse_expression(self) -> int:
        return self.parse_assignment()

    def parse_assignment(self) -> int:
        left = self.parse_conditional()
        lx = self.peek()
        if lx is not None and lx.text in ASSIGN_OPS:
            op = self.take()
            right = self.parse_assignment()
            return self.b.prop(
                "BinaryExpression", [left, self.b.tok(op.text, (op.line, op.col)), right]
            )
        return left

    def parse_conditional(self) -> int:
        cond = self.parse_binary(0)
        if self.at("?"):
            q = self.take()
            then = self.parse_expression()
            colon = self.expect(":")
            other = self.parse_conditional()
            return self.b.prop(
                "ConditionalExpression",
                [
                    cond,
                    self.b.tok("?", (q.line, q.col)),
                    then,
                    self.b.tok(":", (colon.line, colon.col)),
                    other,
                ],
            )
        return cond

    def parse_binary(self, level: int) -> int:
        if level >= len(BINARY_LEVELS):
            return self.parse_unary()
        ops = BINARY_LEVELS[level]
        left = self.parse_binary(level + 1)
        while True:
            lx = self.peek()
            if lx is None or lx.text not in ops:
                return left
            op = self.take()
            right = self.parse_binary(level + 1)
            left = self.b.prop(
                "BinaryExpression", [left, self.b.tok(op.text, (op.line, op.col)), right]
            )

    def at_cast(self) -> bool:
        """A '(' opens a cast when it wraps a type: builtin keyword, or an
        identifier whose trailing '*'s run straight into ')' — which tells a
        pointer cast like (bfd *) apart from grouping like (a * b)."""
        if not self.at("("):
            return False
        nxt = self.peek(1)
        if nxt is None:
            return False
        if nxt.kind == "keyword" and (
            nxt.text in TYPE_KEYWORDS or nxt.text in STORAGE_QUALIFIER_KEYWORDS
        ):
            return True
        if nxt.kind != "identifier" or not self.at("*", 2):
            return False
        k = 2
        while self.at("*", k):
            k += 1
        return self.at(")", k)

    def parse_unary(self) -> int:
        lx = self.peek()
        if lx is not None and lx.text in UNARY_PREFIX:
            op = self.take()
            operand = self.parse_unary()
            return self.b.prop(
                "UnaryExpression", [self.b.tok(op.text, (op.line, op.col)), operand]
            )
        if lx is not None and lx.text == "sizeof":
            self.fail_unsupported("sizeof")
        if self.at_cast():
            self.take()  # (
            spec, _ = self.parse_specifier()
            ptrs, _ = self.parse_pointers()
            type_children = [spec]
            if ptrs:
                type_children.append(self.b.prop("Declarator", ptrs))
            type_id = self.b.prop("TypeId", type_children)
            self.expect(")")
            operand = self.parse_unary()
            return self.b.prop("CastExpression", [type_id, operand])
        return self.parse_postfix()

    def parse_postfix(self) -> int:
        node = self.parse_primary()
        while True:
            lx = self.peek()
            if lx is None:
                return node
            if lx.text == "(":
                self.take()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.parse_assignment())
                        if self.at(","):
                            self.take()
                            continue
                        break
                self.expect(")")
                node = self.b.prop("FunctionCallExpression", [node] + args)
                continue
            if lx.text == "[":
                self.take()
                idx = self.parse_expression()
                self.expect("]")
                node = self.b.prop("ArraySubscriptExpression", [node, idx])
                continue
            if lx.text in {".", "->"}:
                op = self.take()
                field = self.take()
                if field.kind != "identifier":
                    raise MiniCSyntaxError(
                        f"expected field name, got {field.text!r}", field.line, field.col
                    )
                name = self.b.prop(
                    "Name", [self.b.tok(field.text, (field.line, field.col))]
                )
                node = self.b.prop(
                    "FieldReference",
                    [node, self.b.tok(op.text, (op.line, op.col)), name],
                )
                continue
            if lx.text in {"++", "--"}:
                op = self.take()
                node = self.b.prop(
                    "UnaryExpression", [node, self.b.tok(op.text, (op.line, op.col))]
                )
                continue
            return node

    def parse_primary(self) -> int:
        lx = self.peek()
        if lx is None:
            last = self.lx[-1]
            raise MiniCSyntaxError("expected expression", last.line, last.col)
        if lx.kind == "identifier":
            self.take()
            name = self.b.prop("Name", [self.b.tok(lx.text, (lx.line, lx.col))])
            return self.b.prop("IdExpression", [name])
        if lx.kind in {"number", "string", "char"}:
            self.take()
            return self.b.prop(
                "LiteralExpression", [self.b.tok(lx.text, (lx.line, lx.col))]
            )
        if lx.text == "(":
            self.take()
            inner = self.parse_expression()
            self.expect(")")
            return inner
        if lx.kind == "keyword":
            self.fail_unsupported(f"keyword {lx.text!r} in expression")
        raise MiniCSyntaxError(f"unexpected {lx.text!r}", lx.line, lx.col)

    # --- function definitions ----------------------------------------

    def parse_function_definition(self) -> Ast:
        self.b = _Builder()
        spec, spec_text = self.parse_specifier()
        ptrs, nptr = self.parse_pointers()
        name_lx = self.peek()
        if name_lx is None or name_lx.kind != "identifier":
            got = name_lx.text if name_lx else "end of input"
            raise MiniCSyntaxError(
                f"expected function name, got {got!r}",
                name_lx.line if name_lx else 1,
                name_lx.col if name_lx else 1,
            )
        self.take()
        name_node = self.b.prop(
            "Name", [self.b.tok(name_lx.text, (name_lx.line, name_lx.col))]
        )
        self.expect("(")
        params, pwords = self.parse_parameter_list()
        declarator = self.b.prop("FunctionDeclarator", ptrs + [name_node] + params)
        if self.at(";"):
            self.fail_unsupported("function prototype (no body)")
        body = self.parse_compound()
        root = self.b.prop("FunctionDefinition", [spec, declarator, body])
        signature = "{}{} {}({})".format(
            spec_text, " *" * nptr, name_lx.text, ", ".join(pwords)
        )
        ast = Ast(
            nodes=self.b.nodes,
            root=root,
            routine_name=name_lx.text,
            language="c",
            signature=signature,
        )
        return ast

    def parse_translation_unit(self) -> list[Ast]:
        asts = []
        while self.peek() is not None:
            if self.at(";"):
                self.take()
                continue
            asts.append(self.parse_function_definition())
        return asts


def parse_mini_c(source: str) -> list[Ast]:
    """Parse mini-C source into one validated Ast per function definition."""
    lexemes = tokenize(source)
    asts = _Parser(lexemes).parse_translation_unit()
    vocab = mini_c_property_names()
    for ast in asts:
        problems = validate_ast(ast)
        if problems:  # construction bug, not a user error
            raise AssertionError(
                f"parser produced invalid Ast for {ast.routine_name}: {problems}"
            )
        for node in ast.nodes.values():
            if node.kind == PROPERTY and node.label not in vocab:
                raise AssertionError(
                    f"parser emitted property label {node.label!r} "
                    "missing from the vocabulary file"
                )
    return asts


def retained_token_texts(source: str) -> list[list[str]]:
    """Per-routine retained token streams, as the frontier oracle sees them."""
    return [[label for _, label in token_frontier(ast)] for ast in parse_mini_c(source)]

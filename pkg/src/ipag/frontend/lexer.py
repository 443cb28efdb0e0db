"""Tokenizer for the mini-C subset.

Comments (block and line) and preprocessor lines are stripped before
tokenization. The lexer produces the fine-grained stream the parser works
from; which lexemes survive into the AST as token nodes is the parser's
business (punctuation does not, specifier keywords are merged).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import MiniCSyntaxError

KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register return short signed sizeof
    static struct switch typedef union unsigned void volatile while""".split()
)

TYPE_KEYWORDS = frozenset(
    "void char short int long float double signed unsigned".split()
)

STORAGE_QUALIFIER_KEYWORDS = frozenset(
    "auto const extern inline register static volatile".split()
)

CONTROL_KEYWORDS = frozenset(
    "if else for while do switch case default return break continue".split()
)

# Longest match first.
OPERATORS = [
    "<<=", ">>=", "...",
    "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "->", "++", "--",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^", "~",
    "?", ":", ".",
]

PUNCTUATION = frozenset("(){}[],;")


@dataclass(frozen=True)
class Lexeme:
    kind: str  # identifier | number | string | char | keyword | operator | punct
    text: str
    line: int
    col: int


def _strip_comments_and_preprocessor(source: str) -> str:
    """Blank out comments and # lines, preserving line/column positions."""
    out = []
    i, n = 0, len(source)
    at_line_start = True
    while i < n:
        ch = source[i]
        if at_line_start and ch in " \t":
            out.append(ch)
            i += 1
            continue
        if at_line_start and ch == "#":
            while i < n and source[i] != "\n":
                out.append(" ")
                i += 1
            continue
        at_line_start = ch == "\n"
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                j = n - 2
            for k in range(i, j + 2):
                if k < n:
                    out.append("\n" if source[k] == "\n" else " ")
            i = j + 2
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                out.append(" ")
                i += 1
            continue
        if ch in "\"'":
            quote = ch
            out.append(ch)
            i += 1
            while i < n and source[i] != quote:
                out.append(source[i])
                if source[i] == "\\" and i + 1 < n:
                    out.append(source[i + 1])
                    i += 1
                i += 1
            if i < n:
                out.append(quote)
                i += 1
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def tokenize(source: str) -> list[Lexeme]:
    """Lex mini-C source into a flat lexeme list.

    Raises MiniCSyntaxError on characters outside the subset.
    """
    text = _strip_comments_and_preprocessor(source)
    lexemes: list[Lexeme] = []
    i, n = 0, len(text)
    line, col = 1, 1

    def advance(k: int):
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n\f\v":
            advance(1)
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "keyword" if word in KEYWORDS else "identifier"
            lexemes.append(Lexeme(kind, word, start_line, start_col))
            advance(j - i)
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isalnum() or text[j] in "._xX"):
                # crude but sufficient: 0x1F, 1.5e3, 10UL
                if text[j] in "eE" and j + 1 < n and text[j + 1] in "+-":
                    j += 1
                j += 1
            lexemes.append(Lexeme("number", text[i:j], start_line, start_col))
            advance(j - i)
            continue
        if ch == '"' or ch == "'":
            j = i + 1
            while j < n and text[j] != ch:
                if text[j] == "\\":
                    j += 1
                j += 1
            if j >= n:
                raise MiniCSyntaxError("unterminated literal", start_line, start_col)
            kind = "string" if ch == '"' else "char"
            lexemes.append(Lexeme(kind, text[i : j + 1], start_line, start_col))
            advance(j + 1 - i)
            continue
        if ch in PUNCTUATION:
            lexemes.append(Lexeme("punct", ch, start_line, start_col))
            advance(1)
            continue
        for op in OPERATORS:
            if text.startswith(op, i):
                lexemes.append(Lexeme("operator", op, start_line, start_col))
                advance(len(op))
                break
        else:
            raise MiniCSyntaxError(f"unexpected character {ch!r}", start_line, start_col)
    return lexemes

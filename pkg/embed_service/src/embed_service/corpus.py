"""Fixed training corpus for the word-vector model.

Enumerated (no randomness) so the trained vectors are identical on every
build. The lines mimic the statement shapes the embeddings are consumed for:
declarations put type names before variables, control keywords head
parenthesised conditions, operators sit between operands, and so on, for
both C- and Java-flavoured vocabularies.
"""

TYPE_WORDS = [
    "int", "long", "short", "char", "float", "double", "unsigned", "signed",
    "size_t", "boolean", "byte", "String", "Object", "void",
]

CONTROL_WORDS = ["for", "while", "if", "else", "switch", "do"]

VARIABLE_WORDS = [
    "count", "total", "index", "length", "size", "offset", "value", "sum",
    "pos", "width", "buffer", "data", "result", "item", "node", "key",
]

CALL_WORDS = [
    "read", "write", "copy", "parse", "lookup", "insert", "remove", "close",
    "open", "format", "append", "encode",
]

LITERAL_WORDS = ["0", "1", "2", "8", "10", "100", "NULL", "null", "true", "false"]


def corpus_lines() -> list[str]:
    lines: list[str] = []
    for t in TYPE_WORDS:
        for v in VARIABLE_WORDS:
            lines.append(f"{t} {v} ;")
            lines.append(f"{t} {v} = 0 ;")
            lines.append(f"static {t} {v} = 1 ;")
            lines.append(f"{t} * {v} = NULL ;")
            lines.append(f"const {t} {v} = 10 ;")
            lines.append(f"return ( {t} ) {v} ;")
            lines.append(f"{t} {v} [ 8 ] ;")
    for kw in CONTROL_WORDS:
        for v in VARIABLE_WORDS:
            lines.append(f"{kw} ( {v} < 10 ) {{")
            lines.append(f"{kw} ( {v} != NULL ) {{")
            lines.append(f"{kw} ( {v} > 0 ) break ;")
            lines.append(f"{kw} ( {v} == 0 ) continue ;")
    for v in VARIABLE_WORDS:
        lines.append(f"for ( int {v} = 0 ; {v} < n ; {v} ++ ) {{")
        lines.append(f"while ( {v} -- ) {{")
        lines.append(f"return {v} + 1 ;")
        lines.append(f"{v} = {v} * 2 ;")
        lines.append(f"{v} += 1 ;")
    for f in CALL_WORDS:
        for v in VARIABLE_WORDS[:8]:
            lines.append(f"{f} ( {v} ) ;")
            lines.append(f"{v} = {f} ( {v} , 0 ) ;")
            lines.append(f"if ( {f} ( {v} ) ) return ;")
    for lit in LITERAL_WORDS:
        for v in VARIABLE_WORDS[:6]:
            lines.append(f"{v} = {lit} ;")
            lines.append(f"if ( {v} == {lit} ) {{")
    return lines

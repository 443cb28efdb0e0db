"""Frontend: mini-C parsing, AST interchange ingestion, and AST validation."""

from .astmodel import (
    PROPERTY,
    TOKEN,
    Ast,
    AstNode,
    RoutineCorpus,
    export_ast_interchange,
    load_ast_interchange,
    save_ast_interchange,
    token_frontier,
    validate_ast,
)
from .lexer import Lexeme, tokenize
from .parser import mini_c_property_names, parse_mini_c

__all__ = [
    "PROPERTY",
    "TOKEN",
    "Ast",
    "AstNode",
    "Lexeme",
    "RoutineCorpus",
    "export_ast_interchange",
    "load_ast_interchange",
    "mini_c_property_names",
    "parse_mini_c",
    "save_ast_interchange",
    "token_frontier",
    "tokenize",
    "validate_ast",
]

"""Embedding microservice: deterministic code-token vectors over HTTP."""

from .model import NATIVE_WIDTH, CodeVectorModel, tokenize
from .server import DEFAULT_BATCH_CAP, EmbedServer, make_server, serve

__version__ = "0.1.0"

__all__ = [
    "CodeVectorModel",
    "DEFAULT_BATCH_CAP",
    "EmbedServer",
    "NATIVE_WIDTH",
    "make_server",
    "serve",
    "tokenize",
]

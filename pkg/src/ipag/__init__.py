"""Inter-procedural abstract graphs for routine-level vulnerability detection.

Pipeline: parse or ingest ASTs -> build preliminary graphs -> compress
(sequence + aggregation merging) -> link call relations -> embed nodes and
edges -> train / evaluate / predict with the heterogeneous attention GNN.
"""

from .calls import CallDepthIndex, index_call_depths, link_calls
from .compress import (
    CompressRuleset,
    compress,
    compression_report,
    default_ruleset,
    find_aggregations,
    find_sequences,
    merge_aggregations,
    merge_sequences,
)
from .embed import (
    EmbeddedGraph,
    HashEmbedder,
    PropertyVocabulary,
    ServiceEmbedder,
    embed_corpus,
    embed_edges,
    embed_property,
    embed_text,
    slice_subgraphs,
)
from .errors import IpagError
from .frontend import (
    Ast,
    AstNode,
    RoutineCorpus,
    load_ast_interchange,
    parse_mini_c,
    token_frontier,
)
from .graph import Ipag, Stage, build_preliminary, validate_ipag
from .model import (
    EvalReport,
    HagnnConfig,
    HagnnModel,
    classify,
    evaluate,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Ast",
    "AstNode",
    "CallDepthIndex",
    "CompressRuleset",
    "EmbeddedGraph",
    "EvalReport",
    "HagnnConfig",
    "HagnnModel",
    "HashEmbedder",
    "Ipag",
    "IpagError",
    "PropertyVocabulary",
    "RoutineCorpus",
    "ServiceEmbedder",
    "Stage",
    "build_preliminary",
    "classify",
    "compress",
    "compression_report",
    "default_ruleset",
    "embed_corpus",
    "embed_edges",
    "embed_property",
    "embed_text",
    "evaluate",
    "find_aggregations",
    "find_sequences",
    "index_call_depths",
    "link_calls",
    "load_ast_interchange",
    "load_checkpoint",
    "merge_aggregations",
    "merge_sequences",
    "parse_mini_c",
    "predict",
    "save_checkpoint",
    "slice_subgraphs",
    "token_frontier",
    "train",
    "validate_ipag",
]

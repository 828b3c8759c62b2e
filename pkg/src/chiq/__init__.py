"""Conversational search toolkit: LLM-based history enhancement and query
rewriting, sparse/dense retrieval, rank-list fusion, pseudo-supervision
generation, and TREC-style evaluation."""

__version__ = "0.1.0"

from .corpus import (
    ConversationSession,
    ConversationTurn,
    Passage,
    Qrels,
    RunEntry,
)
from .enhance import EnhanceConfig, EnhancedHistory, Enhancer
from .fusion import FusionConfig, fuse, normalize_scores
from .gateway import ChatRequest, ChatResponse, GenerationConfig, LlmGateway, MockBackend
from .metrics import EvalConfig, EvalReport, evaluate_run, mrr, ndcg_at_k, recall_at_k
from .retrieval import (
    AnalyzerConfig,
    Bm25Params,
    RankedList,
    analyze,
    bm25_score,
    build_index,
    search_dense,
    search_sparse,
)
from .rewrite import RewriteRequest, RewrittenQuery, extract_query, rewrite_query
from .supervision import FtRecord, PseudoQuerySet, SupervisionConfig, select_best

__all__ = [
    "AnalyzerConfig",
    "Bm25Params",
    "ChatRequest",
    "ChatResponse",
    "ConversationSession",
    "ConversationTurn",
    "EnhanceConfig",
    "EnhancedHistory",
    "Enhancer",
    "EvalConfig",
    "EvalReport",
    "FtRecord",
    "FusionConfig",
    "GenerationConfig",
    "LlmGateway",
    "MockBackend",
    "Passage",
    "PseudoQuerySet",
    "Qrels",
    "RankedList",
    "RewriteRequest",
    "RewrittenQuery",
    "RunEntry",
    "analyze",
    "bm25_score",
    "build_index",
    "evaluate_run",
    "extract_query",
    "fuse",
    "mrr",
    "ndcg_at_k",
    "normalize_scores",
    "recall_at_k",
    "rewrite_query",
    "search_dense",
    "search_sparse",
    "select_best",
]

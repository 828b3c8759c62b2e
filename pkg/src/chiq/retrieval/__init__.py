"""Sparse (BM25) and dense (exact vector) retrieval over passage
collections, plus the shared text analysis chain."""

from .analysis import STOPWORD_SETS, AnalyzerConfig, analyze
from .dense import (
    HashEmbedder,
    HttpEmbedder,
    VectorIndex,
    build_vector_index,
    load_vector_index,
    save_vector_index,
    search_dense,
)
from .ranked import RankedList, ranked_lists_from_run
from .sparse import (
    Bm25Params,
    InvertedIndex,
    bm25_score,
    build_index,
    load_index,
    save_index,
    search_sparse,
)
from .stem import porter_stem

__all__ = [
    "AnalyzerConfig",
    "Bm25Params",
    "HashEmbedder",
    "HttpEmbedder",
    "InvertedIndex",
    "RankedList",
    "STOPWORD_SETS",
    "VectorIndex",
    "analyze",
    "bm25_score",
    "build_index",
    "build_vector_index",
    "load_index",
    "load_vector_index",
    "porter_stem",
    "ranked_lists_from_run",
    "save_index",
    "save_vector_index",
    "search_dense",
    "search_sparse",
]

"""Inverted index and BM25 scoring.

The scoring variant pairs the Robertson tf saturation with the
Lucene-style smoothed idf, ln(1 + (N - df + 0.5) / (df + 0.5)), which is
strictly positive for every indexed term, so scores are always >= 0.
Indexes are immutable after construction and safe for parallel search.
"""

from __future__ import annotations

import json
import math
import pickle
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from ..corpus import Passage
from ..errors import FormatError
from ..tokens import keep_first_tokens
from .analysis import AnalyzerConfig, analyze
from .ranked import RankedList

INDEX_FORMAT_VERSION = 1
PASSAGE_TOKEN_LIMIT = 384
QUERY_TOKEN_LIMIT = 32


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


class InvertedIndex:
    """Postings sorted by doc ordinal, plus the collection statistics the
    scoring formula needs."""

    def __init__(
        self,
        postings: dict[str, list[tuple[int, int]]],
        doc_lengths: list[int],
        doc_ids: list[str],
        analyzer: AnalyzerConfig,
    ):
        if len(doc_lengths) != len(doc_ids):
            raise ValueError("doc_lengths and doc_ids disagree on N")
        self.postings = postings
        self.doc_lengths = doc_lengths
        self.doc_ids = doc_ids
        self.analyzer = analyzer
        self.n_docs = len(doc_ids)
        self.avgdl = sum(doc_lengths) / self.n_docs if self.n_docs else 0.0

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def term_frequency(self, term: str, doc_ordinal: int) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        pos = bisect_left(plist, (doc_ordinal, 0))
        if pos < len(plist) and plist[pos][0] == doc_ordinal:
            return plist[pos][1]
        return 0

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def build_index(
    collection: Iterable[Passage],
    analyzer: AnalyzerConfig | None = None,
    passage_token_limit: int = PASSAGE_TOKEN_LIMIT,
) -> InvertedIndex:
    """Index a passage stream. Passages are truncated to the token budget
    before analysis; document length is the analyzed term count."""
    analyzer = analyzer or AnalyzerConfig()
    postings: dict[str, dict[int, int]] = {}
    doc_lengths: list[int] = []
    doc_ids: list[str] = []
    seen: set[str] = set()
    for passage in collection:
        if passage.doc_id in seen:
            raise FormatError(f"duplicate doc_id {passage.doc_id!r} in collection")
        seen.add(passage.doc_id)
        ordinal = len(doc_ids)
        doc_ids.append(passage.doc_id)
        terms = analyze(keep_first_tokens(passage.text, passage_token_limit), analyzer)
        doc_lengths.append(len(terms))
        for term in terms:
            counts = postings.setdefault(term, {})
            counts[ordinal] = counts.get(ordinal, 0) + 1
    if not doc_ids:
        raise ValueError("cannot index an empty collection")
    sorted_postings = {
        term: sorted(counts.items()) for term, counts in postings.items()
    }
    return InvertedIndex(sorted_postings, doc_lengths, doc_ids, analyzer)


def bm25_score(
    index: InvertedIndex,
    params: Bm25Params,
    query_terms: list[str],
    doc_ordinal: int,
) -> float:
    """Sum of per-term contributions over the unique query terms; terms
    absent from the document contribute 0."""
    if not 0 <= doc_ordinal < index.n_docs:
        raise ValueError(f"doc_ordinal {doc_ordinal} out of range")
    dl = index.doc_lengths[doc_ordinal]
    norm = params.k1 * (1.0 - params.b + params.b * dl / index.avgdl)
    score = 0.0
    for term in dict.fromkeys(query_terms):
        tf = index.term_frequency(term, doc_ordinal)
        if tf == 0:
            continue
        score += index.idf(term) * (tf * (params.k1 + 1.0)) / (tf + norm)
    return score


def search_sparse(
    index: InvertedIndex,
    params: Bm25Params,
    query: str,
    k: int,
    query_id: str = "",
    analyzer: AnalyzerConfig | None = None,
    query_token_limit: int = QUERY_TOKEN_LIMIT,
) -> RankedList:
    """Top-k BM25 search over documents containing at least one query
    term. The query is truncated to its token budget before analysis.

    Passing an analyzer asserts compatibility with the one the index was
    built with; a fingerprint mismatch is refused.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if analyzer is not None and analyzer.fingerprint() != index.analyzer.fingerprint():
        raise FormatError(
            "query-time analyzer fingerprint differs from the index "
            f"({analyzer.fingerprint()} != {index.analyzer.fingerprint()})"
        )
    terms = analyze(keep_first_tokens(query, query_token_limit), index.analyzer)
    accumulator: dict[int, float] = {}
    for term in dict.fromkeys(terms):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        k1 = params.k1
        for ordinal, tf in plist:
            dl = index.doc_lengths[ordinal]
            norm = k1 * (1.0 - params.b + params.b * dl / index.avgdl)
            accumulator[ordinal] = accumulator.get(ordinal, 0.0) + idf * (
                tf * (k1 + 1.0)
            ) / (tf + norm)
    scored = {index.doc_ids[ordinal]: score for ordinal, score in accumulator.items()}
    return RankedList.from_scores(query_id=query_id, scores=scored, depth=k)


def save_index(
    index: InvertedIndex, directory: str | Path, default_params: Bm25Params | None = None
) -> None:
    """Persist as a versioned binary blob plus a JSON manifest. The scoring
    parameters recorded in the manifest are informational defaults; the
    search stage picks its own at query time."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = default_params or Bm25Params()
    manifest = {
        "format_version": INDEX_FORMAT_VERSION,
        "kind": "sparse",
        "analyzer_fingerprint": index.analyzer.fingerprint(),
        "analyzer": index.analyzer.to_dict(),
        "n_docs": index.n_docs,
        "avgdl": index.avgdl,
        "bm25_defaults": {"k1": params.k1, "b": params.b},
    }
    with (directory / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with (directory / "postings.bin").open("wb") as fh:
        pickle.dump(
            {
                "postings": index.postings,
                "doc_lengths": index.doc_lengths,
                "doc_ids": index.doc_ids,
            },
            fh,
            protocol=pickle.HIGHEST_PROTOCOL,
        )


def load_index(directory: str | Path) -> InvertedIndex:
    directory = Path(directory)
    with (directory / "manifest.json").open("r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != INDEX_FORMAT_VERSION:
        raise FormatError(
            f"unsupported index format version {manifest.get('format_version')!r}"
        )
    analyzer = AnalyzerConfig.from_dict(manifest["analyzer"])
    if analyzer.fingerprint() != manifest["analyzer_fingerprint"]:
        raise FormatError("index manifest fingerprint does not match its analyzer config")
    with (directory / "postings.bin").open("rb") as fh:
        payload = pickle.load(fh)
    return InvertedIndex(
        postings=payload["postings"],
        doc_lengths=payload["doc_lengths"],
        doc_ids=payload["doc_ids"],
        analyzer=analyzer,
    )

"""Result-level fusion of two ranked lists into one.

Weighted CombSUM over min-max-normalized scores: a document missing from
one list contributes 0 from that side. Min-max normalization makes the
combination invariant to the very different score scales of BM25 and
dot-product retrieval.
"""

from __future__ import annotations

from dataclasses import dataclass

from .retrieval.ranked import RankedList


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 1.0  # weight of the second list; 1 = equal importance
    normalization: str = "minmax"
    depth: int = 100

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.normalization != "minmax":
            raise ValueError(f"unsupported normalization {self.normalization!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")


def normalize_scores(ranked: RankedList) -> RankedList:
    """Min-max map onto [0, 1], order-preserving. Degenerate ranges
    (single hit, or all scores equal) map everything to 1.0."""
    if not ranked.hits:
        return ranked
    scores = [score for _, score in ranked.hits]
    low, high = min(scores), max(scores)
    if high == low:
        hits = tuple((doc_id, 1.0) for doc_id, _ in ranked.hits)
    else:
        span = high - low
        hits = tuple((doc_id, (score - low) / span) for doc_id, score in ranked.hits)
    return RankedList(query_id=ranked.query_id, hits=hits, depth=ranked.depth)


def fuse(list_a: RankedList, list_b: RankedList, config: FusionConfig | None = None) -> RankedList:
    """fused(d) = norm_a(d) + alpha * norm_b(d) over the union of docs,
    sorted by fused score with doc_id tie-break, cut to the config depth."""
    config = config or FusionConfig()
    if list_a.query_id != list_b.query_id:
        raise ValueError(
            f"query_id mismatch: {list_a.query_id!r} vs {list_b.query_id!r}"
        )
    norm_a = dict(normalize_scores(list_a).hits)
    norm_b = dict(normalize_scores(list_b).hits)
    fused = {
        doc_id: norm_a.get(doc_id, 0.0) + config.alpha * norm_b.get(doc_id, 0.0)
        for doc_id in set(norm_a) | set(norm_b)
    }
    return RankedList.from_scores(query_id=list_a.query_id, scores=fused, depth=config.depth)

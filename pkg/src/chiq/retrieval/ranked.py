"""Ranked result lists shared by the sparse, dense, and fusion paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..corpus import RunEntry


@dataclass(frozen=True)
class RankedList:
    """Top-k hits for one query: scores non-increasing, no duplicate
    doc_ids. Lists produced by this toolkit additionally break score ties
    by doc_id ascending (from_scores guarantees it); lists read back from
    external run files keep their stated rank order."""

    query_id: str
    hits: tuple[tuple[str, float], ...]
    depth: int

    def __post_init__(self) -> None:
        seen = set()
        prev_score: float | None = None
        for doc_id, score in self.hits:
            if doc_id in seen:
                raise ValueError(f"duplicate doc_id {doc_id!r} in ranked list")
            seen.add(doc_id)
            if prev_score is not None and score > prev_score:
                raise ValueError("ranked list scores must be non-increasing")
            prev_score = score
        if len(self.hits) > self.depth:
            raise ValueError("more hits than the stated depth")

    @classmethod
    def from_scores(cls, query_id: str, scores: Mapping[str, float], depth: int) -> "RankedList":
        ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:depth]
        return cls(query_id=query_id, hits=tuple(ordered), depth=depth)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.hits]

    def to_run_entries(self, tag: str = "chiq") -> list[RunEntry]:
        return [
            RunEntry(query_id=self.query_id, doc_id=doc_id, rank=rank, score=score, tag=tag)
            for rank, (doc_id, score) in enumerate(self.hits, start=1)
        ]


def ranked_lists_from_run(entries: Iterable[RunEntry]) -> dict[str, RankedList]:
    """Group run entries back into per-query ranked lists (run order kept)."""
    grouped: dict[str, list[tuple[str, float]]] = {}
    for entry in entries:
        grouped.setdefault(entry.query_id, []).append((entry.doc_id, entry.score))
    return {
        qid: RankedList(query_id=qid, hits=tuple(hits), depth=len(hits))
        for qid, hits in grouped.items()
    }

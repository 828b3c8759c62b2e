"""Rank-based evaluation: MRR, NDCG@k, Recall@k over runs and qrels.

Graded judgments are used raw by NDCG (exponential gain); MRR and Recall
binarize at the qrels threshold. Queries with no judgments at all are
excluded from the means and reported, as are queries whose recall
denominator is empty.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Qrels, RunEntry
from .retrieval.ranked import RankedList


@dataclass(frozen=True)
class EvalConfig:
    ndcg_cutoff: int = 3
    recall_cutoff: int = 10
    mrr_depth: int | None = None  # None: full run depth
    binary_threshold: int | None = None  # None: take it from the qrels
    ndcg_gain: str = "exp"  # "exp" | "linear"

    def __post_init__(self) -> None:
        if self.ndcg_cutoff < 1 or self.recall_cutoff < 1:
            raise ValueError("metric cutoffs must be >= 1")
        if self.mrr_depth is not None and self.mrr_depth < 1:
            raise ValueError("mrr_depth must be >= 1")
        if self.ndcg_gain not in ("exp", "linear"):
            raise ValueError(f"unknown ndcg gain {self.ndcg_gain!r}")


@dataclass
class EvalReport:
    per_query: dict[str, dict[str, float]]
    means: dict[str, float]
    judged_query_count: int
    unjudged_query_ids: tuple[str, ...] = ()
    recall_excluded_query_ids: tuple[str, ...] = ()
    config: EvalConfig = field(default_factory=EvalConfig)

    def to_json_dict(self) -> dict:
        return {
            "means": self.means,
            "per_query": self.per_query,
            "judged_query_count": self.judged_query_count,
            "unjudged_query_ids": list(self.unjudged_query_ids),
            "recall_excluded_query_ids": list(self.recall_excluded_query_ids),
            "config": {
                "ndcg_cutoff": self.config.ndcg_cutoff,
                "recall_cutoff": self.config.recall_cutoff,
                "mrr_depth": self.config.mrr_depth,
                "binary_threshold": self.config.binary_threshold,
                "ndcg_gain": self.config.ndcg_gain,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"


def _doc_order(hits) -> list[str]:
    if isinstance(hits, RankedList):
        return hits.doc_ids()
    if hits and isinstance(hits[0], tuple):
        return [doc_id for doc_id, _ in hits]
    return list(hits)


def mrr(
    hits,
    qrels: Qrels,
    threshold: int | None = None,
    depth: int | None = None,
    query_id: str | None = None,
) -> float:
    """1/rank of the first relevant hit within `depth`, 0 if none."""
    docs = _doc_order(hits)
    qid = query_id if query_id is not None else getattr(hits, "query_id", "")
    cutoff = qrels.binary_threshold if threshold is None else threshold
    limit = len(docs) if depth is None else min(depth, len(docs))
    for rank, doc_id in enumerate(docs[:limit], start=1):
        if qrels.grade(qid, doc_id) >= cutoff:
            return 1.0 / rank
    return 0.0


def ndcg_at_k(hits, qrels: Qrels, k: int, gain: str = "exp", query_id: str | None = None) -> float:
    """DCG@k / IDCG@k with gains (2^g - 1) (or g when linear) and log2(i+1)
    discounts; an empty ideal (no positive grades) yields 0."""
    docs = _doc_order(hits)
    qid = query_id if query_id is not None else getattr(hits, "query_id", "")

    def gain_of(grade: int) -> float:
        return float(2**grade - 1) if gain == "exp" else float(grade)

    dcg = sum(
        gain_of(qrels.grade(qid, doc_id)) / math.log2(rank + 1)
        for rank, doc_id in enumerate(docs[:k], start=1)
    )
    ideal_grades = sorted(qrels.judged_docs(qid).values(), reverse=True)[:k]
    idcg = sum(
        gain_of(grade) / math.log2(rank + 1)
        for rank, grade in enumerate(ideal_grades, start=1)
    )
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def recall_at_k(
    hits,
    qrels: Qrels,
    threshold: int | None = None,
    k: int = 10,
    query_id: str | None = None,
) -> float | None:
    """Fraction of the relevant docs found in the top k; None when the
    query has no relevant docs (undefined denominator)."""
    docs = _doc_order(hits)
    qid = query_id if query_id is not None else getattr(hits, "query_id", "")
    cutoff = qrels.binary_threshold if threshold is None else threshold
    relevant = qrels.relevant_docs(qid, cutoff)
    if not relevant:
        return None
    found = sum(1 for doc_id in docs[:k] if doc_id in relevant)
    return found / len(relevant)


def evaluate_run(run: list[RunEntry], qrels: Qrels, config: EvalConfig | None = None) -> EvalReport:
    """Per-query metrics and unweighted means over the judged queries."""
    config = config or EvalConfig()
    threshold = (
        qrels.binary_threshold if config.binary_threshold is None else config.binary_threshold
    )
    ordered: dict[str, list[tuple[int, str]]] = {}
    for entry in run:
        ordered.setdefault(entry.query_id, []).append((entry.rank, entry.doc_id))

    per_query: dict[str, dict[str, float]] = {}
    unjudged: list[str] = []
    recall_excluded: list[str] = []
    sums = {"mrr": 0.0, "ndcg": 0.0, "recall": 0.0}
    counts = {"mrr": 0, "ndcg": 0, "recall": 0}
    for qid in sorted(ordered):
        docs = [doc_id for _, doc_id in sorted(ordered[qid])]
        if not qrels.judged_docs(qid):
            unjudged.append(qid)
            continue
        q_mrr = mrr(docs, qrels, threshold=threshold, depth=config.mrr_depth, query_id=qid)
        q_ndcg = ndcg_at_k(docs, qrels, k=config.ndcg_cutoff, gain=config.ndcg_gain, query_id=qid)
        q_recall = recall_at_k(
            docs, qrels, threshold=threshold, k=config.recall_cutoff, query_id=qid
        )
        row = {"mrr": q_mrr, "ndcg": q_ndcg}
        sums["mrr"] += q_mrr
        counts["mrr"] += 1
        sums["ndcg"] += q_ndcg
        counts["ndcg"] += 1
        if q_recall is None:
            recall_excluded.append(qid)
        else:
            row["recall"] = q_recall
            sums["recall"] += q_recall
            counts["recall"] += 1
        per_query[qid] = row

    means = {
        name: (sums[name] / counts[name] if counts[name] else 0.0)
        for name in ("mrr", "ndcg", "recall")
    }
    return EvalReport(
        per_query=per_query,
        means=means,
        judged_query_count=counts["mrr"],
        unjudged_query_ids=tuple(unjudged),
        recall_excluded_query_ids=tuple(recall_excluded),
        config=config,
    )


def format_table(report: EvalReport) -> str:
    """Aligned text table: one row per query plus the means."""
    header = f"{'query_id':<20} {'MRR':>8} {'NDCG':>8} {'Recall':>8}"
    lines = [header, "-" * len(header)]
    for qid in sorted(report.per_query):
        row = report.per_query[qid]
        recall = f"{row['recall']:.4f}" if "recall" in row else "   n/a"
        lines.append(f"{qid:<20} {row['mrr']:>8.4f} {row['ndcg']:>8.4f} {recall:>8}")
    lines.append("-" * len(header))
    lines.append(
        f"{'mean':<20} {report.means['mrr']:>8.4f} {report.means['ndcg']:>8.4f} "
        f"{report.means['recall']:>8.4f}"
    )
    lines.append(
        f"judged queries: {report.judged_query_count}"
        + (
            f"; unjudged (excluded): {len(report.unjudged_query_ids)}"
            if report.unjudged_query_ids
            else ""
        )
    )
    return "\n".join(lines)

"""Figure rendering for evaluation reports.

Writes a per-query bar chart of the three metrics next to the JSON/TSV
outputs of the evaluate stage. Uses the Agg backend so it works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

import numpy as np  # noqa: E402

from .metrics import EvalReport  # noqa: E402


def render_eval_figure(report: EvalReport, path: str | Path) -> Path:
    """One grouped bar per query for MRR/NDCG/Recall, with mean lines."""
    path = Path(path)
    query_ids = sorted(report.per_query)
    x = np.arange(len(query_ids))
    width = 0.27

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(query_ids)), 4.0))
    for offset, (key, label) in enumerate(
        [("mrr", "MRR"), ("ndcg", f"NDCG@{report.config.ndcg_cutoff}"),
         ("recall", f"Recall@{report.config.recall_cutoff}")]
    ):
        values = [report.per_query[qid].get(key, 0.0) for qid in query_ids]
        ax.bar(x + (offset - 1) * width, values, width, label=label)
        ax.axhline(report.means[key], linestyle="--", linewidth=0.8, alpha=0.5)

    ax.set_xticks(x)
    ax.set_xticklabels(query_ids, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("metric value")
    ax.set_title("Per-query retrieval quality")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_per_query_tsv(report: EvalReport, path: str | Path) -> Path:
    """Tab-delimited per-query metrics (empty cell for undefined recall)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("query_id\tmrr\tndcg\trecall\n")
        for qid in sorted(report.per_query):
            row = report.per_query[qid]
            recall = f"{row['recall']:.6f}" if "recall" in row else ""
            fh.write(f"{qid}\t{row['mrr']:.6f}\t{row['ndcg']:.6f}\t{recall}\n")
    return path

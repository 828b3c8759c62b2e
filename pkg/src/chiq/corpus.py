"""Data model and file ingestion: passage collections, conversation
sessions, relevance judgments, and TREC run files.

All loaded structures are immutable (or treated as such) after
construction and safe to share across threads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import FormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Passage:
    doc_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("passage doc_id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"passage {self.doc_id!r} has empty text")


@dataclass(frozen=True)
class ConversationTurn:
    question: str
    response: str  # may be empty: turn not yet answered

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("turn question must be non-empty")


@dataclass(frozen=True)
class ConversationSession:
    """One evaluation point: prior history plus the current question.

    `turn_id` is the query identifier used to join runs and qrels.
    """

    session_id: str
    turns: tuple[ConversationTurn, ...]
    current_question: str
    turn_id: str

    def __post_init__(self) -> None:
        if not self.current_question:
            raise ValueError(
                f"session {self.session_id!r} turn {self.turn_id!r}: "
                "current_question must be non-empty"
            )


class Qrels:
    """Graded relevance judgments with a binary threshold.

    Grades are kept as judged; the threshold binarizes on demand. Unjudged
    (query, doc) pairs read as grade 0, the usual TREC convention.
    """

    def __init__(self, judgments: dict[tuple[str, str], int], binary_threshold: int = 1):
        if binary_threshold < 1:
            raise ValueError("binary_threshold must be >= 1")
        for (qid, did), grade in judgments.items():
            if grade < 0:
                raise ValueError(f"negative grade {grade} for ({qid}, {did})")
        self._judgments = dict(judgments)
        self.binary_threshold = binary_threshold
        self._by_query: dict[str, dict[str, int]] = {}
        for (qid, did), grade in self._judgments.items():
            self._by_query.setdefault(qid, {})[did] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._judgments.get((query_id, doc_id), 0)

    def judged_docs(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def relevant_docs(self, query_id: str, threshold: int | None = None) -> set[str]:
        cutoff = self.binary_threshold if threshold is None else threshold
        return {
            did
            for did, grade in self._by_query.get(query_id, {}).items()
            if grade >= cutoff
        }

    def query_ids(self) -> set[str]:
        return set(self._by_query)

    def __len__(self) -> int:
        return len(self._judgments)


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str = "chiq"


def load_collection(path: str | Path, format: str = "tsv") -> Iterator[Passage]:
    """Stream passages from a TSV ("doc_id<TAB>text") or json-lines
    ({"id": ..., "contents": ...}) collection file.

    Yields passages in file order; blank lines are skipped; duplicate
    doc_ids are rejected.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown collection format {format!r}")
    path = Path(path)
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if format == "tsv":
                parts = line.split("\t", 1)
                if len(parts) != 2:
                    raise FormatError(f"{path}:{lineno}: expected doc_id<TAB>text")
                doc_id, text = parts
            else:
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if "id" not in record or "contents" not in record:
                    raise FormatError(f"{path}:{lineno}: record needs 'id' and 'contents'")
                doc_id, text = str(record["id"]), str(record["contents"])
            if doc_id in seen:
                raise FormatError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            try:
                yield Passage(doc_id=doc_id, text=text)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc


def _turn_sort_key(turn_index: str):
    try:
        return (0, int(turn_index))
    except (TypeError, ValueError):
        return (1, str(turn_index))


def load_sessions(path: str | Path) -> list[ConversationSession]:
    """Load json-lines session records, one per evaluation turn.

    Record schema: {"session_id", "turn_id", "history": [{"question",
    "response"}, ...], "question"}. Records are grouped by session_id
    (first-appearance order) and sorted by turn index within a session;
    non-contiguous indices produce a warning, not an error.
    """
    path = Path(path)
    records: list[dict] = []
    with path.open("r", encoding="utf-8") as fh:
        for offset, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{offset}: invalid JSON: {exc}") from exc
            for key in ("session_id", "turn_id", "history", "question"):
                if key not in record:
                    raise FormatError(f"{path}:{offset}: missing required field {key!r}")
            record["_offset"] = offset
            records.append(record)

    by_session: dict[str, list[dict]] = {}
    for record in records:
        by_session.setdefault(str(record["session_id"]), []).append(record)

    sessions: list[ConversationSession] = []
    seen_keys: set[tuple[str, str]] = set()
    for session_id, group in by_session.items():
        indices = [_turn_sort_key(r["turn_id"]) for r in group]
        if sorted(indices) != indices:
            logger.warning("session %s: turn ids out of order, re-sorting", session_id)
        numeric = [i[1] for i in indices if i[0] == 0]
        if numeric and sorted(numeric) != list(range(min(numeric), min(numeric) + len(numeric))):
            logger.warning("session %s: non-contiguous turn indices %s", session_id, sorted(numeric))
        group.sort(key=lambda r: _turn_sort_key(r["turn_id"]))
        for record in group:
            key = (session_id, str(record["turn_id"]))
            if key in seen_keys:
                raise FormatError(
                    f"{path}:{record['_offset']}: duplicate (session_id, turn_id) {key}"
                )
            seen_keys.add(key)
            try:
                turns = tuple(
                    ConversationTurn(
                        question=str(turn["question"]),
                        response=str(turn.get("response", "")),
                    )
                    for turn in record["history"]
                )
                sessions.append(
                    ConversationSession(
                        session_id=session_id,
                        turns=turns,
                        current_question=str(record["question"]),
                        turn_id=str(record["turn_id"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{record['_offset']}: malformed record: {exc}") from exc
            except ValueError as exc:
                raise FormatError(f"{path}:{record['_offset']}: {exc}") from exc
    return sessions


def filter_with_gold(
    sessions: Iterable[ConversationSession], qrels: Qrels
) -> tuple[list[ConversationSession], int]:
    """Drop evaluation turns that have no gold passage (no judged doc at or
    above the qrels threshold). Returns (kept, dropped_count)."""
    kept: list[ConversationSession] = []
    dropped = 0
    for session in sessions:
        if qrels.relevant_docs(session.turn_id):
            kept.append(session)
        else:
            dropped += 1
    if dropped:
        logger.info("dropped %d sample(s) without gold passages", dropped)
    return kept, dropped


def load_qrels(path: str | Path, threshold: int = 1) -> Qrels:
    """Load TREC 4-column qrels: query_id <lit> doc_id grade."""
    path = Path(path)
    judgments: dict[tuple[str, str], int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            qid, _, did, grade_text = parts
            try:
                grade = int(grade_text)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer grade {grade_text!r}") from exc
            if grade < 0:
                raise FormatError(f"{path}:{lineno}: negative grade {grade}")
            judgments[(qid, did)] = grade
    return Qrels(judgments, binary_threshold=threshold)


def _check_run_invariants(entries: list[RunEntry]) -> None:
    by_query: dict[str, list[RunEntry]] = {}
    for entry in entries:
        if entry.rank < 1:
            raise FormatError(f"rank {entry.rank} < 1 at {entry.query_id}")
        by_query.setdefault(entry.query_id, []).append(entry)
    for qid, group in by_query.items():
        ranks = [e.rank for e in group]
        if ranks != list(range(1, len(group) + 1)):
            raise FormatError(f"rank gap at {qid}")
        scores = [e.score for e in group]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise FormatError(f"score inversion at {qid}")


def write_run(entries: list[RunEntry], path: str | Path) -> None:
    """Write TREC run lines "query_id Q0 doc_id rank score tag" with the
    score at 6 decimal places. Entries must satisfy run invariants."""
    _check_run_invariants(entries)
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(
                f"{entry.query_id} Q0 {entry.doc_id} {entry.rank} "
                f"{entry.score:.6f} {entry.tag}\n"
            )


def read_run(path: str | Path) -> list[RunEntry]:
    path = Path(path)
    entries: list[RunEntry] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _, did, rank, score, tag = parts
            try:
                entries.append(
                    RunEntry(query_id=qid, doc_id=did, rank=int(rank), score=float(score), tag=tag)
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return entries

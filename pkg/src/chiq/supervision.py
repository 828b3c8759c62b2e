"""Search-oriented pseudo-supervision for fine-tuning a small rewriter.

For each training turn: generate several candidate queries conditioned on
the gold passage, retrieve with each, score by NDCG@3 against the turn's
judgments, keep the argmax as the training target. The whole pass is
offline and deterministic under the mock backend.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from . import prompts
from .corpus import ConversationSession, Passage, Qrels
from .enhance import EnhancedHistory
from .gateway import ChatRequest, GenerationConfig, LlmGateway
from .metrics import ndcg_at_k
from .retrieval.ranked import RankedList
from .rewrite import extract_query
from .tokens import keep_first_tokens, keep_last_tokens

logger = logging.getLogger(__name__)

# a retriever is anything that maps (query, k, query_id) to a RankedList
Retriever = Callable[[str, int, str], RankedList]

_LIST_ITEM = re.compile(r"^\s*(?:\d+\s*[.)]|[-*•])\s*(.*\S)\s*$")

TARGET_TOKEN_LIMIT = 32
INPUT_TOKEN_LIMIT = 512
PASSAGE_TOKEN_LIMIT = 384


@dataclass(frozen=True)
class SupervisionConfig:
    candidate_count: int = 5  # m: queries requested per forward pass
    history_source: str = "original"  # rendering used for FtRecord inputs
    ablation: str = "none"  # none | no-hprime | no-multi | no-gold
    retrieval_depth: int = 100
    ndcg_cutoff: int = 3
    temperature: float = 0.7
    seed: int | None = None
    max_new_tokens: int = 256

    def __post_init__(self) -> None:
        if self.candidate_count < 1:
            raise ValueError("candidate_count must be >= 1")
        if self.history_source not in ("original", "enhanced"):
            raise ValueError(f"unknown history_source {self.history_source!r}")
        if self.ablation not in ("none", "no-hprime", "no-multi", "no-gold"):
            raise ValueError(f"unknown ablation {self.ablation!r}")

    def effective_m(self) -> int:
        return 1 if self.ablation == "no-multi" else self.candidate_count


@dataclass(frozen=True)
class PseudoQuerySet:
    turn_id: str
    candidates: tuple[str, ...]
    scores: tuple[float, ...]
    selected_index: int
    zero_signal: bool = False

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidate set must be non-empty")
        if len(self.candidates) != len(self.scores):
            raise ValueError("candidates and scores must be parallel")
        if self.scores[self.selected_index] != max(self.scores):
            raise ValueError("selected_index must point at a maximal score")

    @property
    def selected_query(self) -> str:
        return self.candidates[self.selected_index]


@dataclass(frozen=True)
class FtRecord:
    input_text: str
    target_text: str
    turn_id: str
    selection_score: float

    def to_dict(self) -> dict:
        return {
            "input_text": self.input_text,
            "target_text": self.target_text,
            "turn_id": self.turn_id,
            "selection_score": self.selection_score,
        }


def build_supervision_prompt(
    enhanced: EnhancedHistory | None,
    session: ConversationSession,
    gold_passage: Passage | None,
    config: SupervisionConfig,
    generation: GenerationConfig | None = None,
) -> ChatRequest:
    """Gold-conditioned multi-query prompt. The enhanced-history rendering
    mirrors the rewrite stage (summary replaces pairs when present); the
    no-hprime ablation switches to the original history, and no-gold drops
    the passage line."""
    use_enhanced = enhanced is not None and config.ablation != "no-hprime"
    if use_enhanced:
        history_rendering = (
            enhanced.summary
            if enhanced.summary is not None
            else prompts.render_turns(enhanced.turns)
        )
        question = session.current_question
        if enhanced.disambiguated_question:
            question = f"{session.current_question} {enhanced.disambiguated_question}"
    else:
        history_rendering = prompts.render_turns(session.turns)
        question = session.current_question

    lines = []
    if gold_passage is not None and config.ablation != "no-gold":
        lines.append(
            f"Relevant passage: {keep_first_tokens(gold_passage.text, PASSAGE_TOKEN_LIMIT)}"
        )
    if history_rendering:
        lines.append(history_rendering)
    lines.append(f"New question: {question}")
    user_content = keep_last_tokens("\n".join(lines), INPUT_TOKEN_LIMIT)
    return ChatRequest(
        system_instruction=prompts.SUPERVISION_INSTRUCTION,
        user_content=user_content,
        config=generation
        or GenerationConfig(
            temperature=config.temperature,
            max_new_tokens=config.max_new_tokens,
            seed=config.seed,
        ),
    )


def parse_candidates(model_output: str, m: int) -> list[str]:
    """Pull up to m queries out of a numbered/bulleted list, deduplicated
    in order. An unparseable output yields an empty list."""
    found: list[str] = []
    seen: set[str] = set()
    for line in model_output.splitlines():
        match = _LIST_ITEM.match(line)
        if not match:
            continue
        candidate = match.group(1).strip()
        if candidate and candidate not in seen:
            seen.add(candidate)
            found.append(candidate)
        if len(found) >= m:
            break
    return found


def generate_candidates(
    gateway: LlmGateway,
    enhanced: EnhancedHistory | None,
    session: ConversationSession,
    gold_passage: Passage | None,
    config: SupervisionConfig,
) -> list[str]:
    """One gateway call; falls back to the single-query extraction path
    when no list can be parsed, and to the question itself as a last
    resort (a candidate set is never empty)."""
    m = config.effective_m()
    request = build_supervision_prompt(enhanced, session, gold_passage, config)
    output = gateway.complete(request).text
    candidates = parse_candidates(output, m)
    if candidates:
        return candidates
    single = extract_query(output)
    if single:
        logger.info("turn %s: no candidate list parsed, using single query", session.turn_id)
        return [single]
    logger.warning("turn %s: unusable candidate output, falling back to question", session.turn_id)
    return [session.current_question]


def score_candidate(
    query: str,
    retriever: Retriever,
    qrels: Qrels,
    turn_id: str,
    config: SupervisionConfig | None = None,
) -> float:
    """Retrieve with the candidate and score the run by NDCG at the
    configured cutoff against this turn's judgments."""
    config = config or SupervisionConfig()
    ranked = retriever(query, config.retrieval_depth, turn_id)
    return ndcg_at_k(ranked, qrels, k=config.ndcg_cutoff, query_id=turn_id)


def select_best(turn_id: str, candidates: list[str], scores: list[float]) -> PseudoQuerySet:
    """Argmax with first-index tie-break; all-zero scores are kept but
    flagged so downstream consumers can filter zero-signal targets."""
    if not candidates:
        raise ValueError("cannot select from an empty candidate set")
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return PseudoQuerySet(
        turn_id=turn_id,
        candidates=tuple(candidates),
        scores=tuple(scores),
        selected_index=best,
        zero_signal=max(scores) == 0.0,
    )


@dataclass
class SupervisionStats:
    records: int = 0
    skipped_no_gold: int = 0
    zero_signal: int = 0


def build_ft_dataset(
    sessions: Iterable[ConversationSession],
    enhanced_map: dict[str, EnhancedHistory],
    retriever: Retriever,
    qrels: Qrels,
    passages: dict[str, Passage],
    config: SupervisionConfig,
    gateway: LlmGateway,
    out_path: str | Path,
) -> SupervisionStats:
    """End-to-end pass over training turns, writing FtRecord json-lines in
    input order. Turns without a gold passage are skipped with a counter."""
    stats = SupervisionStats()
    audits: list[PseudoQuerySet] = []
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for session in sessions:
            gold_ids = sorted(qrels.relevant_docs(session.turn_id))
            gold = next((passages[d] for d in gold_ids if d in passages), None)
            if gold is None:
                stats.skipped_no_gold += 1
                continue
            enhanced = enhanced_map.get(session.turn_id)
            candidates = generate_candidates(gateway, enhanced, session, gold, config)
            scores = [
                score_candidate(c, retriever, qrels, session.turn_id, config)
                for c in candidates
            ]
            selected = select_best(session.turn_id, candidates, scores)
            audits.append(selected)
            if selected.zero_signal:
                stats.zero_signal += 1

            if config.history_source == "enhanced" and enhanced is not None:
                rendering = (
                    enhanced.summary
                    if enhanced.summary is not None
                    else prompts.render_turns(enhanced.turns)
                )
            else:
                rendering = prompts.render_turns(session.turns)
            question_line = f"New question: {session.current_question}"
            input_text = keep_last_tokens(
                f"{rendering}\n{question_line}" if rendering else question_line,
                INPUT_TOKEN_LIMIT,
            )
            record = FtRecord(
                input_text=input_text,
                target_text=keep_first_tokens(selected.selected_query, TARGET_TOKEN_LIMIT),
                turn_id=session.turn_id,
                selection_score=selected.scores[selected.selected_index],
            )
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            stats.records += 1
    logger.info(
        "supervision: %d records, %d skipped (no gold), %d zero-signal",
        stats.records,
        stats.skipped_no_gold,
        stats.zero_signal,
    )
    return stats


def read_ft_dataset(path: str | Path) -> list[FtRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            records.append(
                FtRecord(
                    input_text=data["input_text"],
                    target_text=data["target_text"],
                    turn_id=data["turn_id"],
                    selection_score=float(data["selection_score"]),
                )
            )
    return records

"""History enhancement: the five LLM operations that clean up a noisy
conversation before query rewriting, plus the default orchestration.

Default policy per enhancement pass:
  1. topic-switch check on the full history;
  2. if switched: keep only the last turn, then run disambiguation,
     response expansion, and pseudo-response over the truncated history
     (no summary);
  3. otherwise: run the three steps over the full history, then summarize
     the enhanced turns.
Any step can be disabled for ablations; a disabled step leaves its output
unset and the others behave as if it never existed (except the summary,
which is structurally skipped whenever a topic switch fires).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from . import prompts
from .corpus import ConversationSession, ConversationTurn
from .gateway import ChatRequest, GenerationConfig, LlmGateway

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnhanceConfig:
    """Step toggles and per-step generation budgets.

    Budgets are sized to each prompt's output contract (one label, one
    sentence, one paragraph); they are not prescribed anywhere upstream.
    """

    use_qd: bool = True
    use_re: bool = True
    use_pr: bool = True
    use_ts: bool = True
    use_hs: bool = True
    temperature: float = 0.7
    seed: int | None = None
    qd_max_tokens: int = 64
    re_max_tokens: int = 96
    pr_max_tokens: int = 96
    ts_max_tokens: int = 8
    hs_max_tokens: int = 256

    def label(self) -> str:
        """Canonical configuration label, e.g. "QD+RE+PR+TS+HS"."""
        active = [
            name
            for name, on in (
                ("QD", self.use_qd),
                ("RE", self.use_re),
                ("PR", self.use_pr),
                ("TS", self.use_ts),
                ("HS", self.use_hs),
            )
            if on
        ]
        return "+".join(active) if active else "baseline"


@dataclass(frozen=True)
class EnhancedHistory:
    """Cleaned-up view of one conversation turn's context.

    `turns` carries the (possibly truncated) history with the last
    response replaced by its expansion when that step ran. `provenance`
    records which prompt produced each populated field, with a
    ":fallback" suffix when degenerate model output forced the original
    text to be kept.
    """

    session_id: str
    turn_id: str
    turns: tuple[ConversationTurn, ...]
    disambiguated_question: str | None
    expanded_last_response: str | None
    pseudo_response: str | None
    summary: str | None
    topic_switched: bool
    provenance: dict[str, str] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.topic_switched and len(self.turns) > 1:
            raise ValueError("topic switch must truncate history to at most one turn")


class Enhancer:
    """Runs the enhancement operations against a gateway.

    Each step issues at most one gateway call per session; the steps are
    sequential within a session, and independent sessions may be enhanced
    concurrently.
    """

    def __init__(self, gateway: LlmGateway, config: EnhanceConfig | None = None):
        self.gateway = gateway
        self.config = config or EnhanceConfig()
        self.parse_warnings = 0

    def _complete(self, kind: str, user_content: str, max_tokens: int) -> str:
        request = ChatRequest(
            system_instruction=prompts.TEMPLATES[kind].instruction,
            user_content=user_content,
            config=GenerationConfig(
                temperature=self.config.temperature,
                max_new_tokens=max_tokens,
                seed=self.config.seed,
            ),
        )
        return self.gateway.complete(request).text

    def disambiguate_question(
        self, history: Iterable[ConversationTurn], question: str
    ) -> tuple[str, bool]:
        """Returns (self-contained question, fallback_used). Never empty:
        degenerate model output falls back to the input question."""
        if not question:
            raise ValueError("question must be non-empty")
        text = self._complete(
            prompts.QD, prompts.render_context(history, question), self.config.qd_max_tokens
        )
        text = text.strip()
        if "\n" in text:
            text = text.splitlines()[0].strip()
        if not text:
            return question, True
        return text, False

    def expand_response(self, history: list[ConversationTurn]) -> tuple[str, bool] | None:
        """Expand the last system response. Returns None (no-op, no gateway
        call) when the history is empty or the last response is empty;
        otherwise (expansion, fallback_used)."""
        if not history or not history[-1].response.strip():
            return None
        text = self._complete(
            prompts.RE, prompts.render_turns(history), self.config.re_max_tokens
        ).strip()
        if not text:
            return history[-1].response, True
        return text, False

    def pseudo_response(self, history: Iterable[ConversationTurn], question: str) -> str | None:
        """Speculative answer to the new question; None when the model
        produced nothing usable (the step then contributes nothing)."""
        if not question:
            raise ValueError("question must be non-empty")
        text = self._complete(
            prompts.PR, prompts.render_context(history, question), self.config.pr_max_tokens
        ).strip()
        return text or None

    def detect_topic_switch(self, history: list[ConversationTurn], question: str) -> bool:
        """True iff the model answers "new_topic" unambiguously. Ambiguous
        output (both labels or neither) counts as no switch: keeping
        history is the recoverable failure mode."""
        if not history:
            return False
        text = self._complete(
            prompts.TS, prompts.render_context(history, question), self.config.ts_max_tokens
        ).lower()
        has_new = "new_topic" in text
        has_old = "old_topic" in text
        if has_new and not has_old:
            return True
        if has_new == has_old:
            self.parse_warnings += 1
            logger.warning("ambiguous topic-switch output %r, assuming old topic", text[:80])
        return False

    def summarize_history(self, enhanced_turns: list[ConversationTurn]) -> str | None:
        """One-paragraph summary of the (enhanced) history; None on empty
        model output, in which case callers fall back to pair rendering."""
        if not enhanced_turns:
            raise ValueError("summarize_history needs at least one turn")
        text = self._complete(
            prompts.HS, prompts.render_turns(enhanced_turns), self.config.hs_max_tokens
        ).strip()
        return text or None

    def enhance_history(self, session: ConversationSession) -> EnhancedHistory:
        cfg = self.config
        provenance: dict[str, str] = {}
        warnings: list[str] = []
        turns = list(session.turns)
        question = session.current_question

        switched = False
        if cfg.use_ts and turns:
            switched = self.detect_topic_switch(turns, question)
        if switched:
            turns = turns[-1:]

        disambiguated: str | None = None
        if cfg.use_qd:
            disambiguated, fell_back = self.disambiguate_question(turns, question)
            provenance["disambiguated_question"] = "QD:fallback" if fell_back else "QD"
            if fell_back:
                warnings.append("QD produced empty output; kept original question")

        expanded: str | None = None
        enhanced_turns = list(turns)
        if cfg.use_re:
            result = self.expand_response(turns)
            if result is not None:
                expanded, fell_back = result
                provenance["expanded_last_response"] = "RE:fallback" if fell_back else "RE"
                if fell_back:
                    warnings.append("RE produced empty output; kept original response")
                enhanced_turns[-1] = replace(enhanced_turns[-1], response=expanded)

        pseudo: str | None = None
        if cfg.use_pr:
            pseudo = self.pseudo_response(turns, question)
            if pseudo is not None:
                provenance["pseudo_response"] = "PR"
            else:
                warnings.append("PR produced empty output; field unset")

        summary: str | None = None
        if cfg.use_hs and not switched and enhanced_turns:
            summary = self.summarize_history(enhanced_turns)
            if summary is not None:
                provenance["summary"] = "HS"
            else:
                provenance["summary_fallback"] = "HS:fallback"
                warnings.append("HS produced empty output; renderer will use Q/A pairs")

        return EnhancedHistory(
            session_id=session.session_id,
            turn_id=session.turn_id,
            turns=tuple(enhanced_turns),
            disambiguated_question=disambiguated,
            expanded_last_response=expanded,
            pseudo_response=pseudo,
            summary=summary,
            topic_switched=switched,
            provenance=provenance,
            warnings=tuple(warnings),
        )


def enhanced_to_record(enhanced: EnhancedHistory) -> dict:
    return {
        "session_id": enhanced.session_id,
        "turn_id": enhanced.turn_id,
        "turns": [{"question": t.question, "response": t.response} for t in enhanced.turns],
        "disambiguated_question": enhanced.disambiguated_question,
        "expanded_last_response": enhanced.expanded_last_response,
        "pseudo_response": enhanced.pseudo_response,
        "summary": enhanced.summary,
        "topic_switched": enhanced.topic_switched,
        "provenance": enhanced.provenance,
        "warnings": list(enhanced.warnings),
    }


def record_to_enhanced(record: dict) -> EnhancedHistory:
    return EnhancedHistory(
        session_id=record["session_id"],
        turn_id=record["turn_id"],
        turns=tuple(
            ConversationTurn(question=t["question"], response=t.get("response", ""))
            for t in record["turns"]
        ),
        disambiguated_question=record.get("disambiguated_question"),
        expanded_last_response=record.get("expanded_last_response"),
        pseudo_response=record.get("pseudo_response"),
        summary=record.get("summary"),
        topic_switched=bool(record["topic_switched"]),
        provenance=dict(record.get("provenance", {})),
        warnings=tuple(record.get("warnings", ())),
    )


def write_enhanced(enhanced: Iterable[EnhancedHistory], path: str | Path) -> None:
    """Dump enhancement results as json-lines, the hand-off format between
    the enhance stage and the rewrite/supervise stages."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for item in enhanced:
            fh.write(json.dumps(enhanced_to_record(item), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_enhanced(path: str | Path) -> dict[str, EnhancedHistory]:
    """Load an enhancement dump keyed by turn_id."""
    result: dict[str, EnhancedHistory] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            item = record_to_enhanced(json.loads(line))
            if item.turn_id in result:
                logger.warning("duplicate turn_id %s in %s; keeping the last", item.turn_id, path)
            result[item.turn_id] = item
    return result

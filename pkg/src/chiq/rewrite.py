"""Ad-hoc conversational query rewriting: render the rewriting prompt over
original or enhanced history and extract the search query from the model
output.

Composition rules for the enhanced input:
  - disambiguation appends its output to the question (original followed
    by the self-contained version);
  - response expansion and topic-switch truncation are already baked into
    the enhanced turns;
  - the summary, when present, replaces the pair-rendered history
    entirely;
  - the pseudo response rides along as a labeled "Expected answer:" line.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import prompts
from .corpus import ConversationSession
from .enhance import EnhanceConfig, EnhancedHistory
from .errors import FormatError
from .gateway import ChatRequest, GenerationConfig, LlmGateway
from .tokens import keep_first_tokens, keep_last_tokens

logger = logging.getLogger(__name__)

QUERY_TOKEN_LIMIT = 32
INPUT_TOKEN_LIMIT = 512

_LABEL_PARTS = ("QD", "RE", "PR", "TS", "HS")


def _validate_label(label: str) -> str:
    if label == "baseline":
        return label
    parts = label.split("+")
    if len(set(parts)) != len(parts) or any(p not in _LABEL_PARTS for p in parts):
        raise ValueError(f"invalid configuration label {label!r}")
    return label


@dataclass(frozen=True)
class RewriteRequest:
    history_rendering: str
    question: str
    pseudo_response: str | None
    configuration_label: str

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be non-empty")
        _validate_label(self.configuration_label)


@dataclass(frozen=True)
class RewrittenQuery:
    text: str
    source: str  # "llm" | "fallback"
    configuration_label: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("rewritten query must be non-empty")
        if self.source not in ("llm", "fallback"):
            raise ValueError(f"unknown source {self.source!r}")


def build_cqr_prompt(
    request: RewriteRequest,
    config: GenerationConfig | None = None,
    input_token_limit: int = INPUT_TOKEN_LIMIT,
) -> ChatRequest:
    """Assemble the rewriting chat request. The user content is truncated
    from the front to the input token budget, keeping the most recent
    context (recency matters most in a conversation)."""
    lines = []
    if request.history_rendering:
        lines.append(request.history_rendering)
    lines.append(f"New question: {request.question}")
    if request.pseudo_response:
        lines.append(f"Expected answer: {request.pseudo_response}")
    user_content = keep_last_tokens("\n".join(lines), input_token_limit)
    return ChatRequest(
        system_instruction=prompts.CQR_INSTRUCTION,
        user_content=user_content,
        config=config or GenerationConfig(),
    )


def extract_query(model_output: str) -> str | None:
    """Pull the query out of the model output.

    Tries the {"query": ...} JSON contract first (scanning for the first
    well-formed object anywhere in the text), then falls back to stripping
    code fences and "Query:" labels and taking the first non-empty line.
    Returns None when nothing usable remains; the caller substitutes the
    (disambiguated) question.
    """
    decoder = json.JSONDecoder()
    for start, char in enumerate(model_output):
        if char != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(model_output[start:])
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and isinstance(obj.get("query"), str):
            candidate = obj["query"].strip()
            # the JSON contract was honored; an empty value is a fallback
            # signal, not a cue to scavenge the raw text
            return candidate or None

    for line in model_output.splitlines():
        line = line.strip()
        if not line or line.startswith("```"):
            continue
        lowered = line.lower()
        for label in ("query:",):
            if lowered.startswith(label):
                line = line[len(label):].strip()
                break
        if line:
            return line
    return None


def rewrite_query(
    gateway: LlmGateway,
    session: ConversationSession,
    enhanced: EnhancedHistory | None = None,
    enhance_config: EnhanceConfig | None = None,
    generation: GenerationConfig | None = None,
    query_token_limit: int = QUERY_TOKEN_LIMIT,
    input_token_limit: int = INPUT_TOKEN_LIMIT,
) -> RewrittenQuery:
    """One gateway call producing a non-empty search query for the turn.

    With no enhanced history the original turns feed the prompt verbatim
    (the plain rewriting baseline). Otherwise the enhance_config decides
    which enhanced ingredients join the prompt.
    """
    cfg = enhance_config or EnhanceConfig()
    if enhanced is None:
        label = "baseline"
        history_rendering = prompts.render_turns(session.turns)
        question = session.current_question
        pseudo = None
    else:
        label = cfg.label()
        use_summary = cfg.use_hs and enhanced.summary is not None
        if use_summary:
            history_rendering = enhanced.summary
        elif cfg.use_re or cfg.use_ts:
            history_rendering = prompts.render_turns(enhanced.turns)
        else:
            history_rendering = prompts.render_turns(session.turns)
        question = session.current_question
        if cfg.use_qd and enhanced.disambiguated_question:
            question = f"{session.current_question} {enhanced.disambiguated_question}"
        pseudo = enhanced.pseudo_response if cfg.use_pr else None

    request = RewriteRequest(
        history_rendering=history_rendering,
        question=question,
        pseudo_response=pseudo,
        configuration_label=label,
    )
    chat = build_cqr_prompt(request, config=generation, input_token_limit=input_token_limit)
    output = gateway.complete(chat).text
    query = extract_query(output)
    if query is None:
        fallback = (
            enhanced.disambiguated_question
            if enhanced is not None and enhanced.disambiguated_question
            else session.current_question
        )
        logger.warning("turn %s: unusable rewrite output, falling back", session.turn_id)
        return RewrittenQuery(
            text=keep_first_tokens(fallback, query_token_limit),
            source="fallback",
            configuration_label=label,
        )
    return RewrittenQuery(
        text=keep_first_tokens(query, query_token_limit),
        source="llm",
        configuration_label=label,
    )


def write_rewrites(rewrites: Iterable[tuple[str, RewrittenQuery]], path: str | Path) -> None:
    """Dump (turn_id, query) pairs as json-lines for the retrieval stage."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for turn_id, rewritten in rewrites:
            fh.write(
                json.dumps(
                    {
                        "turn_id": turn_id,
                        "query": rewritten.text,
                        "source": rewritten.source,
                        "config": rewritten.configuration_label,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
            fh.write("\n")


def read_rewrites(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            if "turn_id" not in record or "query" not in record:
                raise FormatError(f"{path}:{lineno}: rewrite record needs turn_id and query")
            records.append(record)
    return records

"""Instruction prompts and context rendering for every LLM operation.

The instruction strings are fixed contracts: downstream parsing (the
"new_topic"/"old_topic" labels, the {"query": ""} JSON wrapper, the
numbered candidate list) depends on their exact wording, so they must not
be edited casually. Conversation context is always rendered as
"Q: .../A: ..." pairs separated by blank lines, optionally followed by a
"New question:" line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from .corpus import ConversationTurn

QD = "QD"  # question disambiguation
RE = "RE"  # response expansion
PR = "PR"  # pseudo response
TS = "TS"  # topic switch
HS = "HS"  # history summary
CQR = "CQR"  # query rewriting
SUPERVISION = "SUPERVISION"  # gold-conditioned multi-query generation

QD_INSTRUCTION = (
    "You are given a set of question-answers pairs and a new question that is "
    "ambiguous. Your goal is to rewrite the question so it becomes clear. "
    "Write the new question without any introduction."
)

# Expands the last system response into a self-contained sentence.
RE_INSTRUCTION = (
    "You are given a question-and-answer pair, where the answer is not clear. "
    "Your goal is to write a long version of the answer based on its given "
    "context. The generated answer should be one sentence only and less than "
    "20 words."
)

# Speculates a direct answer to the new question.
PR_INSTRUCTION = (
    "Given a series of question-and-answer pairs, along with a new question, "
    "your task is to give a one-sentence response to the new question."
)

TS_INSTRUCTION = (
    "Given a series of question-and-answer pairs, along with a new question, "
    "your task is to determine whether the new question continues the "
    'discussion on an existing topic or introduces a new topic. Please respond '
    'with either "new_topic" or "old_topic" as appropriate.'
)

HS_INSTRUCTION = (
    "You are given a context in the form of question-answer pairs. Your goal "
    "is to write a paragraph that summarizes the information in the context. "
    "The summary should be short with one sentence for each question answer "
    "pair."
)

CQR_INSTRUCTION = (
    "Given a series of question-and-answer pairs as context, along with a new "
    "question, your task is to convert the new question into a search engine "
    "query that can be used to retrieve relevant documents. The output should "
    'be placed in a JSON dictionary as follows: {"query": ""}'
)

SUPERVISION_INSTRUCTION = (
    "You are given a relevant passage, a series of question-and-answer pairs "
    "as context along with a new question, your task is to generate a set of "
    "search queries based on the relevancy between the new question and the "
    "relevant passage and also rely on the given context. The output format "
    "should be in a list with indexes e.g., 1. 2. 3."
)


def render_turns(turns: Iterable[ConversationTurn]) -> str:
    """Render history as "Q:/A:" pairs joined by blank lines."""
    return "\n\n".join(f"Q: {t.question}\nA: {t.response}" for t in turns)


def render_context(turns: Iterable[ConversationTurn], new_question: str | None = None) -> str:
    parts = []
    pairs = render_turns(turns)
    if pairs:
        parts.append(pairs)
    if new_question is not None:
        parts.append(f"New question: {new_question}")
    return "\n".join(parts)


@dataclass(frozen=True)
class PromptTemplate:
    kind: str
    instruction: str
    context_renderer: Callable[..., str]


def _pairs_and_question(turns, question: str) -> str:
    return render_context(turns, question)


def _pairs_only(turns) -> str:
    return render_turns(turns)


TEMPLATES: dict[str, PromptTemplate] = {
    QD: PromptTemplate(QD, QD_INSTRUCTION, _pairs_and_question),
    RE: PromptTemplate(RE, RE_INSTRUCTION, _pairs_only),
    PR: PromptTemplate(PR, PR_INSTRUCTION, _pairs_and_question),
    TS: PromptTemplate(TS, TS_INSTRUCTION, _pairs_and_question),
    HS: PromptTemplate(HS, HS_INSTRUCTION, _pairs_only),
    CQR: PromptTemplate(CQR, CQR_INSTRUCTION, _pairs_and_question),
    SUPERVISION: PromptTemplate(SUPERVISION, SUPERVISION_INSTRUCTION, _pairs_and_question),
}

_BY_INSTRUCTION = {t.instruction: kind for kind, t in TEMPLATES.items()}


def kind_of_instruction(instruction: str) -> str | None:
    """Map a system instruction back to its prompt kind (for call logs)."""
    return _BY_INSTRUCTION.get(instruction)

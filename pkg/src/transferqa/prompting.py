"""Single-sequence model input construction and model output parsing.

Input grammar (all joins are single spaces):

    input      := prefix SP question SP [choicesSeg SP] context
    choicesSeg := "Choices:" SP choice (" [sep] " choice)*

The extractive prefix is ``Extractive Question:``, the multi-choice prefix is
``Multi-Choice Question:``. Dialogue histories render each turn as
``user: <utt>`` / ``system: <utt>`` joined by single spaces, oldest first.
Serialization is deterministic: equal inputs produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyHistory
from .records import (
    DialogueTurn,
    QAExample,
    QAKind,
    SlotDescriptor,
    SlotKind,
    Speaker,
    is_none_value,
    normalize_value,
)

EXTRACTIVE_PREFIX = "Extractive Question:"
MULTI_CHOICE_PREFIX = "Multi-Choice Question:"
CHOICES_TAG = "Choices:"
CHOICE_SEPARATOR = " [sep] "
USER_TAG = "user:"
SYSTEM_TAG = "system:"

# Character budget for slot-query inputs; roughly 1024 subword tokens.
DEFAULT_CONTEXT_BUDGET = 4 * 1024

QUESTION_TEMPLATE = "what is the {slot} of the {domain} that user wants?"


@dataclass(frozen=True)
class SerializedInput:
    """One concatenated input sequence ready for a text-to-text backend."""

    text: str
    kind: QAKind


@dataclass(frozen=True)
class ParsedAnswer:
    """Normalized decoded answer; ``is_none`` marks unanswerable outputs."""

    value: str
    is_none: bool


def _compose(prefix: str, question: str, choices: list[str], context: str) -> str:
    parts = [prefix, question]
    if choices:
        parts.append(f"{CHOICES_TAG} {CHOICE_SEPARATOR.join(choices)}")
    parts.append(context)
    return " ".join(parts)


def serialize_qa(example: QAExample) -> SerializedInput:
    """Render a unified QA record into the single-sequence input layout."""
    if example.kind is QAKind.MULTI_CHOICE:
        text = _compose(MULTI_CHOICE_PREFIX, example.question, example.choices, example.context)
    else:
        text = _compose(EXTRACTIVE_PREFIX, example.question, [], example.context)
    return SerializedInput(text=text, kind=example.kind)


def serialize_dialogue_context(turns: list[DialogueTurn]) -> str:
    """Render speaker-tagged turns into one context string, original order."""
    if not turns:
        raise EmptyHistory("cannot serialize an empty dialogue history")
    rendered = []
    for turn in turns:
        tag = USER_TAG if turn.speaker is Speaker.USER else SYSTEM_TAG
        rendered.append(f"{tag} {turn.utterance}")
    return " ".join(rendered)


def slot_to_question(slot: SlotDescriptor) -> str:
    """Schema-provided question text wins; otherwise instantiate the template."""
    if slot.question:
        return slot.question
    return QUESTION_TEMPLATE.format(slot=slot.slot_name, domain=slot.domain)


def build_slot_query(
    slot: SlotDescriptor,
    turns: list[DialogueTurn],
    force_extractive: bool = False,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> SerializedInput:
    """Build the model input for one slot over a dialogue history.

    Categorical slots become multi-choice queries over their candidates
    unless ``force_extractive`` is set; non-categorical slots are always
    extractive. Histories whose serialization exceeds ``context_budget``
    characters drop the oldest turns first (the most recent turn is always
    kept).
    """
    if not turns:
        raise EmptyHistory("cannot build a slot query without dialogue history")
    question = slot_to_question(slot)
    if force_extractive or slot.kind is SlotKind.NON_CATEGORICAL:
        kind, choices = QAKind.EXTRACTIVE, []
        prefix = EXTRACTIVE_PREFIX
    else:
        kind, choices = QAKind.MULTI_CHOICE, list(slot.value_candidates)
        prefix = MULTI_CHOICE_PREFIX

    window = list(turns)
    text = _compose(prefix, question, choices, serialize_dialogue_context(window))
    while len(text) > context_budget and len(window) > 1:
        window = window[1:]
        text = _compose(prefix, question, choices, serialize_dialogue_context(window))
    return SerializedInput(text=text, kind=kind)


def parse_answer(output_text: str) -> ParsedAnswer:
    """Normalize a decoded string; empty or ``"none"`` outputs mean none."""
    if is_none_value(output_text):
        return ParsedAnswer(value="", is_none=True)
    return ParsedAnswer(value=normalize_value(output_text), is_none=False)

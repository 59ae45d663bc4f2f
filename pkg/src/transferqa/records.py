"""Canonical in-memory records: unified QA examples, slots, dialogues, states.

All value comparison in the toolkit happens on strings passed through
:func:`normalize_value`, applied identically to gold annotations and model
predictions. The literal string ``"none"`` is a reserved sentinel meaning
"unanswerable" / "slot not assigned" and never appears as a stored state value.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum

NONE_SENTINEL = "none"

_WS_RUN = re.compile(r"\s+")


def normalize_value(text: str) -> str:
    """Unicode NFC, lowercase, collapse whitespace runs, trim."""
    text = unicodedata.normalize("NFC", text)
    text = text.lower()
    text = _WS_RUN.sub(" ", text)
    return text.strip()


def is_none_value(text: str) -> bool:
    normalized = normalize_value(text)
    return normalized == NONE_SENTINEL or normalized == ""


class QAKind(str, Enum):
    EXTRACTIVE = "extractive"
    MULTI_CHOICE = "multi_choice"


class SlotKind(str, Enum):
    CATEGORICAL = "categorical"
    NON_CATEGORICAL = "non_categorical"


class Speaker(str, Enum):
    USER = "user"
    SYSTEM = "system"


@dataclass
class QAExample:
    """One unified QA record, extractive or multi-choice.

    ``answer_char_span`` is a half-open ``(start, end)`` character range into
    ``context``; when present for an answerable record,
    ``context[start:end] == answer`` must hold exactly.
    """

    id: str
    kind: QAKind
    question: str
    context: str
    choices: list[str] = field(default_factory=list)
    answer: str = NONE_SENTINEL
    answer_char_span: tuple[int, int] | None = None
    source: str = ""

    def validate(self) -> None:
        """Raise ValueError when an invariant is broken."""
        if self.kind is QAKind.EXTRACTIVE:
            if self.choices:
                raise ValueError(f"{self.id}: extractive example carries choices")
        else:
            if len(self.choices) < 2:
                raise ValueError(f"{self.id}: multi-choice example needs >=2 choices")
            if len(set(self.choices)) != len(self.choices):
                raise ValueError(f"{self.id}: duplicate choices")
            if self.answer != NONE_SENTINEL and self.answer not in self.choices:
                raise ValueError(f"{self.id}: answer not among choices")
        if self.answer != NONE_SENTINEL and self.answer_char_span is not None:
            start, end = self.answer_char_span
            if self.context[start:end] != self.answer:
                raise ValueError(f"{self.id}: span text differs from answer")
        if self.answer == NONE_SENTINEL and self.answer_char_span is not None:
            raise ValueError(f"{self.id}: unanswerable example carries a span")

    @property
    def is_answerable(self) -> bool:
        return self.answer != NONE_SENTINEL

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "question": self.question,
            "context": self.context,
            "choices": list(self.choices),
            "answer": self.answer,
            "answer_char_span": list(self.answer_char_span) if self.answer_char_span else None,
            "source": self.source,
        }

    @classmethod
    def from_json_dict(cls, record: dict) -> "QAExample":
        span = record.get("answer_char_span")
        return cls(
            id=record["id"],
            kind=QAKind(record["kind"]),
            question=record["question"],
            context=record["context"],
            choices=list(record.get("choices") or []),
            answer=record.get("answer", NONE_SENTINEL),
            answer_char_span=(span[0], span[1]) if span else None,
            source=record.get("source", ""),
        )


@dataclass
class SlotDescriptor:
    """One DST slot: identity, kind, candidate values, and its question text."""

    domain: str
    slot_name: str
    kind: SlotKind
    value_candidates: list[str] = field(default_factory=list)
    question: str = ""

    @property
    def slot_id(self) -> str:
        return f"{self.domain}-{self.slot_name}"

    def validate(self) -> None:
        if not self.domain or not self.slot_name:
            raise ValueError("slot needs nonempty domain and slot_name")
        if self.kind is SlotKind.CATEGORICAL:
            if not self.value_candidates:
                raise ValueError(f"{self.slot_id}: categorical slot without candidates")
            if len(set(self.value_candidates)) != len(self.value_candidates):
                raise ValueError(f"{self.slot_id}: duplicate candidates")
        else:
            if self.value_candidates:
                raise ValueError(f"{self.slot_id}: non-categorical slot carries candidates")


@dataclass
class DialogueTurn:
    speaker: Speaker
    utterance: str

    def validate(self) -> None:
        if not self.utterance.strip():
            raise ValueError("empty utterance")


# A dialogue state maps slot_id -> normalized value. Absence of a key means
# the slot is "none"; the sentinel itself is never stored as a value.
DialogueState = dict[str, str]


def validate_state(state: DialogueState) -> None:
    for slot_id, value in state.items():
        if not value or value != value.strip():
            raise ValueError(f"{slot_id}: state value must be nonempty and trimmed")
        if value == NONE_SENTINEL:
            raise ValueError(f"{slot_id}: 'none' must be encoded by absence")


@dataclass
class Dialogue:
    """Speaker-tagged turns plus gold states keyed by user-turn index.

    Keys of ``gold_states`` are indices into ``turns`` and must address User
    turns.
    """

    id: str
    turns: list[DialogueTurn]
    gold_states: dict[int, DialogueState] = field(default_factory=dict)

    def validate(self, known_slots: set[str] | None = None) -> None:
        for turn in self.turns:
            turn.validate()
        for turn_index, state in self.gold_states.items():
            if turn_index < 0 or turn_index >= len(self.turns):
                raise ValueError(f"{self.id}: gold state index {turn_index} out of range")
            if self.turns[turn_index].speaker is not Speaker.USER:
                raise ValueError(f"{self.id}: gold state at non-user turn {turn_index}")
            validate_state(state)
            if known_slots is not None:
                for slot_id in state:
                    if slot_id not in known_slots:
                        raise ValueError(f"{self.id}: unknown slot {slot_id}")

    def user_turn_indices(self) -> list[int]:
        return [i for i, turn in enumerate(self.turns) if turn.speaker is Speaker.USER]

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "turns": [{"speaker": t.speaker.value, "utterance": t.utterance} for t in self.turns],
            "gold_states": {str(i): dict(state) for i, state in sorted(self.gold_states.items())},
        }

    @classmethod
    def from_json_dict(cls, record: dict) -> "Dialogue":
        return cls(
            id=record["id"],
            turns=[
                DialogueTurn(Speaker(t["speaker"]), t["utterance"]) for t in record["turns"]
            ],
            gold_states={int(i): dict(state) for i, state in record.get("gold_states", {}).items()},
        )

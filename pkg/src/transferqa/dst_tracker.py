"""Two-pass zero-shot dialogue state tracking.

Pass 1 queries every slot with the extractive formulation over the full
history prefix; slots whose decoded answer is not ``"none"`` are gated
active. Pass 2 re-queries the gated-active categorical slots with the
multi-choice formulation and takes that answer as the value; gated-active
non-categorical slots keep their pass-1 value. A pass-2 ``"none"`` drops the
slot (gate flipped false). Values enter the state only after
canonicalization. Turns are tracked independently: every turn re-reads the
whole history prefix and no prediction is carried over.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .answer_backend import AnswerRequest, Backend, answer_batch
from .corpus_io import _iter_jsonl, atomic_write_text
from .errors import EmptyHistory, MalformedFile
from .prompting import DEFAULT_CONTEXT_BUDGET, build_slot_query, parse_answer
from .records import (
    Dialogue,
    DialogueState,
    DialogueTurn,
    SlotDescriptor,
    SlotKind,
    Speaker,
    normalize_value,
)

_TIME_12H = re.compile(r"^(\d{1,2})(?::(\d{2}))?\s*([ap]m)$")


@dataclass
class AliasTable:
    """Editable canonicalization data: exact-value aliases plus the markers
    that identify time-typed slots (matched against the slot name)."""

    value_aliases: dict[str, str] = field(default_factory=dict)
    time_slot_markers: list[str] = field(default_factory=lambda: ["time", "leave", "arrive"])

    @classmethod
    def load(cls, path: str | Path | None = None) -> "AliasTable":
        if path is None:
            payload = json.loads(
                resources.files("transferqa").joinpath("data/aliases.json").read_text("utf-8")
            )
        else:
            payload = json.loads(Path(path).read_text("utf-8"))
        return cls(
            value_aliases=dict(payload.get("value_aliases", {})),
            time_slot_markers=list(payload.get("time_slot_markers", [])),
        )

    def is_time_slot(self, slot: SlotDescriptor) -> bool:
        name = slot.slot_name.lower()
        return any(marker in name for marker in self.time_slot_markers)


_DEFAULT_ALIASES: AliasTable | None = None


def default_aliases() -> AliasTable:
    global _DEFAULT_ALIASES
    if _DEFAULT_ALIASES is None:
        _DEFAULT_ALIASES = AliasTable.load()
    return _DEFAULT_ALIASES


def _rewrite_time(value: str) -> str:
    """Rewrite an unambiguous 12-hour clock value to 24-hour form."""
    match = _TIME_12H.match(value)
    if not match:
        return value
    hour = int(match.group(1))
    minute = match.group(2) or "00"
    meridiem = match.group(3)
    if hour > 12 or hour == 0:
        return value
    if meridiem == "pm" and hour != 12:
        hour += 12
    elif meridiem == "am" and hour == 12:
        hour = 0
    return f"{hour:02d}:{minute}"


def _token_overlap(a: str, b: str) -> float:
    """Jaccard overlap of whitespace tokens."""
    tokens_a, tokens_b = set(a.split()), set(b.split())
    if not tokens_a or not tokens_b:
        return 0.0
    return len(tokens_a & tokens_b) / len(tokens_a | tokens_b)


CANDIDATE_MATCH_THRESHOLD = 0.8


def canonicalize(value: str, slot: SlotDescriptor, aliases: AliasTable | None = None) -> str:
    """Map a decoded value onto its canonical surface form.

    Normalization first, then the alias table (plus 12h->24h rewriting for
    time-typed slots). For categorical slots a non-candidate value snaps to
    the candidate with the highest token overlap when that score reaches
    CANDIDATE_MATCH_THRESHOLD and the argmax is unique; otherwise the
    normalized value is kept as-is.
    """
    aliases = aliases or default_aliases()
    value = normalize_value(value)
    value = aliases.value_aliases.get(value, value)
    if aliases.is_time_slot(slot):
        value = _rewrite_time(value)
    if slot.kind is SlotKind.CATEGORICAL:
        candidates = [normalize_value(c) for c in slot.value_candidates]
        if value in candidates:
            return value
        scores = [(_token_overlap(value, candidate), candidate) for candidate in candidates]
        best = max(score for score, _ in scores)
        if best >= CANDIDATE_MATCH_THRESHOLD:
            top = [candidate for score, candidate in scores if score == best]
            if len(top) == 1:
                return top[0]
    return value


@dataclass
class TurnPrediction:
    """Predicted state for one user turn plus gate/value diagnostics.

    ``gate`` covers every schema slot; a slot appears in ``state`` iff its
    gate is true. ``raw_values`` keeps the non-none pass-1 decoded strings;
    it is ``None`` when a predictions file was loaded without diagnostics.
    """

    dialogue_id: str
    turn_index: int
    state: DialogueState
    gate: dict[str, bool] = field(default_factory=dict)
    raw_values: dict[str, str] | None = None

    def prediction_json(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "state": dict(sorted(self.state.items())),
        }

    def diagnostics_json(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "gate": dict(sorted(self.gate.items())),
            "raw_values": dict(sorted((self.raw_values or {}).items())),
        }


def track_turn(
    turns: list[DialogueTurn],
    schema: list[SlotDescriptor],
    backend: Backend,
    dialogue_id: str = "",
    turn_index: int | None = None,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    aliases: AliasTable | None = None,
) -> TurnPrediction:
    """Track one user turn given the history prefix ending at that turn."""
    if not turns:
        raise EmptyHistory("track_turn needs a nonempty history prefix")
    if turns[-1].speaker is not Speaker.USER:
        raise ValueError("history prefix must end with a user turn")
    if not schema:
        raise ValueError("schema must be nonempty")
    if turn_index is None:
        turn_index = len(turns) - 1

    # Pass 1: every slot, extractive formulation.
    pass1_requests = [
        AnswerRequest(
            id=f"p1:{slot.slot_id}",
            input_text=build_slot_query(slot, turns, force_extractive=True,
                                        context_budget=context_budget).text,
        )
        for slot in schema
    ]
    pass1 = answer_batch(pass1_requests, backend)
    gate: dict[str, bool] = {}
    raw_values: dict[str, str] = {}
    for slot, response in zip(schema, pass1):
        parsed = parse_answer(response.output_text)
        gate[slot.slot_id] = not parsed.is_none
        if not parsed.is_none:
            raw_values[slot.slot_id] = parsed.value

    # Pass 2: gated-active categorical slots, multi-choice formulation.
    active_categorical = [
        slot for slot in schema if gate[slot.slot_id] and slot.kind is SlotKind.CATEGORICAL
    ]
    pass2_by_slot = {}
    if active_categorical:
        pass2_requests = [
            AnswerRequest(
                id=f"p2:{slot.slot_id}",
                input_text=build_slot_query(slot, turns, force_extractive=False,
                                            context_budget=context_budget).text,
            )
            for slot in active_categorical
        ]
        for slot, response in zip(active_categorical, answer_batch(pass2_requests, backend)):
            pass2_by_slot[slot.slot_id] = parse_answer(response.output_text)

    state: DialogueState = {}
    for slot in schema:
        if not gate[slot.slot_id]:
            continue
        if slot.kind is SlotKind.CATEGORICAL:
            parsed = pass2_by_slot[slot.slot_id]
            if parsed.is_none:
                gate[slot.slot_id] = False  # multi-choice pass is authoritative
                continue
            state[slot.slot_id] = canonicalize(parsed.value, slot, aliases)
        else:
            state[slot.slot_id] = canonicalize(raw_values[slot.slot_id], slot, aliases)
    return TurnPrediction(
        dialogue_id=dialogue_id,
        turn_index=turn_index,
        state=state,
        gate=gate,
        raw_values=raw_values,
    )


def track_dialogue(
    dialogue: Dialogue,
    schema: list[SlotDescriptor],
    backend: Backend,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    aliases: AliasTable | None = None,
) -> list[TurnPrediction]:
    """Track every user turn of a dialogue independently."""
    return [
        track_turn(
            dialogue.turns[: turn_index + 1],
            schema,
            backend,
            dialogue_id=dialogue.id,
            turn_index=turn_index,
            context_budget=context_budget,
            aliases=aliases,
        )
        for turn_index in dialogue.user_turn_indices()
    ]


def track_corpus(
    dialogues: list[Dialogue],
    schema: list[SlotDescriptor],
    backend: Backend,
    workers: int | None = None,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    aliases: AliasTable | None = None,
) -> list[TurnPrediction]:
    """Track dialogues over a worker pool; output order is deterministic
    (input dialogue order, then turn order) regardless of completion order.
    ``workers`` defaults to the available parallelism."""
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(dialogues) <= 1:
        per_dialogue = [track_dialogue(d, schema, backend, context_budget, aliases) for d in dialogues]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_dialogue = list(
                pool.map(lambda d: track_dialogue(d, schema, backend, context_budget, aliases), dialogues)
            )
    return [prediction for chunk in per_dialogue for prediction in chunk]


# --------------------------------------------------------------------------
# predictions / diagnostics files


def write_predictions_jsonl(path: str | Path, predictions: Iterable[TurnPrediction]) -> int:
    lines = [json.dumps(p.prediction_json(), ensure_ascii=False) for p in predictions]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def write_diagnostics_jsonl(path: str | Path, predictions: Iterable[TurnPrediction]) -> int:
    lines = [json.dumps(p.diagnostics_json(), ensure_ascii=False) for p in predictions]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def read_predictions_jsonl(
    path: str | Path,
    diagnostics_path: str | Path | None = None,
    schema: list[SlotDescriptor] | None = None,
) -> list[TurnPrediction]:
    """Load predictions, optionally merging gate/raw-value diagnostics.

    Without diagnostics the gate is reconstructed from the state keys (plus
    all-false entries for the remaining schema slots when a schema is given).
    """
    predictions = []
    for record in _iter_jsonl(path):
        try:
            state = {slot: str(value) for slot, value in record["state"].items()}
            prediction = TurnPrediction(
                dialogue_id=str(record["dialogue_id"]),
                turn_index=int(record["turn_index"]),
                state=state,
                gate={slot: True for slot in state},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
        if schema:
            for slot in schema:
                prediction.gate.setdefault(slot.slot_id, False)
        predictions.append(prediction)
    if diagnostics_path is not None:
        by_key = {(p.dialogue_id, p.turn_index): p for p in predictions}
        for record in _iter_jsonl(diagnostics_path):
            key = (str(record["dialogue_id"]), int(record["turn_index"]))
            if key not in by_key:
                raise MalformedFile(f"{diagnostics_path}: diagnostics for unknown turn {key}")
            by_key[key].gate = {s: bool(v) for s, v in record.get("gate", {}).items()}
            by_key[key].raw_values = {s: str(v) for s, v in record.get("raw_values", {}).items()}
    return predictions

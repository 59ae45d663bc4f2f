"""Metrics over tracked dialogues: JGA, AGA, SGA, per-domain JGA, the gate
error taxonomy, and oracle-gate rescoring.

Matching is exact string equality after the shared normalization; a turn is
jointly correct only when its whole predicted state equals gold (absence
means none on both sides). AGA micro-averages over gold-active (turn, slot)
pairs; the per-turn macro variant is available behind a flag. Per-domain JGA
restricts states to the domain's slots and scores the turns of dialogues
whose gold annotations ever touch the domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus_io import atomic_write_text
from .dst_tracker import TurnPrediction
from .errors import (
    EvaluationError,
    MissingDiagnostics,
    MissingPrediction,
    NoActiveSlots,
    UnknownDomain,
)
from .records import Dialogue, SlotDescriptor, is_none_value, normalize_value

TurnKey = tuple[str, int]


def _norm_state(state: dict[str, str]) -> dict[str, str]:
    cleaned = {}
    for slot_id, value in state.items():
        if is_none_value(value):
            continue
        cleaned[slot_id] = normalize_value(value)
    return cleaned


def gold_turns(golds: list[Dialogue]) -> list[tuple[TurnKey, dict[str, str]]]:
    """Annotated user turns in corpus order, states normalized."""
    turns = []
    for dialogue in golds:
        for turn_index in sorted(dialogue.gold_states):
            turns.append(((dialogue.id, turn_index), _norm_state(dialogue.gold_states[turn_index])))
    return turns


def _index_predictions(predictions: list[TurnPrediction]) -> dict[TurnKey, TurnPrediction]:
    by_key: dict[TurnKey, TurnPrediction] = {}
    for prediction in predictions:
        key = (prediction.dialogue_id, prediction.turn_index)
        if key in by_key:
            raise EvaluationError(f"duplicate prediction for {key}")
        by_key[key] = prediction
    return by_key


def _paired(
    predictions: list[TurnPrediction], golds: list[Dialogue]
) -> list[tuple[TurnKey, dict[str, str], TurnPrediction]]:
    by_key = _index_predictions(predictions)
    paired = []
    for key, gold_state in gold_turns(golds):
        if key not in by_key:
            raise MissingPrediction(key[0], key[1])
        paired.append((key, gold_state, by_key[key]))
    return paired


def joint_goal_accuracy(predictions: list[TurnPrediction], golds: list[Dialogue]) -> float:
    """Fraction of turns whose whole predicted state matches gold exactly."""
    paired = _paired(predictions, golds)
    if not paired:
        raise EvaluationError("no gold turns to evaluate")
    correct = sum(1 for _, gold, pred in paired if _norm_state(pred.state) == gold)
    return correct / len(paired)


def average_goal_accuracy(
    predictions: list[TurnPrediction], golds: list[Dialogue], macro: bool = False
) -> float:
    """Accuracy over gold-active slot instances.

    Micro (default): one pool over all gold-active (turn, slot) pairs.
    Macro: mean of per-turn accuracies over turns with at least one active
    slot.
    """
    paired = _paired(predictions, golds)
    per_turn: list[tuple[int, int]] = []
    for _, gold, pred in paired:
        if not gold:
            continue
        state = _norm_state(pred.state)
        hits = sum(1 for slot_id, value in gold.items() if state.get(slot_id) == value)
        per_turn.append((hits, len(gold)))
    if not per_turn:
        raise NoActiveSlots("corpus has no gold-active slot instances")
    if macro:
        return sum(hits / total for hits, total in per_turn) / len(per_turn)
    return sum(hits for hits, _ in per_turn) / sum(total for _, total in per_turn)


def per_domain_jga(
    predictions: list[TurnPrediction],
    golds: list[Dialogue],
    schema: list[SlotDescriptor],
    domain: str,
    active_turns_only: bool = False,
) -> float:
    """JGA restricted to one domain's slots.

    Scores all turns of dialogues whose gold annotations ever touch the
    domain; ``active_turns_only`` narrows that to turns where the domain is
    active in gold.
    """
    domain_slots = {slot.slot_id for slot in schema if slot.domain == domain}
    if not domain_slots:
        raise UnknownDomain(f"domain {domain!r} has no slots in the schema")
    by_key = _index_predictions(predictions)

    normalized_turns = gold_turns(golds)
    touching = {
        key[0]
        for key, state in normalized_turns
        if any(slot_id in domain_slots for slot_id in state)
    }
    total = 0
    correct = 0
    for key, gold in normalized_turns:
        if key[0] not in touching:
            continue
        gold_domain = {s: v for s, v in gold.items() if s in domain_slots}
        if active_turns_only and not gold_domain:
            continue
        if key not in by_key:
            raise MissingPrediction(key[0], key[1])
        pred_domain = {
            s: v for s, v in _norm_state(by_key[key].state).items() if s in domain_slots
        }
        total += 1
        if pred_domain == gold_domain:
            correct += 1
    if total == 0:
        raise EvaluationError(f"no turns selected for domain {domain!r}")
    return correct / total


def _pair_universe(
    prediction: TurnPrediction, gold: dict[str, str], schema: list[SlotDescriptor] | None
) -> set[str]:
    if schema:
        return {slot.slot_id for slot in schema}
    return set(prediction.gate) | set(gold)


def slot_gate_accuracy(
    predictions: list[TurnPrediction],
    golds: list[Dialogue],
    schema: list[SlotDescriptor] | None = None,
) -> float:
    """Share of (turn, slot) pairs whose active/none decision matches gold."""
    paired = _paired(predictions, golds)
    total = 0
    correct = 0
    for _, gold, pred in paired:
        for slot_id in _pair_universe(pred, gold, schema):
            total += 1
            if (slot_id in gold) == pred.gate.get(slot_id, False):
                correct += 1
    if total == 0:
        raise EvaluationError("no (turn, slot) pairs to evaluate")
    return correct / total


@dataclass
class ErrorTaxonomy:
    """Distribution of erroneous (turn, slot) pairs across the three causes."""

    false_positive_gate: float
    false_negative_gate: float
    value_error: float
    counts: dict[str, int] = field(default_factory=dict)
    has_errors: bool = True

    def to_json_dict(self) -> dict:
        return {
            "false_positive_gate": self.false_positive_gate,
            "false_negative_gate": self.false_negative_gate,
            "value_error": self.value_error,
            "counts": dict(self.counts),
            "has_errors": self.has_errors,
        }


def error_taxonomy(predictions: list[TurnPrediction], golds: list[Dialogue]) -> ErrorTaxonomy:
    """Classify every erroneous (turn, slot) pair.

    false_positive_gate: gold none, predicted active; false_negative_gate:
    gold active, predicted none; value_error: both active, values differ.
    With zero errors the fractions are all zero and ``has_errors`` is unset.
    """
    paired = _paired(predictions, golds)
    fp = fn = ve = 0
    for _, gold, pred in paired:
        state = _norm_state(pred.state)
        for slot_id in set(pred.gate) | set(gold) | set(state):
            gold_active = slot_id in gold
            pred_active = pred.gate.get(slot_id, slot_id in state)
            if pred_active and not gold_active:
                fp += 1
            elif gold_active and not pred_active:
                fn += 1
            elif gold_active and pred_active and state.get(slot_id) != gold[slot_id]:
                ve += 1
    total = fp + fn + ve
    counts = {"false_positive_gate": fp, "false_negative_gate": fn, "value_error": ve}
    if total == 0:
        return ErrorTaxonomy(0.0, 0.0, 0.0, counts=counts, has_errors=False)
    return ErrorTaxonomy(fp / total, fn / total, ve / total, counts=counts, has_errors=True)


def oracle_gate_rescore(
    predictions: list[TurnPrediction], golds: list[Dialogue]
) -> dict[str, float]:
    """Recompute JGA/AGA with gold gates and the model's predicted values.

    Each state is rebuilt to contain exactly the gold-active slots, valued by
    the prediction's final value when present, else its pass-1 raw value.
    Slots whose available value is none stay absent.
    """
    for prediction in predictions:
        if prediction.raw_values is None:
            raise MissingDiagnostics(
                f"{prediction.dialogue_id}:{prediction.turn_index} has no pass-1 raw values"
            )
    paired = _paired(predictions, golds)
    if not paired:
        raise EvaluationError("no gold turns to evaluate")
    jga_correct = 0
    active_total = 0
    active_hits = 0
    for _, gold, pred in paired:
        state = _norm_state(pred.state)
        rebuilt = {}
        for slot_id in gold:
            value = state.get(slot_id) or pred.raw_values.get(slot_id, "")
            if not is_none_value(value):
                rebuilt[slot_id] = normalize_value(value)
        if rebuilt == gold:
            jga_correct += 1
        active_total += len(gold)
        active_hits += sum(1 for s, v in gold.items() if rebuilt.get(s) == v)
    result = {"jga": jga_correct / len(paired)}
    result["aga"] = active_hits / active_total if active_total else 0.0
    return result


@dataclass
class MetricsReport:
    """Everything the evaluate command emits."""

    jga: float
    aga: float
    sga: float
    per_domain_jga: dict[str, float] = field(default_factory=dict)
    error_taxonomy: ErrorTaxonomy | None = None
    oracle_gate: dict[str, float] | None = None
    counts: dict[str, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        payload = {
            "jga": self.jga,
            "aga": self.aga,
            "sga": self.sga,
            "per_domain_jga": dict(self.per_domain_jga),
            "error_taxonomy": self.error_taxonomy.to_json_dict() if self.error_taxonomy else None,
            "counts": dict(self.counts),
        }
        if self.oracle_gate is not None:
            payload["oracle_gate"] = dict(self.oracle_gate)
        return payload

    def write_json(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")


def evaluate_corpus(
    predictions: list[TurnPrediction],
    golds: list[Dialogue],
    schema: list[SlotDescriptor],
    domains: list[str] | None = None,
    oracle_gate: bool = False,
    aga_macro: bool = False,
    per_domain_active_turns_only: bool = False,
) -> MetricsReport:
    """Run the full metric suite and assemble one report."""
    paired = _paired(predictions, golds)
    report = MetricsReport(
        jga=joint_goal_accuracy(predictions, golds),
        aga=average_goal_accuracy(predictions, golds, macro=aga_macro),
        sga=slot_gate_accuracy(predictions, golds, schema),
        error_taxonomy=error_taxonomy(predictions, golds),
        counts={
            "turns": len(paired),
            "slots_evaluated": len(paired) * len(schema),
            "gold_active_pairs": sum(len(gold) for _, gold, _ in paired),
        },
    )
    if domains is None:
        domains = sorted({slot.domain for slot in schema})
    for domain in domains:
        report.per_domain_jga[domain] = per_domain_jga(
            predictions, golds, schema, domain, active_turns_only=per_domain_active_turns_only
        )
    if oracle_gate:
        report.oracle_gate = oracle_gate_rescore(predictions, golds)
    return report


def per_slot_accuracy(
    predictions: list[TurnPrediction], golds: list[Dialogue], schema: list[SlotDescriptor]
) -> list[dict]:
    """Per-slot gate/value accuracy rows for the CSV breakdown."""
    paired = _paired(predictions, golds)
    rows = []
    for slot in schema:
        gate_correct = 0
        value_hits = 0
        gold_active = 0
        for _, gold, pred in paired:
            state = _norm_state(pred.state)
            if (slot.slot_id in gold) == pred.gate.get(slot.slot_id, False):
                gate_correct += 1
            if slot.slot_id in gold:
                gold_active += 1
                if state.get(slot.slot_id) == gold[slot.slot_id]:
                    value_hits += 1
        rows.append(
            {
                "slot_id": slot.slot_id,
                "domain": slot.domain,
                "kind": slot.kind.value,
                "gate_accuracy": gate_correct / len(paired) if paired else 0.0,
                "gold_active": gold_active,
                "value_accuracy": value_hits / gold_active if gold_active else None,
            }
        )
    return rows

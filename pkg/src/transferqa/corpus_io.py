"""Parsers for external QA / dialogue datasets and the toolkit's own formats.

External formats supported:
  * extractive QA: SQuAD-2.0 JSON, MRQA JSONL
  * multi-choice QA: RACE JSON, DREAM JSON
  * dialogues: MultiWOZ JSON (TRADE-style preprocessed layout), SGD JSON

Toolkit formats (canonical interchange, one JSON record per line, UTF-8):
  * unified QA JSONL: ``{"id","kind","question","context","choices","answer","answer_char_span","source"}``
  * dialogue JSONL:   ``{"id","turns":[{"speaker","utterance"}],"gold_states":{"<turn>":{slot:value}}}``
  * schema JSON:      ``{"domains":[{"name","slots":[{"name","kind","candidates","question"}]}]}``
  * predictions JSONL (written by the tracker, read back by ``evaluate``):
    ``{"dialogue_id","turn_index","state":{slot_id:value}}``

Records that fail the record invariants (span noise, duplicate ids) are
dropped and counted rather than aborting the load; syntactically broken files
raise :class:`~transferqa.errors.MalformedFile`.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import (
    DuplicateSlot,
    GoldIndexOutOfRange,
    MalformedFile,
    UnknownSlot,
)
from .records import (
    NONE_SENTINEL,
    Dialogue,
    DialogueTurn,
    QAExample,
    QAKind,
    SlotDescriptor,
    SlotKind,
    Speaker,
    normalize_value,
)


class ExtractiveFormat(str, Enum):
    SQUAD2_JSON = "squad2"
    MRQA_JSONL = "mrqa"


class MultiChoiceFormat(str, Enum):
    RACE_JSON = "race"
    DREAM_JSON = "dream"


class DialogueFormat(str, Enum):
    MULTIWOZ_JSON = "multiwoz"
    SGD_JSON = "sgd"
    DIALOGUE_JSONL = "jsonl"


@dataclass
class LoadResult:
    """Examples that survived the load plus per-reason drop counts."""

    examples: list[QAExample] = field(default_factory=list)
    dropped: Counter = field(default_factory=Counter)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


_INT_LITERAL = re.compile(r"^-?\d+$")


def _read_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"{path}: {exc}") from exc


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedFile(f"{path}:{line_no}: {exc}") from exc


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory and atomically rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        # mkstemp creates 0600 files; give the artifact normal umask perms
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp_name, 0o666 & ~mask)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _collect(candidates: Iterable[QAExample]) -> LoadResult:
    """Keep candidates that satisfy the record invariants; count the rest."""
    result = LoadResult()
    seen_ids: set[str] = set()
    for example in candidates:
        try:
            example.validate()
        except ValueError:
            result.dropped["invalid_record"] += 1
            continue
        if example.id in seen_ids:
            result.dropped["duplicate_id"] += 1
            continue
        seen_ids.add(example.id)
        result.examples.append(example)
    return result


# --------------------------------------------------------------------------
# extractive QA


def _squad2_candidates(payload, source: str):
    if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
        raise MalformedFile("squad2 file must carry a top-level 'data' list")
    for article in payload["data"]:
        for paragraph in article.get("paragraphs", []):
            context = paragraph.get("context")
            if not isinstance(context, str):
                raise MalformedFile("paragraph without a context string")
            for qa in paragraph.get("qas", []):
                try:
                    qa_id = str(qa["id"])
                    question = qa["question"]
                except KeyError as exc:
                    raise MalformedFile(f"qa record missing {exc}") from exc
                if qa.get("is_impossible", False):
                    yield QAExample(
                        id=qa_id,
                        kind=QAKind.EXTRACTIVE,
                        question=question,
                        context=context,
                        answer=NONE_SENTINEL,
                        source=source,
                    )
                    continue
                answers = qa.get("answers") or []
                if not answers:
                    raise MalformedFile(f"{qa_id}: answerable record without answers")
                text = answers[0].get("text", "")
                start = answers[0].get("answer_start")
                if start is None:
                    raise MalformedFile(f"{qa_id}: answer without answer_start")
                yield QAExample(
                    id=qa_id,
                    kind=QAKind.EXTRACTIVE,
                    question=question,
                    context=context,
                    answer=text,
                    answer_char_span=(start, start + len(text)),
                    source=source,
                )


def _mrqa_candidates(path, source: str):
    for record in _iter_jsonl(path):
        if "header" in record:
            continue
        context = record.get("context")
        if not isinstance(context, str):
            raise MalformedFile("mrqa record without a context string")
        for qa in record.get("qas", []):
            qa_id = str(qa.get("qid") or qa.get("id") or "")
            if not qa_id:
                raise MalformedFile("mrqa qa record without qid")
            question = qa.get("question")
            detected = qa.get("detected_answers") or []
            if not detected:
                raise MalformedFile(f"{qa_id}: mrqa record without detected_answers")
            answer = detected[0].get("text", "")
            spans = detected[0].get("char_spans") or []
            if not spans:
                raise MalformedFile(f"{qa_id}: mrqa answer without char_spans")
            start, end_inclusive = spans[0]
            # MRQA spans are inclusive; the toolkit convention is half-open.
            yield QAExample(
                id=qa_id,
                kind=QAKind.EXTRACTIVE,
                question=question,
                context=context,
                answer=answer,
                answer_char_span=(start, end_inclusive + 1),
                source=source,
            )


def load_extractive_dataset(
    path: str | Path, format: ExtractiveFormat, source: str | None = None
) -> LoadResult:
    """Parse an extractive QA file into unified records.

    Unanswerable records keep the ``"none"`` answer and no span; answerable
    records whose declared span text does not match the context substring are
    dropped and counted under ``span_mismatch``.
    """
    source = source if source is not None else format.value
    if format is ExtractiveFormat.SQUAD2_JSON:
        candidates = _squad2_candidates(_read_json(path), source)
    elif format is ExtractiveFormat.MRQA_JSONL:
        candidates = _mrqa_candidates(path, source)
    else:
        raise ValueError(f"unsupported extractive format: {format}")

    result = LoadResult()
    seen_ids: set[str] = set()
    for example in candidates:
        if example.is_answerable:
            start, end = example.answer_char_span
            if example.context[start:end] != example.answer:
                result.dropped["span_mismatch"] += 1
                continue
        if example.id in seen_ids:
            result.dropped["duplicate_id"] += 1
            continue
        seen_ids.add(example.id)
        result.examples.append(example)
    return result


# --------------------------------------------------------------------------
# multi-choice QA


def _race_candidates(payload, source: str):
    records = payload if isinstance(payload, list) else [payload]
    for record in records:
        try:
            base_id = str(record["id"])
            article = record["article"]
            questions = record["questions"]
            options = record["options"]
            answers = record["answers"]
        except (KeyError, TypeError) as exc:
            raise MalformedFile(f"race record missing field: {exc}") from exc
        if not (len(questions) == len(options) == len(answers)):
            raise MalformedFile(f"{base_id}: questions/options/answers length mismatch")
        for i, (question, choice_list, letter) in enumerate(zip(questions, options, answers)):
            if len(choice_list) < 2:
                raise MalformedFile(f"{base_id}-q{i}: fewer than 2 options")
            gold = ord(letter.strip().upper()) - ord("A") if letter.strip() else -1
            if gold < 0 or gold >= len(choice_list):
                raise GoldIndexOutOfRange(
                    f"{base_id}-q{i}: gold option {letter!r} of {len(choice_list)} options"
                )
            yield QAExample(
                id=f"{base_id}-q{i}",
                kind=QAKind.MULTI_CHOICE,
                question=question,
                context=article,
                choices=list(choice_list),
                answer=choice_list[gold],
                source=source,
            )


def _dream_candidates(payload, source: str):
    if not isinstance(payload, list):
        raise MalformedFile("dream file must be a JSON array")
    for entry in payload:
        try:
            utterances, qas, dialogue_id = entry
        except (ValueError, TypeError) as exc:
            raise MalformedFile(f"dream entry is not a [turns, qas, id] triple: {exc}") from exc
        context = " ".join(utterances)
        for i, qa in enumerate(qas):
            try:
                question = qa["question"]
                choices = list(qa["choice"])
                answer = qa["answer"]
            except (KeyError, TypeError) as exc:
                raise MalformedFile(f"{dialogue_id}-q{i}: missing field {exc}") from exc
            if len(choices) < 2:
                raise MalformedFile(f"{dialogue_id}-q{i}: fewer than 2 choices")
            if answer not in choices:
                raise GoldIndexOutOfRange(f"{dialogue_id}-q{i}: answer not among choices")
            yield QAExample(
                id=f"{dialogue_id}-q{i}",
                kind=QAKind.MULTI_CHOICE,
                question=question,
                context=context,
                choices=choices,
                answer=answer,
                source=source,
            )


def load_multichoice_dataset(
    path: str | Path, format: MultiChoiceFormat, source: str | None = None
) -> LoadResult:
    """Parse a multi-choice QA file; choices keep their source order."""
    source = source if source is not None else format.value
    payload = _read_json(path)
    if format is MultiChoiceFormat.RACE_JSON:
        candidates = _race_candidates(payload, source)
    elif format is MultiChoiceFormat.DREAM_JSON:
        candidates = _dream_candidates(payload, source)
    else:
        raise ValueError(f"unsupported multi-choice format: {format}")
    return _collect(candidates)


# --------------------------------------------------------------------------
# dialogues


def _clean_state(raw_pairs: Iterable[tuple[str, str]], known_slots: set[str], where: str):
    state: dict[str, str] = {}
    for slot_id, raw_value in raw_pairs:
        if slot_id not in known_slots:
            raise UnknownSlot(slot_id)
        value = normalize_value(str(raw_value))
        if value in ("", NONE_SENTINEL, "not mentioned"):
            continue
        state[slot_id] = value
    return state


def _multiwoz_dialogues(payload, known_slots: set[str]):
    if not isinstance(payload, list):
        raise MalformedFile("multiwoz file must be a JSON array of dialogues")
    for record in payload:
        dialogue_id = str(record.get("dialogue_idx") or record.get("dialogue_id") or "")
        if not dialogue_id:
            raise MalformedFile("dialogue without dialogue_idx")
        turns: list[DialogueTurn] = []
        gold_states: dict[int, dict[str, str]] = {}
        for turn in record.get("dialogue", []):
            system_text = (turn.get("system_transcript") or "").strip()
            if system_text:
                turns.append(DialogueTurn(Speaker.SYSTEM, system_text))
            user_text = (turn.get("transcript") or "").strip()
            if not user_text:
                raise MalformedFile(f"{dialogue_id}: empty user transcript")
            turns.append(DialogueTurn(Speaker.USER, user_text))
            pairs = []
            for item in turn.get("belief_state", []):
                for slot_name, value in item.get("slots", []):
                    pairs.append((slot_name, value))
            gold_states[len(turns) - 1] = _clean_state(pairs, known_slots, dialogue_id)
        yield Dialogue(id=dialogue_id, turns=turns, gold_states=gold_states)


def _sgd_dialogues(payload, known_slots: set[str]):
    if not isinstance(payload, list):
        raise MalformedFile("sgd file must be a JSON array of dialogues")
    for record in payload:
        dialogue_id = str(record.get("dialogue_id") or "")
        if not dialogue_id:
            raise MalformedFile("dialogue without dialogue_id")
        turns: list[DialogueTurn] = []
        gold_states: dict[int, dict[str, str]] = {}
        for turn in record.get("turns", []):
            speaker_tag = str(turn.get("speaker", "")).upper()
            utterance = (turn.get("utterance") or "").strip()
            if not utterance:
                raise MalformedFile(f"{dialogue_id}: empty utterance")
            if speaker_tag == "USER":
                turns.append(DialogueTurn(Speaker.USER, utterance))
                pairs = []
                for frame in turn.get("frames", []):
                    service = str(frame.get("service", ""))
                    slot_values = (frame.get("state") or {}).get("slot_values", {})
                    for slot_name, values in slot_values.items():
                        if not values:
                            continue
                        pairs.append((f"{service}-{slot_name}", values[0]))
                gold_states[len(turns) - 1] = _clean_state(pairs, known_slots, dialogue_id)
            elif speaker_tag == "SYSTEM":
                turns.append(DialogueTurn(Speaker.SYSTEM, utterance))
            else:
                raise MalformedFile(f"{dialogue_id}: unknown speaker {speaker_tag!r}")
        yield Dialogue(id=dialogue_id, turns=turns, gold_states=gold_states)


def load_dialogue_dataset(
    path: str | Path, schema: list[SlotDescriptor], format: DialogueFormat
) -> list[Dialogue]:
    """Parse a dialogue file; gold values are normalized at load time.

    Annotations whose value normalizes to ``"none"`` / ``"not mentioned"`` /
    empty are dropped from the state (absence encodes none). Slot ids absent
    from ``schema`` raise :class:`UnknownSlot`.
    """
    known_slots = {slot.slot_id for slot in schema}
    if format is DialogueFormat.MULTIWOZ_JSON:
        dialogues = list(_multiwoz_dialogues(_read_json(path), known_slots))
    elif format is DialogueFormat.SGD_JSON:
        dialogues = list(_sgd_dialogues(_read_json(path), known_slots))
    elif format is DialogueFormat.DIALOGUE_JSONL:
        dialogues = read_dialogues_jsonl(path)
        for dialogue in dialogues:
            for state in dialogue.gold_states.values():
                for slot_id in state:
                    if slot_id not in known_slots:
                        raise UnknownSlot(slot_id)
    else:
        raise ValueError(f"unsupported dialogue format: {format}")
    for dialogue in dialogues:
        try:
            dialogue.validate(known_slots)
        except ValueError as exc:
            raise MalformedFile(str(exc)) from exc
    return dialogues


# --------------------------------------------------------------------------
# schema


def load_schema(path: str | Path, number_slots_noncategorical: bool = False) -> list[SlotDescriptor]:
    """Read the toolkit schema JSON into slot descriptors.

    With ``number_slots_noncategorical`` set, a categorical slot whose
    candidates are all integer literals is re-kinded non-categorical and its
    candidates are cleared.
    """
    payload = _read_json(path)
    if not isinstance(payload, dict) or not isinstance(payload.get("domains"), list):
        raise MalformedFile(f"{path}: schema must carry a top-level 'domains' list")
    slots: list[SlotDescriptor] = []
    seen: set[str] = set()
    for domain_entry in payload["domains"]:
        domain = domain_entry.get("name")
        if not domain:
            raise MalformedFile("schema domain without a name")
        for slot_entry in domain_entry.get("slots", []):
            name = slot_entry.get("name")
            if not name:
                raise MalformedFile(f"{domain}: slot without a name")
            try:
                kind = SlotKind(slot_entry.get("kind", "non_categorical"))
            except ValueError as exc:
                raise MalformedFile(f"{domain}-{name}: bad kind") from exc
            candidates = [str(c) for c in slot_entry.get("candidates") or []]
            question = slot_entry.get("question", "") or ""
            if (
                number_slots_noncategorical
                and kind is SlotKind.CATEGORICAL
                and candidates
                and all(_INT_LITERAL.match(c.strip()) for c in candidates)
            ):
                kind = SlotKind.NON_CATEGORICAL
                candidates = []
            slot = SlotDescriptor(
                domain=domain,
                slot_name=name,
                kind=kind,
                value_candidates=candidates,
                question=question,
            )
            if slot.slot_id in seen:
                raise DuplicateSlot(slot.slot_id)
            seen.add(slot.slot_id)
            try:
                slot.validate()
            except ValueError as exc:
                raise MalformedFile(str(exc)) from exc
            slots.append(slot)
    return slots


def write_schema(path: str | Path, slots: list[SlotDescriptor]) -> None:
    domains: dict[str, list[SlotDescriptor]] = {}
    for slot in slots:
        domains.setdefault(slot.domain, []).append(slot)
    payload = {
        "domains": [
            {
                "name": domain,
                "slots": [
                    {
                        "name": slot.slot_name,
                        "kind": slot.kind.value,
                        "candidates": list(slot.value_candidates),
                        "question": slot.question,
                    }
                    for slot in domain_slots
                ],
            }
            for domain, domain_slots in domains.items()
        ]
    }
    atomic_write_text(path, json.dumps(payload, ensure_ascii=False, indent=2) + "\n")


# --------------------------------------------------------------------------
# toolkit JSONL


def qa_jsonl_lines(examples: Iterable[QAExample]) -> Iterable[str]:
    for example in examples:
        yield json.dumps(example.to_json_dict(), ensure_ascii=False)


def write_qa_jsonl(path: str | Path, examples: Iterable[QAExample]) -> int:
    lines = list(qa_jsonl_lines(examples))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def read_qa_jsonl(path: str | Path) -> LoadResult:
    return _collect(QAExample.from_json_dict(record) for record in _iter_jsonl(path))


def write_dialogues_jsonl(path: str | Path, dialogues: Iterable[Dialogue]) -> int:
    lines = [json.dumps(d.to_json_dict(), ensure_ascii=False) for d in dialogues]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def read_dialogues_jsonl(path: str | Path) -> list[Dialogue]:
    dialogues = []
    for record in _iter_jsonl(path):
        try:
            dialogues.append(Dialogue.from_json_dict(record))
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedFile(f"{path}: {exc}") from exc
    return dialogues

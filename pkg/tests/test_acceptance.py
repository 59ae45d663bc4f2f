"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import json
import random
import time
from contextlib import contextmanager

import pytest

import reference_metrics as ref
from fixture_corpus import build_corpus, build_qa_examples, build_schema
from fuzzing import make_fuzz_corpus, make_gate_noise_corpus
from transferqa.answer_backend import CountingBackend, HttpBackend, oracle_from_gold
from transferqa.corpus_io import qa_jsonl_lines
from transferqa.dst_tracker import track_corpus, track_turn
from transferqa.errors import NoActiveSlots
from transferqa.evaluation import (
    average_goal_accuracy,
    error_taxonomy,
    evaluate_corpus,
    joint_goal_accuracy,
    oracle_gate_rescore,
    per_domain_jga,
    slot_gate_accuracy,
)
from transferqa.negative_synthesis import SynthesisConfig, synthesize_stream, truncate_context
from transferqa.records import SlotKind

pytestmark = pytest.mark.acceptance


@contextmanager
def criterion(name):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name} ({time.perf_counter() - started:.1f}s)")


# --------------------------------------------------------------------------


def test_oracle_identity():
    """Tracker composed with the gold oracle is a perfect tracker on a
    >=20-dialogue, 5-domain corpus; runtime under 5 s."""
    with criterion("oracle identity (JGA=AGA=SGA=1.0, <5s)"):
        started = time.perf_counter()
        schema = build_schema()
        dialogues = build_corpus(24)
        assert len(dialogues) >= 20
        assert {slot.domain for slot in schema} == {
            "hotel", "restaurant", "taxi", "train", "attraction",
        }
        backend = oracle_from_gold(dialogues, schema)
        predictions = track_corpus(dialogues, schema, backend, workers=4)
        report = evaluate_corpus(predictions, dialogues, schema)
        assert report.jga == 1.0
        assert report.aga == 1.0
        assert report.sga == 1.0
        assert time.perf_counter() - started < 5.0


def test_metric_oracle_equivalence():
    """Optimized metrics agree exactly with the brute-force reference on
    1,000 fuzzed corpora (<=10 dialogues, <=8 slots); runtime under 60 s."""
    with criterion("metric oracle equivalence (1000 fuzzed corpora, <60s)"):
        started = time.perf_counter()
        rng = random.Random(314159)
        checked = 0
        for _ in range(1000):
            slots, golds, preds, ref_golds, ref_preds = make_fuzz_corpus(
                rng, max_dialogues=10, max_slots=8
            )
            if not ref_golds:
                continue
            checked += 1
            all_slots = [slot.slot_id for slot in slots]
            assert joint_goal_accuracy(preds, golds) == ref.ref_jga(ref_golds, ref_preds)
            assert slot_gate_accuracy(preds, golds, slots) == ref.ref_sga(
                ref_golds, ref_preds, all_slots
            )
            taxonomy = error_taxonomy(preds, golds)
            assert (
                taxonomy.false_positive_gate,
                taxonomy.false_negative_gate,
                taxonomy.value_error,
                sum(taxonomy.counts.values()),
            ) == ref.ref_taxonomy(ref_golds, ref_preds)
            try:
                aga = average_goal_accuracy(preds, golds)
            except NoActiveSlots:
                pass
            else:
                assert aga == ref.ref_aga(ref_golds, ref_preds)
            assert oracle_gate_rescore(preds, golds) == ref.ref_rescore(ref_golds, ref_preds)
            for domain in sorted({slot.domain for slot in slots}):
                domain_slots = {s.slot_id for s in slots if s.domain == domain}
                expected = ref.ref_per_domain_jga(ref_golds, ref_preds, domain_slots)
                if expected is not None:
                    assert per_domain_jga(preds, golds, slots, domain) == expected
        assert checked >= 950
        assert time.perf_counter() - started < 60.0


def test_fixture_ledger(fixture3_schema, fixture3_golds, fixture3_predictions):
    """The shipped 3-dialogue fixture evaluates to its hand-enumerated
    fractions, exact match, and the brute-force reference recomputes them."""
    with criterion("fixture ledger (JGA=4/7, AGA=9/13, taxonomy, exact)"):
        report = evaluate_corpus(fixture3_predictions, fixture3_golds, fixture3_schema,
                                 oracle_gate=True)
        assert report.jga == 4 / 7
        assert report.aga == 9 / 13
        assert report.sga == 58 / 63
        assert report.error_taxonomy.false_positive_gate == 1 / 3
        assert report.error_taxonomy.false_negative_gate == 1 / 2
        assert report.error_taxonomy.value_error == 1 / 6
        assert report.oracle_gate == {"jga": 6 / 7, "aga": 12 / 13}

        ref_golds = [(d.id, t, dict(state))
                     for d in fixture3_golds for t, state in sorted(d.gold_states.items())]
        ref_preds = {
            (p.dialogue_id, p.turn_index): {"state": p.state, "gate": p.gate, "raw": p.raw_values}
            for p in fixture3_predictions
        }
        assert ref.ref_jga(ref_golds, ref_preds) == report.jga
        assert ref.ref_aga(ref_golds, ref_preds) == report.aga
        assert ref.ref_sga(ref_golds, ref_preds,
                           [s.slot_id for s in fixture3_schema]) == report.sga
        assert ref.ref_taxonomy(ref_golds, ref_preds)[:3] == (1 / 3, 1 / 2, 1 / 6)
        assert ref.ref_rescore(ref_golds, ref_preds) == report.oracle_gate


def test_synthesis_ratios():
    """alpha=0.3, nqs_fraction=0.95 over 100,000 examples: unanswerable
    fraction 0.30 +/- 0.01, NQS:CT split 0.95:0.05 +/- 0.01 (CT fallbacks
    count as NQS), byte-identical reruns; runtime under 30 s."""
    with criterion("synthesis ratios (0.30 +/- 0.01, 0.95:0.05 +/- 0.01, <30s)"):
        started = time.perf_counter()
        sources = build_qa_examples(100_000, seed=20240601, sentences=4)
        config = SynthesisConfig(alpha=0.3, nqs_fraction=0.95, seed=99)
        outputs = list(synthesize_stream(sources, config))
        assert len(outputs) == len(sources)
        unanswerable = [ex for ex in outputs if ex.answer == "none"]
        none_rate = len(unanswerable) / len(outputs)
        assert abs(none_rate - 0.30) <= 0.01, none_rate
        nqs = sum(1 for ex in unanswerable if ex.id.endswith("-nqs"))
        ct = sum(1 for ex in unanswerable if ex.id.endswith("-ct"))
        assert nqs + ct == len(unanswerable)
        assert abs(nqs / len(unanswerable) - 0.95) <= 0.01
        assert abs(ct / len(unanswerable) - 0.05) <= 0.01

        blob_one = "\n".join(qa_jsonl_lines(outputs)).encode()
        blob_two = "\n".join(qa_jsonl_lines(synthesize_stream(sources, config))).encode()
        assert blob_one == blob_two
        assert time.perf_counter() - started < 30.0


def test_ct_safety():
    """Over 10,000 synthesized CT examples the source answer string never
    occurs in the truncated context (plain substring scan)."""
    with criterion("CT safety (10k truncations, zero answer occurrences)"):
        sources = build_qa_examples(10_000, seed=31337, sentences=4)
        hits = 0
        for example in sources:
            truncated = truncate_context(example)
            if example.answer in truncated.context:
                hits += 1
        assert hits == 0


def test_serialization_goldens(goldens_path):
    """25 hand-authored records serialize byte-exactly to the frozen
    goldens; prefix, separator, and speaker-tag grammar verified."""
    from test_prompting import golden_output, load_goldens
    from transferqa.prompting import (
        CHOICE_SEPARATOR,
        CHOICES_TAG,
        EXTRACTIVE_PREFIX,
        MULTI_CHOICE_PREFIX,
    )

    with criterion("serialization goldens (25 records, byte-exact)"):
        goldens = load_goldens(goldens_path)
        assert len(goldens) == 25
        names = {record["name"] for record in goldens}
        assert any("pmul0089" in name for name in names)
        assert any("mul2321" in name for name in names)
        for record in goldens:
            produced = golden_output(record)
            assert produced == record["expected"], record["name"]
            if record["op"] == "context":
                assert produced.split(" ", 1)[0] in ("user:", "system:")
                continue
            assert produced.startswith((EXTRACTIVE_PREFIX + " ", MULTI_CHOICE_PREFIX + " "))
            if produced.startswith(MULTI_CHOICE_PREFIX):
                assert produced.count(CHOICES_TAG) == 1
                assert CHOICE_SEPARATOR.strip() == "[sep]"
            else:
                assert CHOICES_TAG not in produced


def test_query_count_law():
    """Backend calls per turn equal |schema| + |gated-active categorical
    slots| across the whole fixture corpus."""
    with criterion("query-count law (calls = |schema| + |active categorical|)"):
        schema = build_schema()
        dialogues = build_corpus(24)
        backend = oracle_from_gold(dialogues, schema)
        categorical = {s.slot_id for s in schema if s.kind is SlotKind.CATEGORICAL}
        for dialogue in dialogues:
            for turn_index in dialogue.user_turn_indices():
                counting = CountingBackend(backend)
                prediction = track_turn(dialogue.turns[: turn_index + 1], schema, counting,
                                        dialogue_id=dialogue.id, turn_index=turn_index)
                active_categorical = sum(
                    1 for slot_id in categorical if prediction.gate[slot_id]
                )
                assert counting.request_count == len(schema) + active_categorical


def test_oracle_gate_monotonicity():
    """On 100 fuzzed corpora with injected gate-only noise the rescored JGA
    never drops below the raw JGA, with equality exactly when no gate was
    flipped."""
    with criterion("oracle-gate monotonicity (100 noisy corpora)"):
        rng = random.Random(8128)
        checked = 0
        while checked < 100:
            slots, golds, preds, flips = make_gate_noise_corpus(rng)
            if not any(d.gold_states for d in golds):
                continue
            checked += 1
            raw = joint_goal_accuracy(preds, golds)
            rescored = oracle_gate_rescore(preds, golds)["jga"]
            assert rescored >= raw
            if flips == 0:
                assert rescored == raw
            else:
                assert rescored > raw or raw == 1.0
                assert rescored == 1.0


# --------------------------------------------------------------------------
# secondary component


def test_secondary_protocol_conformance(tmp_path, fixture3_golds, fixture3_schema):
    """Primary integration flow against echo mode over localhost is
    byte-identical to the in-process oracle; 503/400 paths respond."""
    import requests as _requests

    from server_harness import running_server

    with criterion("secondary protocol conformance (echo == oracle, 503/400)"):
        oracle = oracle_from_gold(fixture3_golds, fixture3_schema)
        lookup = tmp_path / "lookup.json"
        lookup.write_text(json.dumps(oracle.lookup_table()), encoding="utf-8")
        expected = track_corpus(fixture3_golds, fixture3_schema, oracle)
        expected_bytes = "\n".join(
            json.dumps(p.prediction_json(), ensure_ascii=False) for p in expected
        ).encode()
        with running_server(lookup) as url:
            backend = HttpBackend(url, batch_size=8, max_inflight=2)
            remote = track_corpus(fixture3_golds, fixture3_schema, backend)
            remote_bytes = "\n".join(
                json.dumps(p.prediction_json(), ensure_ascii=False) for p in remote
            ).encode()
            assert remote_bytes == expected_bytes
            bad = _requests.post(f"{url}/v1/answer", data="{oops",
                                 headers={"content-type": "application/json"}, timeout=5)
            assert bad.status_code == 400
        with running_server(lookup, delay_ready_ms=2500, wait_healthy=False) as url:
            health = _requests.get(f"{url}/v1/health", timeout=5)
            assert health.status_code == 503


def test_secondary_determinism(tmp_path, fixture3_golds, fixture3_schema):
    """The serving adapter answers a repeated batch identically (echo mode;
    no public checkpoint is assumed in this environment)."""
    import requests as _requests

    from server_harness import running_server

    with criterion("secondary determinism (repeated batch identical)"):
        oracle = oracle_from_gold(fixture3_golds, fixture3_schema)
        lookup = tmp_path / "lookup.json"
        lookup.write_text(json.dumps(oracle.lookup_table()), encoding="utf-8")
        inputs = list(oracle.lookup_table())[:8]
        body = {"requests": [{"id": f"r{i}", "input_text": text}
                             for i, text in enumerate(inputs)]}
        with running_server(lookup) as url:
            first = _requests.post(f"{url}/v1/answer", json=body, timeout=10)
            second = _requests.post(f"{url}/v1/answer", json=body, timeout=10)
        assert first.status_code == second.status_code == 200
        assert first.content == second.content

import random

import pytest

from fixture_corpus import build_qa_examples
from transferqa.corpus_io import qa_jsonl_lines
from transferqa.errors import AnswerInFirstSentence, MissingSpan, PoolExhausted
from transferqa.negative_synthesis import (
    QuestionPool,
    SynthesisConfig,
    passage_key,
    sample_negative_question,
    sentence_spans,
    synthesize_stream,
    truncate_context,
)
from transferqa.records import QAExample, QAKind


def make_example(id="a", context="First one here. Second has 1997 inside. Third closes.",
                 answer="1997", question="when?", source="t"):
    start = context.index(answer)
    return QAExample(id=id, kind=QAKind.EXTRACTIVE, question=question, context=context,
                     answer=answer, answer_char_span=(start, start + len(answer)), source=source)


# --------------------------------------------------------------------------
# sentence segmentation


def test_sentence_spans_basic():
    text = "Tom moved in 1997. He left in 2001. He returned later."
    spans = sentence_spans(text)
    assert [text[a:b] for a, b in spans] == [
        "Tom moved in 1997.", "He left in 2001.", "He returned later.",
    ]


def test_sentence_spans_terminators_and_guards():
    # '?' inside "?!" is not followed by whitespace, so "Really?!" is one unit
    text = "Really?! Mr. Smith lives in the U.S. now. Ask Dr. J. Brown e.g. tomorrow!"
    spans = sentence_spans(text)
    rendered = [text[a:b] for a, b in spans]
    assert rendered == [
        "Really?!",
        "Mr. Smith lives in the U.S. now.",
        "Ask Dr. J. Brown e.g. tomorrow!",
    ]


def test_sentence_spans_no_trailing_terminator():
    text = "One sentence. And a dangling tail"
    spans = sentence_spans(text)
    assert [text[a:b] for a, b in spans] == ["One sentence.", "And a dangling tail"]


# --------------------------------------------------------------------------
# context truncation


def test_truncate_basic():
    example = make_example(context="Tom moved in 1997. He left in 2001. He returned later.",
                           answer="2001")
    truncated = truncate_context(example)
    assert truncated.context == "Tom moved in 1997."
    assert truncated.answer == "none"
    assert truncated.answer_char_span is None
    assert truncated.question == example.question


def test_truncate_answer_in_first_sentence():
    example = make_example(context="Tom moved in 1997. He stayed.", answer="1997")
    with pytest.raises(AnswerInFirstSentence):
        truncate_context(example)


def test_truncate_requires_span():
    example = QAExample(id="x", kind=QAKind.EXTRACTIVE, question="q", context="a. b.",
                        answer="b")
    with pytest.raises(MissingSpan):
        truncate_context(example)
    multi = QAExample(id="y", kind=QAKind.MULTI_CHOICE, question="q", context="a. b.",
                      choices=["x", "y"], answer="x")
    with pytest.raises(MissingSpan):
        truncate_context(multi)


def test_truncate_cuts_before_earlier_occurrence():
    # The answer string also shows up before the annotated span; the cut must
    # remove that occurrence too.
    context = "He was born in 1997 somewhere. He then grew up. He married in 1997 in spring."
    start = context.rindex("1997")
    example = QAExample(id="x", kind=QAKind.EXTRACTIVE, question="married when?",
                        context=context, answer="1997", answer_char_span=(start, start + 4))
    with pytest.raises(AnswerInFirstSentence):
        truncate_context(example)  # earlier occurrence sits in sentence one


def test_truncate_earlier_occurrence_mid_passage():
    context = ("The opening sentence is safe. Then 1997 appears early. "
               "Later the span year 1997 returns. Closing words.")
    start = context.rindex("1997")
    example = QAExample(id="x", kind=QAKind.EXTRACTIVE, question="q", context=context,
                        answer="1997", answer_char_span=(start, start + 4))
    truncated = truncate_context(example)
    assert truncated.context == "The opening sentence is safe."
    assert "1997" not in truncated.context


def test_truncate_case_insensitive_scan():
    context = "The Eagles played loudly. Critics loved the eagles that year."
    start = context.index("eagles")
    example = QAExample(id="x", kind=QAKind.EXTRACTIVE, question="who?", context=context,
                        answer="eagles", answer_char_span=(start, start + 6))
    with pytest.raises(AnswerInFirstSentence):
        truncate_context(example)


def test_truncate_property_over_corpus():
    """No truncated context ever contains its source answer; every result is
    a proper prefix ending at a sentence boundary."""
    for example in build_qa_examples(400, seed=11, sentences=4):
        truncated = truncate_context(example)
        assert example.answer not in truncated.context
        assert example.context.startswith(truncated.context)
        assert len(truncated.context) < len(example.context)
        boundary_ends = {end for _, end in sentence_spans(example.context)}
        assert len(truncated.context) in boundary_ends


# --------------------------------------------------------------------------
# negative question sampling


def test_sample_negative_question_forced():
    target = make_example(id="t", context="Alpha passage sentence. More words here.",
                          answer="words")
    pool = QuestionPool(entries=[("who won?", "other-passage")])
    sampled = sample_negative_question(target, pool, random.Random(0))
    assert sampled.context == target.context
    assert sampled.question == "who won?"
    assert sampled.answer == "none"
    assert sampled.answer_char_span is None
    assert sampled.kind is QAKind.EXTRACTIVE


def test_sample_negative_question_pool_exhausted():
    target = make_example(id="t")
    pool = QuestionPool(entries=[("own question?", passage_key(target))])
    with pytest.raises(PoolExhausted):
        sample_negative_question(target, pool, random.Random(0))
    with pytest.raises(PoolExhausted):
        sample_negative_question(target, QuestionPool(), random.Random(0))


def test_sample_negative_question_deterministic():
    target = make_example(id="t")
    pool = QuestionPool(entries=[(f"q{i}?", f"p{i}") for i in range(50)])
    first = sample_negative_question(target, pool, random.Random(42))
    second = sample_negative_question(target, pool, random.Random(42))
    assert first == second


def test_multichoice_nqs_keeps_choices():
    target = QAExample(id="m", kind=QAKind.MULTI_CHOICE, question="own?",
                       context="Some passage.", choices=["a", "b"], answer="a")
    pool = QuestionPool(entries=[("foreign?", "px")])
    sampled = sample_negative_question(target, pool, random.Random(1))
    assert sampled.kind is QAKind.MULTI_CHOICE
    assert sampled.choices == ["a", "b"]
    assert sampled.answer == "none"
    sampled.validate()


# --------------------------------------------------------------------------
# stream


def stream_bytes(examples, config):
    return "\n".join(qa_jsonl_lines(synthesize_stream(examples, config))).encode()


def test_alpha_zero_is_identity():
    sources = build_qa_examples(200, seed=3)
    config = SynthesisConfig(alpha=0.0, nqs_fraction=0.95, seed=5)
    assert list(synthesize_stream(sources, config)) == sources


def test_alpha_one_nqs_one_all_none_foreign_questions():
    sources = build_qa_examples(200, seed=3)
    own_questions = {passage_key(ex): ex.question for ex in sources}
    config = SynthesisConfig(alpha=1.0, nqs_fraction=1.0, seed=5)
    outputs = list(synthesize_stream(sources, config))
    assert len(outputs) == len(sources)
    for source, output in zip(sources, outputs):
        assert output.answer == "none"
        assert output.question != own_questions[passage_key(source)]


def test_stream_determinism_and_length():
    sources = build_qa_examples(500, seed=3)
    config = SynthesisConfig(alpha=0.3, nqs_fraction=0.95, seed=1234)
    assert stream_bytes(sources, config) == stream_bytes(sources, config)
    assert len(list(synthesize_stream(sources, config))) == len(sources)


def test_stream_sharding_matches_serial():
    sources = build_qa_examples(300, seed=9)
    config = SynthesisConfig(alpha=0.5, nqs_fraction=0.8, seed=77)
    pool = QuestionPool.from_examples(sources)
    serial = list(synthesize_stream(sources, config))
    cut = 120
    sharded = list(synthesize_stream(sources[:cut], config, pool=pool)) + list(
        synthesize_stream(sources[cut:], config, pool=pool, index_offset=cut)
    )
    assert sharded == serial


def test_stream_ratios_rough():
    sources = build_qa_examples(20_000, seed=21)
    config = SynthesisConfig(alpha=0.3, nqs_fraction=0.95, seed=8)
    outputs = list(synthesize_stream(sources, config))
    none_count = sum(1 for ex in outputs if ex.answer == "none")
    assert abs(none_count / len(outputs) - 0.3) < 0.02
    nqs = sum(1 for ex in outputs if ex.id.endswith("-nqs"))
    ct = sum(1 for ex in outputs if ex.id.endswith("-ct"))
    assert nqs + ct == none_count
    assert abs(nqs / none_count - 0.95) < 0.02


def test_stream_ct_outputs_are_proper_prefixes():
    sources = build_qa_examples(2_000, seed=4)
    by_id = {ex.id: ex for ex in sources}
    config = SynthesisConfig(alpha=1.0, nqs_fraction=0.0, seed=10)
    for output in synthesize_stream(sources, config):
        if not output.id.endswith("-ct"):
            continue
        source = by_id[output.id.removesuffix("-ct")]
        assert source.context.startswith(output.context)
        assert source.answer not in output.context


def test_stream_nqs_pairs_foreign_passage():
    sources = build_qa_examples(2_000, seed=5)
    question_passages: dict[str, set[str]] = {}
    for ex in sources:
        question_passages.setdefault(ex.question, set()).add(passage_key(ex))
    config = SynthesisConfig(alpha=1.0, nqs_fraction=1.0, seed=11)
    for output in synthesize_stream(sources, config):
        assert passage_key(output) not in question_passages[output.question]


def test_multichoice_sources_bypass_by_default():
    multi = QAExample(id="m", kind=QAKind.MULTI_CHOICE, question="q?", context="ctx.",
                      choices=["a", "b"], answer="a")
    sources = build_qa_examples(50, seed=6) + [multi]
    config = SynthesisConfig(alpha=1.0, nqs_fraction=1.0, seed=2)
    outputs = list(synthesize_stream(sources, config))
    assert outputs[-1] == multi
    enabled = SynthesisConfig(alpha=1.0, nqs_fraction=1.0, seed=2, include_multichoice=True)
    outputs = list(synthesize_stream(sources, enabled))
    assert outputs[-1].answer == "none"
    assert outputs[-1].kind is QAKind.MULTI_CHOICE


def test_ct_failure_falls_back_to_nqs():
    # every answer sits in the first sentence, so every CT draw must fall
    # back to NQS and the realized alpha stays at 1.0
    sources = []
    for i in range(50):
        context = f"Passage {i} already names token{i} up front. Filler closes it."
        answer = f"token{i}"
        start = context.index(answer)
        sources.append(QAExample(id=f"f{i}", kind=QAKind.EXTRACTIVE,
                                 question=f"which token in {i}?", context=context,
                                 answer=answer, answer_char_span=(start, start + len(answer))))
    config = SynthesisConfig(alpha=1.0, nqs_fraction=0.0, seed=17)
    outputs = list(synthesize_stream(sources, config))
    assert all(ex.answer == "none" for ex in outputs)
    assert all(ex.id.endswith("-nqs") for ex in outputs)
    assert not any(ex.id.endswith("-ct") for ex in outputs)


def test_pool_exhausted_propagates():
    shared_context = "Only passage in town. It repeats."
    start = shared_context.index("town")
    sources = []
    for i in range(5):
        sources.append(QAExample(id=f"s{i}", kind=QAKind.EXTRACTIVE, question=f"q{i}?",
                                 context=shared_context, answer="town",
                                 answer_char_span=(start, start + 4)))
    config = SynthesisConfig(alpha=1.0, nqs_fraction=1.0, seed=3)
    with pytest.raises(PoolExhausted):
        list(synthesize_stream(sources, config))

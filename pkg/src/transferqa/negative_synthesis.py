"""Unanswerable-example construction: negative question sampling (NQS) and
context truncation (CT), mixed into a deterministic training stream.

For every source example the stream emits, with probability ``alpha``, a
synthesized unanswerable variant (NQS with probability ``nqs_fraction``,
otherwise CT; CT failures fall back to NQS) and otherwise the source
unchanged. Per-example RNG substreams are derived by hashing the seed with
the example index, so shards merged in index order reproduce the serial
stream byte for byte.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from .errors import AnswerInFirstSentence, MissingSpan, PoolExhausted
from .records import NONE_SENTINEL, QAExample, QAKind
from .seeding import derive_seed

# Tokens that end with '.' without ending a sentence. Frozen so CT output is
# reproducible across runs and machines.
ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "mt.", "vs.", "etc.",
        "e.g.", "i.e.", "u.s.", "u.k.", "u.n.", "inc.", "ltd.", "co.",
        "jr.", "sr.", "no.", "vol.", "fig.", "approx.", "dept.", "est.",
    }
)

_WORD_BACK = re.compile(r"[A-Za-z0-9.]+$")


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Half-open character spans of sentences.

    A sentence ends at '.', '!' or '?' followed by whitespace or end of text,
    except when the final period belongs to a guarded abbreviation or a
    single-letter initial.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?" and (i + 1 == n or text[i + 1].isspace()):
            boundary = True
            if ch == ".":
                match = _WORD_BACK.search(text, 0, i + 1)
                word = match.group(0).lower() if match else ""
                if word in ABBREVIATIONS:
                    boundary = False
                elif len(word) == 2 and word[0].isalpha():
                    boundary = False  # single-letter initial, e.g. "J."
            if boundary:
                spans.append((start, i + 1))
                j = i + 1
                while j < n and text[j].isspace():
                    j += 1
                start = j
                i = j
                continue
        i += 1
    if start < n:
        spans.append((start, n))
    return spans


@dataclass
class SynthesisConfig:
    """Knobs of the unanswerable-example mix."""

    alpha: float
    nqs_fraction: float
    seed: int
    include_multichoice: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 <= self.nqs_fraction <= 1.0:
            raise ValueError(f"nqs_fraction must be in [0,1], got {self.nqs_fraction}")


def passage_key(example: QAExample) -> str:
    """Stable identifier of the example's source passage."""
    return hashlib.sha1(example.context.encode("utf-8")).hexdigest()[:16]


@dataclass
class QuestionPool:
    """Questions available for negative sampling, tagged by source passage."""

    entries: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def from_examples(cls, examples: Iterable[QAExample]) -> "QuestionPool":
        return cls(entries=[(ex.question, passage_key(ex)) for ex in examples])

    def __len__(self) -> int:
        return len(self.entries)


def sample_negative_question(
    target: QAExample, pool: QuestionPool, rng: random.Random
) -> QAExample:
    """Pair the target's context with a question drawn from another passage.

    Resamples until the drawn question's passage differs from the target's.
    Multi-choice targets keep their kind and choice list; the answer becomes
    ``"none"`` either way.
    """
    if not pool.entries:
        raise PoolExhausted("question pool is empty")
    target_passage = passage_key(target)
    if all(pid == target_passage for _, pid in pool.entries):
        raise PoolExhausted(f"no pool entry outside passage {target_passage}")
    while True:
        question, pid = pool.entries[rng.randrange(len(pool.entries))]
        if pid != target_passage:
            break
    return replace(
        target,
        question=question,
        answer=NONE_SENTINEL,
        answer_char_span=None,
    )


def truncate_context(example: QAExample) -> QAExample:
    """Cut the context just before the first sentence carrying the answer.

    The cut point is chosen from the first occurrence of the answer string
    (case-insensitive) or the annotated span, whichever comes first, so the
    truncated context never contains the answer string. The result keeps only
    whole sentences strictly before the cut sentence.
    """
    if example.kind is not QAKind.EXTRACTIVE or not example.is_answerable:
        raise MissingSpan(f"{example.id}: context truncation needs an answerable extractive example")
    if example.answer_char_span is None:
        raise MissingSpan(f"{example.id}: no answer span")
    span_start = example.answer_char_span[0]
    match = re.search(re.escape(example.answer), example.context, re.IGNORECASE)
    first_pos = min(span_start, match.start()) if match else span_start

    spans = sentence_spans(example.context)
    cut_index = next((k for k, (_, end) in enumerate(spans) if end > first_pos), None)
    if cut_index is None or cut_index == 0:
        raise AnswerInFirstSentence(f"{example.id}: answer sits in the first sentence")
    truncated = example.context[: spans[cut_index][0]].rstrip()
    if not truncated:
        raise AnswerInFirstSentence(f"{example.id}: truncation leaves no context")
    return replace(
        example,
        context=truncated,
        answer=NONE_SENTINEL,
        answer_char_span=None,
    )


def synthesize_stream(
    sources: list[QAExample],
    config: SynthesisConfig,
    pool: QuestionPool | None = None,
    index_offset: int = 0,
) -> Iterator[QAExample]:
    """Yield the deterministic mixed stream over the source examples.

    ``pool`` defaults to the union pool over ``sources``; pass the global pool
    plus an ``index_offset`` when sharding so each shard reproduces its slice
    of the serial stream.
    """
    if pool is None:
        pool = QuestionPool.from_examples(sources)
    for i, example in enumerate(sources):
        if example.kind is QAKind.MULTI_CHOICE and not config.include_multichoice:
            yield example
            continue
        rng = random.Random(derive_seed(config.seed, index_offset + i))
        if rng.random() >= config.alpha:
            yield example
            continue
        use_nqs = rng.random() < config.nqs_fraction
        if not use_nqs:
            try:
                yield replace(truncate_context(example), id=f"{example.id}-ct")
                continue
            except (AnswerInFirstSentence, MissingSpan):
                pass  # fall back to NQS so the realized alpha stays put
        yield replace(sample_negative_question(example, pool, rng), id=f"{example.id}-nqs")

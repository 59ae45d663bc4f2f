"""Answerer contract decoupling the pipeline from any particular model.

A backend is anything with ``answer(requests) -> responses``. Conforming
backends are deterministic (same ``input_text`` always yields the same
``output_text``) and return exactly one response per request, ids forming a
permutation of the request ids.

Wire protocol of the remote client (UTF-8 JSON over HTTP):

    POST /v1/answer
        request body  {"requests":  [{"id": "...", "input_text": "..."}]}
        response body {"responses": [{"id": "...", "output_text": "..."}]}
    GET /v1/health -> {"status": "ok"}

Status 200 on success; 503 signals a temporarily unavailable backend and is
retried with exponential backoff.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

import requests as _requests

from .errors import BackendUnavailable, ProtocolViolation
from .records import NONE_SENTINEL, Dialogue, SlotDescriptor, SlotKind
from .prompting import DEFAULT_CONTEXT_BUDGET, build_slot_query
from .seeding import derive_seed


@dataclass(frozen=True)
class AnswerRequest:
    id: str
    input_text: str


@dataclass(frozen=True)
class AnswerResponse:
    id: str
    output_text: str


class Backend(Protocol):
    def answer(self, requests: list[AnswerRequest]) -> list[AnswerResponse]: ...


def _reorder_by_id(
    requests: list[AnswerRequest], responses: list[AnswerResponse]
) -> list[AnswerResponse]:
    """Validate the id permutation and return responses in request order."""
    request_ids = [r.id for r in requests]
    if len(set(request_ids)) != len(request_ids):
        raise ProtocolViolation("duplicate request ids in batch")
    by_id = {}
    for response in responses:
        if response.id in by_id:
            raise ProtocolViolation(f"duplicate response id {response.id!r}")
        by_id[response.id] = response
    if set(by_id) != set(request_ids):
        missing = set(request_ids) - set(by_id)
        extra = set(by_id) - set(request_ids)
        raise ProtocolViolation(f"response ids are not a permutation (missing={missing}, extra={extra})")
    return [by_id[rid] for rid in request_ids]


def answer_batch(requests: list[AnswerRequest], backend: Backend) -> list[AnswerResponse]:
    """Run a batch through a backend, enforcing the response contract."""
    if not requests:
        raise ValueError("answer_batch needs a nonempty request list")
    for request in requests:
        if not request.input_text:
            raise ValueError(f"{request.id}: empty input_text")
    return _reorder_by_id(requests, backend.answer(requests))


class OracleBackend:
    """Deterministic lookup backend: exact input text to output text.

    Unknown inputs answer ``"none"``. Immutable after construction and safe
    to share across workers.
    """

    def __init__(self, mapping: dict[str, str] | None = None, default: str = NONE_SENTINEL):
        self._mapping = dict(mapping or {})
        self._default = default

    def __len__(self) -> int:
        return len(self._mapping)

    def lookup_table(self) -> dict[str, str]:
        return dict(self._mapping)

    def answer(self, requests: list[AnswerRequest]) -> list[AnswerResponse]:
        return [
            AnswerResponse(id=r.id, output_text=self._mapping.get(r.input_text, self._default))
            for r in requests
        ]


def oracle_from_gold(
    dialogues: Iterable[Dialogue],
    schema: list[SlotDescriptor],
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> OracleBackend:
    """Build a perfect answerer from gold states.

    For every (dialogue, user turn, slot) the oracle maps both the extractive
    (pass 1) and, for categorical slots, the multi-choice (pass 2) query text
    to the gold value, or ``"none"`` when the slot is unassigned. Composing
    the tracker with this backend reproduces the gold states exactly;
    ``context_budget`` must match the tracker's so the query texts align.
    """
    mapping: dict[str, str] = {}
    for dialogue in dialogues:
        for turn_index in dialogue.user_turn_indices():
            prefix = dialogue.turns[: turn_index + 1]
            gold = dialogue.gold_states.get(turn_index, {})
            for slot in schema:
                value = gold.get(slot.slot_id, NONE_SENTINEL)
                extractive = build_slot_query(slot, prefix, force_extractive=True,
                                              context_budget=context_budget)
                mapping[extractive.text] = value
                if slot.kind is SlotKind.CATEGORICAL:
                    multi_choice = build_slot_query(slot, prefix, force_extractive=False,
                                                    context_budget=context_budget)
                    mapping[multi_choice.text] = value
    return OracleBackend(mapping)


class CountingBackend:
    """Wrapper that counts individual requests, for cost assertions."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.request_count = 0
        self.call_sizes: list[int] = []

    def answer(self, requests: list[AnswerRequest]) -> list[AnswerResponse]:
        self.request_count += len(requests)
        self.call_sizes.append(len(requests))
        return self.inner.answer(requests)


class NoisyGateBackend:
    """Oracle wrapper that flips slot-gate decisions at configured rates.

    With probability ``fp_rate`` an unanswerable query answers a spurious
    value; with probability ``fn_rate`` an answerable query answers ``none``.
    Decisions are derived by hashing (seed, input text), so the backend stays
    deterministic and idempotent.
    """

    def __init__(self, inner: Backend, fp_rate: float, fn_rate: float, seed: int):
        self.inner = inner
        self.fp_rate = fp_rate
        self.fn_rate = fn_rate
        self.seed = seed

    def answer(self, requests: list[AnswerRequest]) -> list[AnswerResponse]:
        clean = self.inner.answer(requests)
        noisy = []
        for request, response in zip(requests, clean):
            rng_value = derive_seed(self.seed, request.input_text) / 2**64
            output = response.output_text
            if output == NONE_SENTINEL:
                if rng_value < self.fp_rate:
                    output = "spurious"
            else:
                if rng_value < self.fn_rate:
                    output = NONE_SENTINEL
            noisy.append(AnswerResponse(id=response.id, output_text=output))
        return noisy


class HttpBackend:
    """Remote client speaking the wire protocol.

    Splits large batches into chunks of ``batch_size`` and posts at most
    ``max_inflight`` chunks concurrently. Transport failures (connection
    errors, timeouts, HTTP 5xx) are retried up to ``max_attempts`` times with
    exponential backoff starting at ``backoff_base`` seconds; protocol
    violations are never retried.
    """

    def __init__(
        self,
        base_url: str,
        batch_size: int = 32,
        max_inflight: int = 4,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_base: float = 0.25,
        session: _requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.batch_size = batch_size
        self.max_inflight = max_inflight
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._session = session or _requests.Session()
        self._sleep = sleep

    def check_health(self) -> bool:
        try:
            response = self._session.get(f"{self.base_url}/v1/health", timeout=self.timeout)
            return response.status_code == 200 and response.json().get("status") == "ok"
        except (_requests.RequestException, ValueError):
            return False

    def _post_chunk(self, chunk: list[AnswerRequest]) -> list[AnswerResponse]:
        body = {"requests": [{"id": r.id, "input_text": r.input_text} for r in chunk]}
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._session.post(
                    f"{self.base_url}/v1/answer", json=body, timeout=self.timeout
                )
            except _requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailable(f"HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProtocolViolation(f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                payload = response.json()
                responses = [
                    AnswerResponse(id=item["id"], output_text=item["output_text"])
                    for item in payload["responses"]
                ]
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolViolation(f"unparseable response body: {exc}") from exc
            return _reorder_by_id(chunk, responses)
        raise BackendUnavailable(
            f"{self.base_url}: {self.max_attempts} attempts failed ({last_error})"
        )

    def answer(self, requests: list[AnswerRequest]) -> list[AnswerResponse]:
        chunks = [
            requests[i : i + self.batch_size] for i in range(0, len(requests), self.batch_size)
        ]
        if len(chunks) == 1:
            return self._post_chunk(chunks[0])
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            per_chunk = list(pool.map(self._post_chunk, chunks))
        return [response for chunk in per_chunk for response in chunk]

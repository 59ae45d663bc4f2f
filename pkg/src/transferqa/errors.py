"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract: config errors exit 2,
data errors exit 3, backend errors exit 4.
"""


class TransferQAError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TransferQAError):
    """Bad flags, missing input paths, inconsistent options."""


class DataError(TransferQAError):
    """Problems with input data files."""


class MalformedFile(DataError):
    """File does not parse in the declared format."""


class SpanMismatch(DataError):
    """Declared answer span text does not match the context substring."""


class GoldIndexOutOfRange(DataError):
    """Multi-choice record designates a gold option that does not exist."""


class UnknownSlot(DataError):
    """Dialogue annotation references a slot_id missing from the schema."""

    def __init__(self, slot_id: str):
        super().__init__(f"slot {slot_id!r} is not in the schema")
        self.slot_id = slot_id


class DuplicateSlot(DataError):
    """Schema declares the same slot_id twice."""


class EmptyHistory(DataError):
    """A dialogue context was requested for an empty turn list."""


class PoolExhausted(DataError):
    """Negative-question pool has no entry from a different passage."""


class AnswerInFirstSentence(DataError):
    """Context truncation would leave an empty context."""


class MissingSpan(DataError):
    """Context truncation requires an answer span that is absent."""


class BackendError(TransferQAError):
    """Base class for answer-backend failures."""


class BackendUnavailable(BackendError):
    """Transport failure that persisted through the retry policy."""


class ProtocolViolation(BackendError):
    """Backend response ids are not a permutation of the request ids."""


class EvaluationError(TransferQAError):
    """Base class for metric computation failures."""


class MissingPrediction(EvaluationError):
    """A gold turn has no matching prediction."""

    def __init__(self, dialogue_id: str, turn_index: int):
        super().__init__(f"no prediction for dialogue {dialogue_id!r} turn {turn_index}")
        self.dialogue_id = dialogue_id
        self.turn_index = turn_index


class NoActiveSlots(EvaluationError):
    """Corpus has zero gold-active slot instances."""


class UnknownDomain(EvaluationError):
    """Per-domain metric requested for a domain absent from the schema."""


class MissingDiagnostics(EvaluationError):
    """Oracle-gate rescoring needs pass-1 raw values that were not provided."""

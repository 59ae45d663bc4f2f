"""Cross-task QA-to-DST toolkit.

Converts QA and task-oriented dialogue corpora into one text-to-text format,
synthesizes unanswerable questions, runs two-pass zero-shot dialogue state
tracking against a pluggable answer backend, and scores the results.
"""

__version__ = "0.1.0"

from .records import (  # noqa: F401
    NONE_SENTINEL,
    Dialogue,
    DialogueState,
    DialogueTurn,
    QAExample,
    QAKind,
    SlotDescriptor,
    SlotKind,
    Speaker,
    normalize_value,
)
from .prompting import (  # noqa: F401
    ParsedAnswer,
    SerializedInput,
    build_slot_query,
    parse_answer,
    serialize_dialogue_context,
    serialize_qa,
    slot_to_question,
)
from .negative_synthesis import (  # noqa: F401
    QuestionPool,
    SynthesisConfig,
    sample_negative_question,
    synthesize_stream,
    truncate_context,
)
from .answer_backend import (  # noqa: F401
    AnswerRequest,
    AnswerResponse,
    Backend,
    CountingBackend,
    HttpBackend,
    NoisyGateBackend,
    OracleBackend,
    answer_batch,
    oracle_from_gold,
)
from .dst_tracker import (  # noqa: F401
    AliasTable,
    TurnPrediction,
    canonicalize,
    track_corpus,
    track_dialogue,
    track_turn,
)
from .evaluation import (  # noqa: F401
    ErrorTaxonomy,
    MetricsReport,
    average_goal_accuracy,
    error_taxonomy,
    evaluate_corpus,
    joint_goal_accuracy,
    oracle_gate_rescore,
    per_domain_jga,
    slot_gate_accuracy,
)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from transferqa.corpus_io import load_schema, read_dialogues_jsonl
from transferqa.dst_tracker import read_predictions_jsonl

DATA_DIR = Path(__file__).parent / "data"
FIXTURE3_DIR = DATA_DIR / "fixture3"


@pytest.fixture(scope="session")
def goldens_path() -> Path:
    return DATA_DIR / "serialization_goldens.jsonl"


@pytest.fixture(scope="session")
def fixture3_schema():
    return load_schema(FIXTURE3_DIR / "schema.json")


@pytest.fixture(scope="session")
def fixture3_golds():
    return read_dialogues_jsonl(FIXTURE3_DIR / "dialogues.jsonl")


@pytest.fixture(scope="session")
def fixture3_predictions(fixture3_schema):
    return read_predictions_jsonl(
        FIXTURE3_DIR / "predictions.jsonl",
        FIXTURE3_DIR / "diagnostics.jsonl",
        fixture3_schema,
    )

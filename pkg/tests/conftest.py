from __future__ import annotations

import json
import os

import pytest

from simulag.core import read_traces

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


@pytest.fixture(scope="session")
def data_dir() -> str:
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_trace_path() -> str:
    return os.path.join(DATA_DIR, "fixture_traces.jsonl")


@pytest.fixture(scope="session")
def golden_delay_path() -> str:
    return os.path.join(DATA_DIR, "golden_edatt_delays.jsonl")


@pytest.fixture(scope="session")
def fixture_traces(fixture_trace_path):
    return read_traces(fixture_trace_path)


@pytest.fixture(scope="session")
def text_fixtures():
    with open(os.path.join(DATA_DIR, "text_fixtures.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)

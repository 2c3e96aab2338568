"""Shared fixtures: the bundled transcript, script table, and replayed runs."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from storymem.backends import RuleBackend, ScriptedBackend
from storymem.engine import EngineConfig, MemoryEngine, run_replay
from storymem.transcript import ingest_native

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
TRANSCRIPT_PATH = FIXTURES / "synthetic60.json"
SCRIPT_PATH = FIXTURES / "script_table.json"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def transcript():
    return ingest_native(TRANSCRIPT_PATH)


@pytest.fixture(scope="session")
def script_table() -> dict:
    return json.loads(SCRIPT_PATH.read_text())


@pytest.fixture()
def scripted_backend(script_table) -> ScriptedBackend:
    return ScriptedBackend(script_table, source=str(SCRIPT_PATH))


@pytest.fixture()
def rule_backend() -> RuleBackend:
    return RuleBackend()


def scripted_replay(out_dir, transcript, script_table, config=None):
    """Replay the bundled transcript against the script table into out_dir."""
    engine = MemoryEngine(config or EngineConfig(B=0), ScriptedBackend(script_table))
    try:
        paths = run_replay(engine, transcript, out_dir, transcript_path=TRANSCRIPT_PATH)
    finally:
        engine.close()
    return engine, paths


@pytest.fixture(scope="session")
def b0_run(tmp_path_factory, transcript, script_table):
    """One finished B=0 replay shared by read-only tests: (engine, paths)."""
    root = tmp_path_factory.mktemp("b0") / "run"
    return scripted_replay(root, transcript, script_table, EngineConfig(B=0))


@pytest.fixture(scope="session")
def b4_run(tmp_path_factory, transcript, script_table):
    """One finished B=4 replay shared by read-only tests: (engine, paths)."""
    root = tmp_path_factory.mktemp("b4") / "run"
    return scripted_replay(root, transcript, script_table, EngineConfig(B=4))

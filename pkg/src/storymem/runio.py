"""Run-directory layout and serialization.

A run directory is the durable artifact of one replay:

    config.json       - everything needed to reproduce the run
    records.jsonl     - one line per iteration (latencies are wall-clock)
    snapshots/        - iter-NNNN.json bank snapshots
    episodic.json     - final narrative bank
    semantic.jsonl    - final triple store
    exchanges.jsonl   - every prompt/completion, for audit

All JSON is written with sorted keys; under a scripted backend every
file except the latency fields inside records.jsonl is reproducible
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import MissingBank, MissingSnapshots
from .transcript import Transcript


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def config(self) -> Path:
        return self.root / "config.json"

    @property
    def records(self) -> Path:
        return self.root / "records.jsonl"

    @property
    def snapshots(self) -> Path:
        return self.root / "snapshots"

    @property
    def episodic(self) -> Path:
        return self.root / "episodic.json"

    @property
    def semantic(self) -> Path:
        return self.root / "semantic.jsonl"

    @property
    def exchanges(self) -> Path:
        return self.root / "exchanges.jsonl"


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _dump_lines(rows) -> str:
    return "".join(
        json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n" for row in rows
    )


def transcript_stamp(transcript: Transcript, path: str | Path | None) -> dict:
    """Identity block for config.json: which conversation this run saw."""
    from .transcript import transcript_to_json

    canonical = transcript_to_json(transcript)
    return {
        "path": str(path) if path else None,
        "scenario_id": transcript.scenario_id,
        "turns": transcript.turn_count(),
        "sessions": len(transcript.sessions),
        "sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
    }


class RunWriter:
    def __init__(self, root: str | Path) -> None:
        self.paths = RunPaths(Path(root))
        self.paths.root.mkdir(parents=True, exist_ok=True)
        self.paths.snapshots.mkdir(exist_ok=True)

    def write_config(self, config: dict) -> None:
        self.paths.config.write_text(_dump(config))

    def write_snapshot(self, iteration: int, bank_dict: dict) -> None:
        path = self.paths.snapshots / f"iter-{iteration:04d}.json"
        path.write_text(_dump(bank_dict))

    def write_records(self, records: list[dict]) -> None:
        self.paths.records.write_text(_dump_lines(records))

    def write_exchanges(self, exchanges: list[dict]) -> None:
        self.paths.exchanges.write_text(_dump_lines(exchanges))

    def write_final(self, bank_dict: dict, semantic_jsonl: str) -> None:
        self.paths.episodic.write_text(_dump(bank_dict))
        self.paths.semantic.write_text(semantic_jsonl)


class RunReader:
    def __init__(self, root: str | Path) -> None:
        self.paths = RunPaths(Path(root))
        if not self.paths.root.is_dir():
            raise MissingBank(f"run directory {root} does not exist")

    def config(self) -> dict:
        return json.loads(self.paths.config.read_text())

    def records(self) -> list[dict]:
        if not self.paths.records.exists():
            return []
        return [
            json.loads(line)
            for line in self.paths.records.read_text().splitlines()
            if line.strip()
        ]

    def exchanges(self) -> list[dict]:
        if not self.paths.exchanges.exists():
            return []
        return [
            json.loads(line)
            for line in self.paths.exchanges.read_text().splitlines()
            if line.strip()
        ]

    def episodic_dict(self) -> dict:
        if not self.paths.episodic.exists():
            raise MissingBank(f"{self.paths.episodic} not found")
        return json.loads(self.paths.episodic.read_text())

    def semantic_jsonl(self) -> str:
        if not self.paths.semantic.exists():
            raise MissingBank(f"{self.paths.semantic} not found")
        return self.paths.semantic.read_text()

    def snapshots(self) -> list[tuple[int, dict]]:
        """(iteration, bank dict) pairs in iteration order."""
        if not self.paths.snapshots.is_dir():
            raise MissingSnapshots(f"{self.paths.snapshots} not found")
        out = []
        for path in sorted(self.paths.snapshots.glob("iter-*.json")):
            iteration = int(path.stem.split("-")[1])
            out.append((iteration, json.loads(path.read_text())))
        if not out:
            raise MissingSnapshots(f"no snapshots under {self.paths.snapshots}")
        return out

#!/usr/bin/env python3
"""Ask questions against a finished run, comparing both retrievers.

Restores the memory bank and fact store written by 01_build_memory.py
(rebuilding them first if the run directory is missing) and answers a
few of the bundled evaluation questions twice: once with coherence
retrieval (the model picks stories against the narrative outline) and
once with the embedding baseline (nearest headline wins).
"""

from __future__ import annotations

import argparse
from pathlib import Path

from storymem.backends import RuleBackend
from storymem.engine import EngineConfig, MemoryEngine, run_replay
from storymem.episodic import MemoryBank
from storymem.metrics import compression_rate
from storymem.runio import RunReader
from storymem.semantic import TripleStore
from storymem.transcript import ingest_native

ROOT = Path(__file__).resolve().parents[1]


def ensure_run(run_dir: str, transcript_path: str):
    if not Path(run_dir, "episodic.json").exists():
        print(f"(no run at {run_dir}; replaying first)")
        transcript = ingest_native(transcript_path)
        engine = MemoryEngine(EngineConfig(B=0), RuleBackend())
        try:
            run_replay(engine, transcript, run_dir, transcript_path=transcript_path)
        finally:
            engine.close()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", default=str(ROOT / "runs" / "demo"))
    parser.add_argument("--transcript", default=str(ROOT / "fixtures" / "synthetic60.json"))
    parser.add_argument("--questions", type=int, default=3, help="how many to ask")
    args = parser.parse_args()

    ensure_run(args.run, args.transcript)
    transcript = ingest_native(args.transcript)
    reader = RunReader(args.run)
    config = EngineConfig.from_dict(reader.config().get("engine", {}))

    engine = MemoryEngine(config, RuleBackend())
    try:
        engine.restore(
            transcript,
            MemoryBank.from_dict(reader.episodic_dict()),
            TripleStore.from_jsonl(reader.semantic_jsonl()),
        )
        for q in transcript.questions[: args.questions]:
            print(f"\nQ ({q.category}): {q.text}")
            print(f"  gold: {q.gold_answer}")
            for retriever in ("coherence", "embedding"):
                outcome = engine.ask(q.text, retriever=retriever)
                stories = ", ".join(
                    f"{b.owner}/{b.topic}" for b in outcome.retrieval.blocks
                ) or "(none)"
                rate = compression_rate(outcome.full_history_tokens, outcome.context_tokens)
                print(f"  [{retriever}] answer: {outcome.answer}")
                print(f"    read {stories} plus {len(outcome.retrieval.facts)} facts "
                      f"= {outcome.context_tokens} tokens "
                      f"({rate:.1f}% of the history avoided)")
    finally:
        engine.close()

    print(f"\nthe CLI equivalent: storymem query {args.run} --question '...'")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

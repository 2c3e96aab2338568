#!/usr/bin/env python3
"""Score a finished run on the bundled question set.

Runs the full evaluation pipeline: answers judged against gold, evidence
coverage swept over k, per-question context compression, latency
percentiles, and constraint recall. Prints the same table the
`storymem eval` subcommand renders.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from storymem.backends import RuleBackend
from storymem.engine import EngineConfig, MemoryEngine, run_replay
from storymem.episodic import MemoryBank
from storymem.evaluate import run_evaluation
from storymem.metrics import render_report_table, write_report
from storymem.runio import RunReader
from storymem.semantic import TripleStore
from storymem.transcript import ingest_native

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", default=str(ROOT / "runs" / "demo"))
    parser.add_argument("--transcript", default=str(ROOT / "fixtures" / "synthetic60.json"))
    parser.add_argument("--retriever", choices=["coherence", "embedding"], default="coherence")
    parser.add_argument("--report", default=None, help="also write report.json here")
    args = parser.parse_args()

    transcript = ingest_native(args.transcript)
    if not Path(args.run, "episodic.json").exists():
        print(f"(no run at {args.run}; replaying first)")
        engine = MemoryEngine(EngineConfig(B=0), RuleBackend())
        try:
            run_replay(engine, transcript, args.run, transcript_path=args.transcript)
        finally:
            engine.close()

    reader = RunReader(args.run)
    engine = MemoryEngine(
        EngineConfig.from_dict(reader.config().get("engine", {})), RuleBackend()
    )
    try:
        engine.restore(
            transcript,
            MemoryBank.from_dict(reader.episodic_dict()),
            TripleStore.from_jsonl(reader.semantic_jsonl()),
        )
        report, traces = run_evaluation(
            engine,
            transcript.questions,
            retriever=args.retriever,
            records=reader.records(),
        )
    finally:
        engine.close()

    print(f"evaluated {len(transcript.questions)} questions with the "
          f"{args.retriever} retriever\n")
    print(render_report_table(report))

    misses = {
        qid: verdict
        for qid, verdict in report.get("jscore", {}).get("verdicts", {}).items()
        if verdict != "correct"
    }
    if misses:
        print(f"\nnot credited: {misses}")
    print(f"\n{len(traces)} retrieval traces collected "
          f"(what was read to answer each question)")

    if args.report:
        write_report(report, args.report)
        print(f"report written to {args.report}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

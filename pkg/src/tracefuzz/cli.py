"""Command-line campaign driver: ingest, fuzz, replay, report.

Exit codes follow one convention everywhere: 0 clean, 1 bug verdicts
found, 2 operational error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from tracefuzz.campaign import (
    ConfigError,
    SUMMARY_FILE,
    VERDICTS_FILE,
    load_config,
    load_summary,
    run_campaign,
)
from tracefuzz.core import WireFormatError
from tracefuzz.harness import (
    ExecutorHandle,
    ExecutorSpec,
    ExecutorUnavailable,
    ReplayFormatError,
    replay as replay_case,
)
from tracefuzz.oracles import BUG_KINDS, VerdictKind, differential_verdict
from tracefuzz.store import StoreFormatError, ValueStore

EXIT_CLEAN = 0
EXIT_VERDICTS = 1
EXIT_ERROR = 2


def _parse_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    for key, attr in (
        ("store", "store"),
        ("output_dir", "output_dir"),
        ("campaign_seed", "seed"),
        ("per_api_mutants", "mutants"),
        ("api_filter", "api"),
        ("jobs", "jobs"),
        ("defects", "defects"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    return overrides


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    store_path = Path(args.store)
    if store_path.exists():
        store = ValueStore.load(store_path)
    else:
        store = ValueStore()
    total_ok = 0
    for trace in args.traces:
        try:
            stats = store.ingest_file(trace)
        except OSError as exc:
            print(f"error: cannot read {trace}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        for line_no, message in stats.errors:
            print(f"{trace}:{line_no}: {message}", file=sys.stderr)
        total_ok += stats.records_ok
        print(
            f"{trace}: apis_covered={stats.apis_covered} "
            f"entries_added={stats.entries_added} "
            f"duplicates_skipped={stats.duplicates_skipped} "
            f"errors={len(stats.errors)}"
        )
    if total_ok == 0:
        print("error: no records ingested", file=sys.stderr)
        return EXIT_ERROR
    store.save(store_path)
    num_apis, total = store.stats()
    print(f"store: {store_path} apis={num_apis} entries={total}")
    return EXIT_CLEAN


def cmd_fuzz(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args))
    summary = run_campaign(cfg)
    print(f"campaign seed {summary.campaign_seed}: {summary.covered_apis} APIs, "
          f"{summary.testcases} test cases")
    for kind, count in sorted(summary.verdict_totals.items()):
        print(f"  {kind:20s} {count}")
    print(f"artifacts written to {cfg.output_dir}")
    return EXIT_VERDICTS if summary.bug_count else EXIT_CLEAN


def cmd_replay(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args))
    executors = {
        b: ExecutorHandle(ExecutorSpec(b, cfg.executor_cmds[b.name])) for b in cfg.backends
    }
    try:
        tc, outcomes = replay_case(args.testcase, executors, cfg.timeout_ms, line=args.line)
    finally:
        for handle in executors.values():
            handle.stop()
    print(f"api: {tc.entry.api}  lineage: {','.join(tc.lineage) or '-'}")
    for backend, outcome in outcomes.items():
        line = f"  {backend.name:10s} {outcome.status}"
        if outcome.status == "ok":
            line += f"  sum={outcome.output.sum:.6g} shape={list(outcome.output.shape)}"
        elif outcome.status == "exception":
            line += f"  {outcome.exception_class}: {outcome.exception_message}"
        elif outcome.status == "crash":
            line += f"  exit_code={outcome.exit_code}"
        print(line)
    if len(outcomes) >= 2:
        verdict = differential_verdict(outcomes, cfg.oracle)
        print(f"verdict: {verdict.kind.value}  {verdict.detail}")
        if verdict.kind in BUG_KINDS:
            return EXIT_VERDICTS
    return EXIT_CLEAN


def cmd_report(args) -> int:
    out_dir = Path(args.output_dir)
    summary_path = out_dir / SUMMARY_FILE
    verdicts_path = out_dir / VERDICTS_FILE
    if not summary_path.exists() or not verdicts_path.exists():
        print(f"error: {out_dir} holds no campaign artifacts", file=sys.stderr)
        return EXIT_ERROR
    summary = load_summary(out_dir)
    kinds = [k.value for k in VerdictKind]
    print(f"campaign seed {summary['campaign_seed']}: "
          f"{summary['covered_apis']} APIs, {summary['testcases']} test cases")
    header = f"{'api':16s}" + "".join(f"{k:>20s}" for k in kinds)
    print(header)
    for api, counts in sorted(summary["per_api"].items()):
        row = f"{api:16s}" + "".join(f"{counts.get(k, 0):>20d}" for k in kinds)
        print(row)
    totals = summary["verdict_totals"]
    print(f"{'total':16s}" + "".join(f"{totals.get(k, 0):>20d}" for k in kinds))

    import json

    bug_kinds = {k.value for k in BUG_KINDS}
    with open(verdicts_path, encoding="utf-8") as fh:
        next(fh)  # header line
        for line in fh:
            obj = json.loads(line)
            if obj["verdict"] in bug_kinds:
                print(f"{obj['verdict']:20s} {obj['api']:16s} {obj['testcase_ref']} {obj['detail']}")
    bug_total = sum(totals.get(k, 0) for k in bug_kinds)
    return EXIT_VERDICTS if bug_total else EXIT_CLEAN


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracefuzz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="ingest trace files into a value store")
    p_ingest.add_argument("traces", nargs="+", help="line-delimited trace record files")
    p_ingest.add_argument("--store", required=True, help="store file to create or extend")
    p_ingest.set_defaults(fn=cmd_ingest)

    def add_campaign_flags(p):
        p.add_argument("--config", required=True, help="campaign config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key")
        p.add_argument("--store")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--mutants", type=int)
        p.add_argument("--api", help="comma-separated API filter")
        p.add_argument("--jobs", type=int)
        p.add_argument("--defects")

    p_fuzz = sub.add_parser("fuzz", help="run a fuzzing campaign")
    add_campaign_flags(p_fuzz)
    p_fuzz.set_defaults(fn=cmd_fuzz)

    p_replay = sub.add_parser("replay", help="re-execute a serialized test case")
    p_replay.add_argument("testcase", help="test case file (JSON, or JSONL with --line)")
    p_replay.add_argument("--line", type=int, default=None, help="1-based line in a JSONL file")
    add_campaign_flags(p_replay)
    p_replay.set_defaults(fn=cmd_replay)

    p_report = sub.add_parser("report", help="summarize campaign artifacts")
    p_report.add_argument("output_dir")
    p_report.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, StoreFormatError, ReplayFormatError, WireFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ExecutorUnavailable as exc:
        print(f"error: executor unavailable: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

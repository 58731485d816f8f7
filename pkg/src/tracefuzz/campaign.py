"""Campaign driver: per-API fuzz loops, oracle passes, artifact files.

A campaign loads a value store, derives one RngStream per API from the
campaign seed, generates and executes the configured number of mutants
per API, classifies every case through the differential/crash oracles,
and runs the timing pass on cases whose tensors carry a low-precision
float dtype.  Artifacts are line-delimited and byte-deterministic for a
fixed seed (timing measurements are the only varying fields and are
masked by the determinism checks).

Per-API campaigns may run in parallel (`jobs`); artifacts are merged in
sorted API order, so output bytes are independent of scheduling.
"""

from __future__ import annotations

import json
import shlex
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from tracefuzz.core import (
    BackendId,
    Dtype,
    InvocationEntry,
    TensorSpec,
    TestCase,
    dumps_compact,
)
from tracefuzz.harness import ExecutorHandle, ExecutorSpec, Outcome, run_test
from tracefuzz.mutation import MutationConfig, mutate
from tracefuzz.oracles import (
    BUG_KINDS,
    OracleConfig,
    Verdict,
    VerdictKind,
    differential_verdict,
    performance_verdict,
)
from tracefuzz.rng import RngStream
from tracefuzz.store import ValueStore

DEFAULT_CAMPAIGN_SEED = 0x5EEDC0DE

TESTCASES_FILE = "testcases.jsonl"
OUTCOMES_FILE = "outcomes.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
SUMMARY_FILE = "summary.json"

_LOW_PRECISION = (Dtype.FLOAT16, Dtype.BFLOAT16)


class ConfigError(ValueError):
    """A campaign config file or override is invalid."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_MUTATION_KEYS = {
    "p_type_mutation": float,
    "p_rand_over_db": float,
    "max_rank": int,
    "max_dim": int,
    "max_int": int,
    "max_str_len": int,
}
_ORACLE_KEYS = {
    "rtol": float,
    "atol": float,
    "perf_ratio": float,
    "perf_min_ms": float,
}
_CAMPAIGN_KEYS = {
    "store",
    "output_dir",
    "backends",
    "executor_cmd",
    "defects",
    "api_filter",
    "campaign_seed",
    "per_api_mutants",
    "timeout_ms",
    "timing_reps",
    "jobs",
    "machine",
    "benign_exceptions",
}


@dataclass
class CampaignConfig:
    store_path: Path
    output_dir: Path
    backends: tuple[BackendId, ...]
    executor_cmds: dict[str, tuple[str, ...]]
    mutation: MutationConfig = field(default_factory=MutationConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    api_filter: tuple[str, ...] = ()
    campaign_seed: int = DEFAULT_CAMPAIGN_SEED
    per_api_mutants: int = 1000
    timeout_ms: int = 10000
    timing_reps: int = 11
    jobs: int = 1
    defects: str = ""

    def __post_init__(self) -> None:
        if len(self.backends) < 2:
            raise ConfigError("a campaign needs at least two backends to compare")
        names = [b.name for b in self.backends]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate backend names: {names}")
        missing = [n for n in names if n not in self.executor_cmds]
        if missing:
            raise ConfigError(f"no executor command for backends: {missing}")
        if self.per_api_mutants < 1 or self.timeout_ms < 1 or self.jobs < 1 or self.timing_reps < 1:
            raise ConfigError("per_api_mutants, timeout_ms, timing_reps and jobs must be positive")


def parse_config_text(text: str) -> dict[str, str]:
    """Flat `key = value` lines; blank lines and # comments ignored."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _substitute(token: str, backend: str, defects: str) -> str:
    return (
        token.replace("{python}", sys.executable)
        .replace("{backend}", backend)
        .replace("{defects}", defects)
    )


def build_config(
    pairs: dict[str, str],
    overrides: dict[str, str] | None = None,
    base_dir: Path | None = None,
) -> CampaignConfig:
    """Build a CampaignConfig from flat key/value pairs plus CLI overrides."""
    merged = dict(pairs)
    merged.update(overrides or {})
    base = base_dir or Path.cwd()

    known = _CAMPAIGN_KEYS | set(_MUTATION_KEYS) | set(_ORACLE_KEYS) | {
        k for k in merged if k.startswith("executor_cmd.")
    }
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def need(key: str) -> str:
        if key not in merged or not merged[key]:
            raise ConfigError(f"missing required config key {key!r}")
        return merged[key]

    def get_typed(key: str, cast, default):
        if key not in merged or merged[key] == "":
            return default
        try:
            return cast(merged[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {merged[key]!r}") from exc

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    machine = merged.get("machine", "local")
    backend_names = [b.strip() for b in need("backends").split(",") if b.strip()]
    backends = tuple(BackendId(n, machine) for n in backend_names)
    defects = merged.get("defects", "")

    cmds: dict[str, tuple[str, ...]] = {}
    for name in backend_names:
        template = merged.get(f"executor_cmd.{name}", merged.get("executor_cmd", ""))
        if not template:
            raise ConfigError(f"no executor_cmd for backend {name!r}")
        cmds[name] = tuple(_substitute(tok, name, defects) for tok in shlex.split(template))

    mutation_kwargs = {
        key: get_typed(key, cast, None)
        for key, cast in _MUTATION_KEYS.items()
        if get_typed(key, cast, None) is not None
    }
    per_api = get_typed("per_api_mutants", int, 1000)
    mutation = MutationConfig(per_api_mutants=per_api, **mutation_kwargs)

    oracle_kwargs = {
        key: get_typed(key, cast, None)
        for key, cast in _ORACLE_KEYS.items()
        if get_typed(key, cast, None) is not None
    }
    if merged.get("benign_exceptions"):
        oracle_kwargs["benign_exceptions"] = tuple(
            s.strip() for s in merged["benign_exceptions"].split(",") if s.strip()
        )
    oracle = OracleConfig(**oracle_kwargs)

    api_filter = tuple(
        a.strip() for a in merged.get("api_filter", "").split(",") if a.strip()
    )

    try:
        return CampaignConfig(
            store_path=resolve(need("store")),
            output_dir=resolve(need("output_dir")),
            backends=backends,
            executor_cmds=cmds,
            mutation=mutation,
            oracle=oracle,
            api_filter=api_filter,
            campaign_seed=get_typed("campaign_seed", int, DEFAULT_CAMPAIGN_SEED),
            per_api_mutants=per_api,
            timeout_ms=get_typed("timeout_ms", int, 10000),
            timing_reps=get_typed("timing_reps", int, 11),
            jobs=get_typed("jobs", int, 1),
            defects=defects,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> CampaignConfig:
    path = Path(path)
    return build_config(parse_config_text(path.read_text(encoding="utf-8")), overrides, path.parent)


# ---------------------------------------------------------------------------
# Per-API campaign
# ---------------------------------------------------------------------------


@dataclass
class CaseResult:
    testcase_wire: dict[str, Any]
    outcomes_wire: list[dict[str, Any]]
    verdicts: list[Verdict]


@dataclass
class ApiResult:
    api: str
    cases: list[CaseResult]
    perf_pairs_skipped: int = 0


def _low_precision_dtype(entry: InvocationEntry) -> Dtype | None:
    for _, value in entry.args:
        if isinstance(value, TensorSpec) and value.dtype in _LOW_PRECISION:
            return value.dtype
    return None


def _raise_tensor_precision(entry: InvocationEntry) -> InvocationEntry:
    """The timing twin: every low-precision tensor raised to float32."""
    new_args = tuple(
        (
            name,
            replace(value, dtype=Dtype.FLOAT32)
            if isinstance(value, TensorSpec) and value.dtype in _LOW_PRECISION
            else value,
        )
        for name, value in entry.args
    )
    return InvocationEntry(api=entry.api, args=new_args, source=entry.source)


def _performance_pass(
    tc: TestCase,
    outcomes: dict[BackendId, Outcome],
    executors: dict[BackendId, ExecutorHandle],
    cfg: CampaignConfig,
) -> tuple[Verdict | None, int]:
    """Run the timed low/high pair when the case qualifies.

    Returns (verdict or None, skipped-pair count).
    """
    dt_low = _low_precision_dtype(tc.entry)
    if dt_low is None or any(o.status != "ok" for o in outcomes.values()):
        return None, 0

    low_tc = replace(tc, timing_reps=cfg.timing_reps)
    high_tc = replace(
        tc, entry=_raise_tensor_precision(tc.entry), timing_reps=cfg.timing_reps
    )
    low_out = run_test(low_tc, executors, cfg.timeout_ms)
    high_out = run_test(high_tc, executors, cfg.timeout_ms)

    skipped = 0
    anomalies: list[Verdict] = []
    evaluated = False
    for backend in tc.backends:
        lo, hi = low_out[backend], high_out[backend]
        if lo.status != "ok" or hi.status != "ok":
            skipped += 1
            continue
        verdict = performance_verdict(lo, hi, dt_low, Dtype.FLOAT32, cfg.oracle)
        if verdict is None:
            skipped += 1
            continue
        evaluated = True
        if verdict.kind == VerdictKind.PERFORMANCE_ANOMALY:
            anomalies.append(verdict)
    if anomalies:
        return anomalies[0], skipped
    if evaluated:
        return (
            Verdict(
                VerdictKind.PASS,
                {"oracle": "performance", "dt_low": dt_low.value, "dt_high": Dtype.FLOAT32.value},
            ),
            skipped,
        )
    return None, skipped


def run_api_campaign(api: str, store: ValueStore, cfg: CampaignConfig) -> ApiResult:
    rng = RngStream(cfg.campaign_seed).child(api)
    executors = {
        b: ExecutorHandle(ExecutorSpec(b, cfg.executor_cmds[b.name])) for b in cfg.backends
    }
    for handle in executors.values():
        handle.start()
    result = ApiResult(api=api, cases=[])
    try:
        for _ in range(cfg.per_api_mutants):
            tc = mutate(api, store, cfg.mutation, rng)
            tc = replace(tc, backends=cfg.backends, timing_reps=1)
            outcomes = run_test(tc, executors, cfg.timeout_ms)
            verdicts = [differential_verdict(outcomes, cfg.oracle)]
            perf_verdict, skipped = _performance_pass(tc, outcomes, executors, cfg)
            result.perf_pairs_skipped += skipped
            if perf_verdict is not None:
                verdicts.append(perf_verdict)
            result.cases.append(
                CaseResult(
                    testcase_wire=tc.to_wire(),
                    outcomes_wire=[outcomes[b].to_wire() for b in tc.backends],
                    verdicts=verdicts,
                )
            )
    finally:
        for handle in executors.values():
            handle.stop()
    return result


# ---------------------------------------------------------------------------
# Whole campaign and artifacts
# ---------------------------------------------------------------------------


@dataclass
class CampaignSummary:
    campaign_seed: int
    covered_apis: int
    testcases: int
    verdict_totals: dict[str, int]
    per_api: dict[str, dict[str, int]]
    perf_pairs_skipped: int
    backends: list[str]
    defects: str

    @property
    def bug_count(self) -> int:
        return sum(self.verdict_totals.get(kind.value, 0) for kind in BUG_KINDS)

    def to_json(self) -> str:
        payload = {
            "campaign_seed": self.campaign_seed,
            "covered_apis": self.covered_apis,
            "testcases": self.testcases,
            "verdict_totals": self.verdict_totals,
            "per_api": self.per_api,
            "perf_pairs_skipped": self.perf_pairs_skipped,
            "backends": self.backends,
            "defects": self.defects,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def run_campaign(cfg: CampaignConfig) -> CampaignSummary:
    store = ValueStore.load(cfg.store_path)
    apis = list(cfg.api_filter) if cfg.api_filter else store.apis()
    known = set(store.apis())
    unknown = [a for a in apis if a not in known]
    if unknown:
        raise ConfigError(f"api_filter names unknown APIs: {unknown}")
    apis = sorted(apis)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda a: run_api_campaign(a, store, cfg), apis))
    else:
        results = [run_api_campaign(api, store, cfg) for api in apis]

    return write_artifacts(cfg, results)


def write_artifacts(cfg: CampaignConfig, results: list[ApiResult]) -> CampaignSummary:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    header = {"campaign_seed": cfg.campaign_seed}

    testcase_lines = [dumps_compact({"artifact": "testcases", **header})]
    outcome_lines = [dumps_compact({"artifact": "outcomes", **header})]
    verdict_lines = [dumps_compact({"artifact": "verdicts", **header})]
    per_api: dict[str, dict[str, int]] = {}
    totals: Counter = Counter()
    perf_skipped = 0
    testcases = 0

    for result in sorted(results, key=lambda r: r.api):
        counts: Counter = Counter()
        perf_skipped += result.perf_pairs_skipped
        for case in result.cases:
            testcases += 1
            testcase_lines.append(dumps_compact(case.testcase_wire))
            ref = f"{TESTCASES_FILE}#{len(testcase_lines)}"
            outcome_lines.append(
                dumps_compact({"testcase_ref": ref, "outcomes": case.outcomes_wire})
            )
            for verdict in case.verdicts:
                counts[verdict.kind.value] += 1
                totals[verdict.kind.value] += 1
                wire = replace(verdict, testcase_ref=ref).to_wire(result.api)
                verdict_lines.append(dumps_compact(wire))
        per_api[result.api] = dict(sorted(counts.items()))

    (cfg.output_dir / TESTCASES_FILE).write_text("\n".join(testcase_lines) + "\n")
    (cfg.output_dir / OUTCOMES_FILE).write_text("\n".join(outcome_lines) + "\n")
    (cfg.output_dir / VERDICTS_FILE).write_text("\n".join(verdict_lines) + "\n")

    summary = CampaignSummary(
        campaign_seed=cfg.campaign_seed,
        covered_apis=len(results),
        testcases=testcases,
        verdict_totals=dict(sorted(totals.items())),
        per_api=per_api,
        perf_pairs_skipped=perf_skipped,
        backends=[b.name for b in cfg.backends],
        defects=cfg.defects,
    )
    (cfg.output_dir / SUMMARY_FILE).write_text(summary.to_json())
    return summary


def load_summary(output_dir: str | Path) -> dict[str, Any]:
    path = Path(output_dir) / SUMMARY_FILE
    return json.loads(path.read_text(encoding="utf-8"))


def mask_timing_fields(obj: Any) -> Any:
    """Strip timing-derived fields for byte-determinism comparisons."""
    if isinstance(obj, dict):
        return {
            k: mask_timing_fields(v)
            for k, v in obj.items()
            if k not in ("elapsed_ms", "timing")
        }
    if isinstance(obj, list):
        return [mask_timing_fields(x) for x in obj]
    return obj

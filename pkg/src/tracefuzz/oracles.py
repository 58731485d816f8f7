"""Verdict classification over per-backend execution outcomes.

Three oracle passes: differential digest comparison across backends
(wrong-computation bugs), the precision/time metamorphic relation
(performance bugs), and crash/exception analysis with the benign
same-class-everywhere filter (crash bugs vs invalid inputs).

All functions are pure over Outcomes and safe to evaluate concurrently.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from tracefuzz.core import BackendId, Dtype, precision_lt
from tracefuzz.harness import Outcome, OutputDigest

# Timing repetitions discarded as warmup before taking the median.
WARMUP_REPS = 2


@dataclass(frozen=True)
class OracleConfig:
    rtol: float = 1e-4
    atol: float = 1e-6
    perf_ratio: float = 1.5
    perf_min_ms: float = 1.0
    benign_exceptions: tuple[str, ...] = ("ValueError", "InvalidArgumentError", "TypeError")

    def __post_init__(self) -> None:
        if self.rtol < 0 or self.atol < 0:
            raise ValueError("rtol and atol must be >= 0")
        if self.perf_ratio <= 1.0:
            raise ValueError("perf_ratio must be > 1")
        object.__setattr__(self, "benign_exceptions", tuple(self.benign_exceptions))


class VerdictKind(str, Enum):
    PASS = "Pass"
    WRONG_COMPUTATION = "WrongComputation"
    PERFORMANCE_ANOMALY = "PerformanceAnomaly"
    CRASH_BUG = "CrashBug"
    INVALID_INPUT = "InvalidInput"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


BUG_KINDS = (
    VerdictKind.WRONG_COMPUTATION,
    VerdictKind.PERFORMANCE_ANOMALY,
    VerdictKind.CRASH_BUG,
)


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    detail: dict[str, Any]
    testcase_ref: str = ""

    def to_wire(self, api: str) -> dict[str, Any]:
        return {
            "api": api,
            "verdict": self.kind.value,
            "detail": self.detail,
            "testcase_ref": self.testcase_ref,
        }


# ---------------------------------------------------------------------------
# Differential oracle
# ---------------------------------------------------------------------------


def _close(a: float, b: float, cfg: OracleConfig) -> bool:
    if a == b:
        return True  # covers equal infinities
    if math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= cfg.atol + cfg.rtol * abs(b)


def divergent_fields(a: OutputDigest, b: OutputDigest, cfg: OracleConfig) -> list[str]:
    """Digest fields on which two outcomes disagree beyond tolerance."""
    if a.shape != b.shape:
        return ["shape"]
    if a.dtype != b.dtype:
        return ["dtype"]
    fields = []
    if not _close(a.sum, b.sum, cfg):
        fields.append("sum")
    if not _close(a.abs_sum, b.abs_sum, cfg):
        fields.append("abs_sum")
    for i, (xa, xb) in enumerate(zip(a.sample, b.sample)):
        if not _close(xa, xb, cfg):
            fields.append(f"sample[{i}]")
    return fields


def differential_verdict(
    outcomes: Mapping[BackendId, Outcome],
    cfg: OracleConfig,
    testcase_ref: str = "",
) -> Verdict:
    """Pairwise digest agreement across all-ok backends; mixed statuses
    defer to the crash oracle."""
    if len(outcomes) < 2:
        raise ValueError("differential oracle needs at least two outcomes")
    if any(o.status != "ok" for o in outcomes.values()):
        return crash_verdict(outcomes, cfg, testcase_ref)

    ordered = sorted(outcomes.items(), key=lambda kv: kv[0].name)
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            (ba, oa), (bb, ob) = ordered[i], ordered[j]
            fields = divergent_fields(oa.output, ob.output, cfg)
            if fields:
                return Verdict(
                    VerdictKind.WRONG_COMPUTATION,
                    {
                        "backends": [ba.name, bb.name],
                        "fields": fields,
                        "sums": [oa.output.sum, ob.output.sum],
                    },
                    testcase_ref,
                )
    return Verdict(VerdictKind.PASS, {"oracle": "differential"}, testcase_ref)


# ---------------------------------------------------------------------------
# Crash oracle with benign-exception filter
# ---------------------------------------------------------------------------


def crash_verdict(
    outcomes: Mapping[BackendId, Outcome],
    cfg: OracleConfig,
    testcase_ref: str = "",
) -> Verdict:
    if all(o.status == "ok" for o in outcomes.values()):
        raise ValueError("crash oracle needs at least one non-ok outcome")

    hard = {b.name: o for b, o in outcomes.items() if o.status in ("crash", "timeout")}
    if hard:
        name, outcome = sorted(hard.items())[0]
        return Verdict(
            VerdictKind.CRASH_BUG,
            {
                "reason": outcome.status,
                "backend": name,
                "exit_code": outcome.exit_code,
            },
            testcase_ref,
        )

    ok_backends = sorted(b.name for b, o in outcomes.items() if o.status == "ok")
    exc = {b.name: o for b, o in outcomes.items() if o.status == "exception"}
    if ok_backends:
        # Exception on some backends while others accept the same input:
        # inconsistent behavior, not an input problem.
        return Verdict(
            VerdictKind.CRASH_BUG,
            {
                "reason": "inconsistent",
                "ok_backends": ok_backends,
                "raising_backends": {n: o.exception_class for n, o in sorted(exc.items())},
            },
            testcase_ref,
        )

    classes = {o.exception_class for o in exc.values()}
    if len(classes) == 1 and next(iter(classes)) in cfg.benign_exceptions:
        return Verdict(
            VerdictKind.INVALID_INPUT,
            {"exception_class": next(iter(classes))},
            testcase_ref,
        )
    return Verdict(
        VerdictKind.CRASH_BUG,
        {
            "reason": "non-benign exceptions",
            "classes": {n: o.exception_class for n, o in sorted(exc.items())},
        },
        testcase_ref,
    )


# ---------------------------------------------------------------------------
# Performance oracle (precision/time metamorphic relation)
# ---------------------------------------------------------------------------


def timing_median(elapsed_ms, warmup: int = WARMUP_REPS) -> float:
    """Median after discarding up to `warmup` leading repetitions.

    At least one measurement is always kept, so single-shot runs remain
    usable (if noisier).
    """
    vals = list(elapsed_ms)
    if not vals:
        raise ValueError("no timing measurements")
    drop = min(warmup, len(vals) - 1)
    return statistics.median(vals[drop:])


def performance_verdict(
    low: Outcome,
    high: Outcome,
    dt_low: Dtype,
    dt_high: Dtype,
    cfg: OracleConfig,
    testcase_ref: str = "",
) -> Verdict | None:
    """Lower-precision runs should not be slower than higher-precision runs.

    Returns None (not applicable) when the dtypes are not strictly ordered
    by precision; such pairs are skipped and counted by the caller.
    """
    if low.status != "ok" or high.status != "ok":
        raise ValueError("performance oracle needs two ok outcomes")
    if not precision_lt(dt_low, dt_high):
        return None
    med_low = timing_median(low.elapsed_ms)
    med_high = timing_median(high.elapsed_ms)
    if med_low > cfg.perf_ratio * med_high and med_high >= cfg.perf_min_ms:
        return Verdict(
            VerdictKind.PERFORMANCE_ANOMALY,
            {
                "dt_low": dt_low.value,
                "dt_high": dt_high.value,
                "backend": low.backend.name,
                "timing": {"low_ms": med_low, "high_ms": med_high},
            },
            testcase_ref,
        )
    return Verdict(
        VerdictKind.PASS,
        {"oracle": "performance", "dt_low": dt_low.value, "dt_high": dt_high.value},
        testcase_ref,
    )

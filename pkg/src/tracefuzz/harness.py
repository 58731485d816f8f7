"""Executor process management and test-case dispatch.

Executors are long-lived child processes speaking a line-delimited JSON
protocol over stdio; each request is self-contained so no state leaks
between test cases.  The harness synthesizes crash outcomes when an
executor terminates abnormally and timeout outcomes when a deadline is
missed, killing and restarting the process either way so one bad test
case never contaminates the next.

One executor process serves one backend; the backends of a single test
case run sequentially for timing fidelity.
"""

from __future__ import annotations

import json
import math
import os
import select
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from tracefuzz.core import (
    BackendId,
    Dtype,
    TestCase,
    WireFormatError,
    value_to_wire,
)

_DTYPE_BY_NAME = {d.value: d for d in Dtype}


class ExecutorUnavailable(RuntimeError):
    """The executor for a requested backend cannot be started or is missing."""


class ReplayFormatError(ValueError):
    """A replay file does not hold a valid serialized test case."""


# ---------------------------------------------------------------------------
# Output digests
# ---------------------------------------------------------------------------


# Strict JSON has no NaN/Infinity literals, so non-finite digest floats
# travel as these strings; executors in any language can emit them.
_NONFINITE_TO_WIRE = {float("inf"): "Infinity", float("-inf"): "-Infinity"}
_NONFINITE_FROM_WIRE = {"NaN", "Infinity", "-Infinity"}


def _float_to_wire(x: float) -> float | str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return _NONFINITE_TO_WIRE[x]
    return x


def _float_from_wire(x: Any) -> float:
    if isinstance(x, str):
        if x not in _NONFINITE_FROM_WIRE:
            raise WireFormatError(f"bad digest float {x!r}")
        return float(x)
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise WireFormatError(f"bad digest float {x!r}")
    return float(x)


@dataclass(frozen=True)
class OutputDigest:
    """Compact deterministic summary of one API result."""

    shape: tuple[int, ...]
    dtype: Dtype
    all_finite: bool
    sum: float
    abs_sum: float
    sample: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "sample", tuple(self.sample))
        if len(self.sample) > 16:
            raise ValueError("digest sample holds at most 16 elements")

    def to_wire(self) -> dict[str, Any]:
        return {
            "shape": list(self.shape),
            "dtype": self.dtype.value,
            "all_finite": self.all_finite,
            "sum": _float_to_wire(self.sum),
            "abs_sum": _float_to_wire(self.abs_sum),
            "sample": [_float_to_wire(x) for x in self.sample],
        }

    @staticmethod
    def from_wire(obj: Any) -> "OutputDigest":
        if not isinstance(obj, dict):
            raise WireFormatError("digest must be an object")
        try:
            dtype = _DTYPE_BY_NAME[obj["dtype"]]
            return OutputDigest(
                shape=tuple(obj["shape"]),
                dtype=dtype,
                all_finite=bool(obj["all_finite"]),
                sum=_float_from_wire(obj["sum"]),
                abs_sum=_float_from_wire(obj["abs_sum"]),
                sample=tuple(_float_from_wire(x) for x in obj["sample"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, WireFormatError):
                raise
            raise WireFormatError(f"bad digest: {exc}") from exc


@dataclass(frozen=True)
class Outcome:
    """Execution result of one test case on one backend."""

    backend: BackendId
    status: str  # ok | exception | crash | timeout
    exception_class: str | None = None
    exception_message: str | None = None
    exit_code: int | None = None
    output: OutputDigest | None = None
    elapsed_ms: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "elapsed_ms", tuple(self.elapsed_ms))
        if self.status not in ("ok", "exception", "crash", "timeout"):
            raise ValueError(f"unknown status {self.status!r}")
        if (self.output is not None) != (self.status == "ok"):
            raise ValueError("output must be present exactly when status is ok")
        if bool(self.elapsed_ms) != (self.status == "ok"):
            raise ValueError("elapsed_ms must be non-empty exactly when status is ok")

    def to_wire(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"backend": self.backend.to_wire(), "status": self.status}
        if self.status == "exception":
            obj["exception"] = {"class": self.exception_class, "message": self.exception_message}
        if self.status == "crash":
            obj["exit_code"] = self.exit_code
        if self.status == "ok":
            obj["output"] = self.output.to_wire()
            obj["elapsed_ms"] = list(self.elapsed_ms)
        return obj


# ---------------------------------------------------------------------------
# Wire protocol schema checks (shared by harness and adapter tests)
# ---------------------------------------------------------------------------


def check_request(obj: Any) -> list[str]:
    """Schema problems of an executor request; empty list means valid."""
    problems: list[str] = []
    if not isinstance(obj, dict):
        return ["request must be an object"]
    if not isinstance(obj.get("id"), int) or isinstance(obj.get("id"), bool) or obj.get("id", -1) < 0:
        problems.append("id must be a non-negative integer")
    if not isinstance(obj.get("api"), str) or not obj.get("api"):
        problems.append("api must be a non-empty string")
    if not isinstance(obj.get("backend"), str) or not obj.get("backend"):
        problems.append("backend must be a non-empty string")
    reps = obj.get("timing_reps")
    if not isinstance(reps, int) or isinstance(reps, bool) or reps < 1:
        problems.append("timing_reps must be a positive integer")
    args = obj.get("args")
    if not isinstance(args, list):
        problems.append("args must be a list")
    else:
        for i, a in enumerate(args):
            if not isinstance(a, dict) or not isinstance(a.get("name"), str):
                problems.append(f"args[{i}] needs a string name")
                continue
            v = a.get("value")
            if not isinstance(v, dict) or "t" not in v:
                problems.append(f"args[{i}].value must be a tagged value object")
    return problems


def check_response(obj: Any) -> list[str]:
    """Schema problems of an executor response; empty list means valid."""
    problems: list[str] = []
    if not isinstance(obj, dict):
        return ["response must be an object"]
    if not isinstance(obj.get("id"), int) or isinstance(obj.get("id"), bool):
        problems.append("id must be an integer")
    status = obj.get("status")
    if status == "ok":
        out = obj.get("output")
        if not isinstance(out, dict):
            problems.append("ok response needs an output digest")
        else:
            try:
                OutputDigest.from_wire(out)
            except WireFormatError as exc:
                problems.append(str(exc))
        elapsed = obj.get("elapsed_ms")
        if (
            not isinstance(elapsed, list)
            or not elapsed
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in elapsed)
        ):
            problems.append("ok response needs a non-empty numeric elapsed_ms list")
    elif status == "exception":
        exc = obj.get("exception")
        if (
            not isinstance(exc, dict)
            or not isinstance(exc.get("class"), str)
            or not isinstance(exc.get("message"), str)
        ):
            problems.append("exception response needs {'class','message'} strings")
    else:
        problems.append("status must be 'ok' or 'exception' (crash/timeout are harness-synthesized)")
    return problems


# ---------------------------------------------------------------------------
# Executor handles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExecutorSpec:
    backend: BackendId
    argv: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "argv", tuple(self.argv))
        if not self.argv:
            raise ValueError("executor argv must not be empty")


class ExecutorHandle:
    """One long-lived executor child process for one backend."""

    def __init__(self, spec: ExecutorSpec) -> None:
        self.spec = spec
        self._proc: subprocess.Popen | None = None
        self._buf = b""
        self._next_id = 1

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._buf = b""
        try:
            self._proc = subprocess.Popen(
                self.spec.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise ExecutorUnavailable(
                f"cannot start executor for backend {self.spec.backend.name!r}: {exc}"
            ) from exc

    def stop(self) -> None:
        proc = self._proc
        self._proc = None
        self._buf = b""
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=0.5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def _kill_and_restart(self) -> None:
        proc = self._proc
        if proc is not None and proc.poll() is None:
            proc.kill()
            proc.wait()
        self._proc = None
        self.start()

    # -- I/O -----------------------------------------------------------------

    def _read_line(self, deadline: float) -> bytes | None:
        """One protocol line from the executor, or None on deadline."""
        proc = self._proc
        fd = proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                return None
            chunk = os.read(fd, 65536)
            if not chunk:
                return b""  # EOF: process died
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line

    def execute(self, tc: TestCase, timeout_ms: int) -> Outcome:
        """Run one test case on this backend; never raises for target-side
        failures — they become crash/timeout outcomes."""
        if self._proc is None:
            self.start()
        backend = self.spec.backend
        request = {
            "id": self._next_id,
            "api": tc.entry.api,
            "backend": backend.name,
            "args": [{"name": n, "value": value_to_wire(v)} for n, v in tc.entry.args],
            "timing_reps": tc.timing_reps,
        }
        self._next_id += 1
        payload = (json.dumps(request, separators=(",", ":")) + "\n").encode("utf-8")

        proc = self._proc
        deadline = time.monotonic() + timeout_ms / 1000.0
        try:
            proc.stdin.write(payload)
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            code = proc.poll()
            self._kill_and_restart()
            return Outcome(backend=backend, status="crash", exit_code=code if code is not None else -1)

        line = self._read_line(deadline)
        if line is None:
            self._kill_and_restart()
            return Outcome(backend=backend, status="timeout")
        if line == b"":
            code = proc.wait()
            self._kill_and_restart()
            return Outcome(backend=backend, status="crash", exit_code=code)

        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            self._kill_and_restart()
            return Outcome(
                backend=backend,
                status="crash",
                exit_code=-1,
                exception_message="unparsable executor response",
            )
        problems = check_response(obj)
        if problems or obj.get("id") != request["id"]:
            self._kill_and_restart()
            return Outcome(
                backend=backend,
                status="crash",
                exit_code=-1,
                exception_message=f"protocol violation: {problems or 'id mismatch'}",
            )

        if obj["status"] == "exception":
            return Outcome(
                backend=backend,
                status="exception",
                exception_class=obj["exception"]["class"],
                exception_message=obj["exception"]["message"],
            )
        return Outcome(
            backend=backend,
            status="ok",
            output=OutputDigest.from_wire(obj["output"]),
            elapsed_ms=tuple(float(x) for x in obj["elapsed_ms"]),
        )

    def __enter__(self) -> "ExecutorHandle":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


def run_test(
    tc: TestCase,
    executors: Mapping[BackendId, ExecutorHandle],
    timeout_ms: int,
) -> dict[BackendId, Outcome]:
    """Execute one test case on every planned backend, sequentially."""
    missing = [b.name for b in tc.backends if b not in executors]
    if missing:
        raise ExecutorUnavailable(f"no executor registered for backends: {missing}")
    if not tc.backends:
        raise ExecutorUnavailable("test case has an empty backend plan")
    return {b: executors[b].execute(tc, timeout_ms) for b in tc.backends}


def load_testcase(path: str | Path, line: int | None = None) -> TestCase:
    """Parse a serialized test case from a file (optionally a jsonl line)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ReplayFormatError(f"cannot read {path}: {exc}") from exc
    if line is not None:
        lines = text.splitlines()
        if not 1 <= line <= len(lines):
            raise ReplayFormatError(f"{path} has no line {line}")
        text = lines[line - 1]
    try:
        obj = json.loads(text)
        return TestCase.from_wire(obj)
    except (json.JSONDecodeError, WireFormatError) as exc:
        raise ReplayFormatError(f"{path}: {exc}") from exc


def replay(
    tc_file: str | Path,
    executors: Mapping[BackendId, ExecutorHandle],
    timeout_ms: int,
    line: int | None = None,
) -> tuple[TestCase, dict[BackendId, Outcome]]:
    """Re-execute a serialized test case under the same contract as run_test."""
    tc = load_testcase(tc_file, line)
    return tc, run_test(tc, executors, timeout_ms)

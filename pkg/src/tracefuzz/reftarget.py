"""Self-contained multi-backend numeric target with seeded defects.

A deliberately tiny tensor library exposed through the executor wire
protocol so the whole pipeline can be exercised at desk scale.  Three
backends share one process-per-backend model:

  ref    float64 golden semantics
  fast   computes in the requested dtype (inputs and outputs live on the
         dtype's value grid; accumulation stays in float64, as real
         kernels widen accumulators)
  buggy  fast plus whichever seeded defects are enabled

Tensors are materialized from (shape, dtype, seed) with a PCG64 stream,
uniform in [0.5, 1.5) and quantized to the dtype grid, so every backend
sees bit-identical inputs and healthy runs agree exactly.  Values are
kept strictly positive so digest sums never hover near zero.

Seeded defects (campaign-configurable):
  D1  pool1d with stride > 1 adds +1.0 to every output element
  D2  pad1d(mode="reflect") raises an internal non-benign error
  D3  pool1d(window <= 0) silently returns zeros instead of raising
  D4  cast of a float16 input sleeps 50 ms per call
  D5  reduce_sum on float16 raises a NotFoundError

`rt.debug_abort` and `rt.debug_sleep` are harness test hooks: one kills
the executor process, the other blocks past any deadline.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass
from math import prod
from pathlib import Path

import numpy as np

from tracefuzz.core import (
    BoolV,
    Dtype,
    FloatV,
    IntV,
    ListV,
    RawV,
    StrV,
    TensorSpec,
    TupleV,
    Value,
    value_from_wire,
)
from tracefuzz.harness import OutputDigest

BACKENDS = ("ref", "fast", "buggy")
DEFECT_IDS = ("D1", "D2", "D3", "D4", "D5")

# Mutated shapes can request 64^6 elements; anything beyond this budget is
# rejected uniformly on every backend (and filtered as invalid input).
MAX_ELEMENTS = 1 << 18

# Fixed per-call cost floor for `cast`, so the timing oracle has signal
# above its perf_min_ms threshold at desk scale.
CAST_BASELINE_S = 0.005
D4_SLEEP_S = 0.050


class InternalError(Exception):
    """Non-benign internal failure (the D2 defect)."""


class NotFoundError(Exception):
    """Missing-kernel style failure (the D5 defect)."""


@dataclass(frozen=True)
class DefectRegistry:
    """Enabled defect ids; every trigger predicate is deterministic."""

    enabled: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        unknown = set(self.enabled) - set(DEFECT_IDS)
        if unknown:
            raise ValueError(f"unknown defect ids: {sorted(unknown)}")

    @classmethod
    def from_spec(cls, spec: str) -> "DefectRegistry":
        ids = frozenset(p.strip() for p in spec.split(",") if p.strip())
        return cls(ids)

    def on(self, defect_id: str) -> bool:
        return defect_id in self.enabled


@dataclass(frozen=True)
class _Ctx:
    backend: str
    defects: DefectRegistry

    def defect(self, defect_id: str) -> bool:
        return self.backend == "buggy" and self.defects.on(defect_id)


# ---------------------------------------------------------------------------
# Dtype grids and materialization
# ---------------------------------------------------------------------------

_INT_RANGE = {
    Dtype.INT64: (-(2**63), 2**63 - 1),
    Dtype.INT32: (-(2**31), 2**31 - 1),
    Dtype.INT8: (-128, 127),
}


def _bf16_grid(arr64: np.ndarray) -> np.ndarray:
    """Snap to the bfloat16 grid (round-to-nearest-even on the top 16 bits)."""
    a32 = arr64.astype(np.float32)
    u = a32.view(np.uint32)
    rounded = (u + np.uint32(0x7FFF) + ((u >> np.uint32(16)) & np.uint32(1))) & np.uint32(0xFFFF0000)
    return rounded.view(np.float32).astype(np.float64)


def quantize(arr: np.ndarray, dtype: Dtype) -> np.ndarray:
    """Project a float64/complex128 array onto the dtype's value grid.

    The result stays float64 (complex128 for complex64) so later digest
    arithmetic is exact; only the representable values change.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if dtype == Dtype.FLOAT64:
            return np.asarray(arr, dtype=np.float64)
        if dtype == Dtype.FLOAT32:
            return arr.astype(np.float32).astype(np.float64)
        if dtype == Dtype.FLOAT16:
            return arr.astype(np.float16).astype(np.float64)
        if dtype == Dtype.BFLOAT16:
            return _bf16_grid(np.asarray(arr, dtype=np.float64))
        if dtype in _INT_RANGE:
            lo, hi = _INT_RANGE[dtype]
            return np.clip(np.trunc(np.real(arr).astype(np.float64)), lo, hi)
        if dtype == Dtype.BOOL:
            return (np.real(arr) != 0).astype(np.float64)
        if dtype == Dtype.COMPLEX64:
            c = np.asarray(arr, dtype=np.complex128)
            re = c.real.astype(np.float32).astype(np.float64)
            im = c.imag.astype(np.float32).astype(np.float64)
            return re + 1j * im
    raise ValueError(f"unsupported dtype {dtype}")


@dataclass(frozen=True)
class Tensor:
    """Materialized tensor: values on the dtype grid plus the nominal dtype."""

    arr: np.ndarray
    dtype: Dtype

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.arr.shape)


def materialize_tensor(spec: TensorSpec) -> Tensor:
    n = prod(spec.shape)
    if n > MAX_ELEMENTS:
        raise ValueError(
            f"tensor of {n} elements exceeds the executor budget of {MAX_ELEMENTS}"
        )
    gen = np.random.Generator(np.random.PCG64(spec.seed))
    base = 0.5 + gen.random(spec.shape, dtype=np.float64)
    if spec.dtype == Dtype.COMPLEX64:
        imag = 0.5 + gen.random(spec.shape, dtype=np.float64)
        return Tensor(quantize(base + 1j * imag, spec.dtype), spec.dtype)
    if spec.dtype in _INT_RANGE:
        return Tensor(np.floor(1.0 + (base - 0.5) * 7.0), spec.dtype)
    if spec.dtype == Dtype.BOOL:
        return Tensor((base < 1.0).astype(np.float64), spec.dtype)
    return Tensor(quantize(base, spec.dtype), spec.dtype)


def materialize(v: Value):
    if isinstance(v, TensorSpec):
        return materialize_tensor(v)
    if isinstance(v, (IntV, FloatV, BoolV, StrV)):
        return v.v
    if isinstance(v, TupleV):
        return tuple(materialize(x) for x in v.items)
    if isinstance(v, ListV):
        return [materialize(x) for x in v.items]
    if isinstance(v, RawV):
        return v.repr
    raise TypeError(f"cannot materialize {v!r}")


# ---------------------------------------------------------------------------
# Validation helpers (shared by every backend, so exception classes agree)
# ---------------------------------------------------------------------------


def _need_tensor(name: str, v) -> Tensor:
    if not isinstance(v, Tensor):
        raise TypeError(f"{name} must be a tensor, got {type(v).__name__}")
    return v


def _need_int(name: str, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"{name} must be an integer, got {type(v).__name__}")
    return v


def _need_number(name: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"{name} must be a number, got {type(v).__name__}")
    return float(v)


def _need_str(name: str, v) -> str:
    if not isinstance(v, str):
        raise TypeError(f"{name} must be a string, got {type(v).__name__}")
    return v


# ---------------------------------------------------------------------------
# Reference APIs (golden float64 semantics; nominal dtype on outputs)
# ---------------------------------------------------------------------------


def api_add(ctx: _Ctx, a, b) -> tuple[np.ndarray, Dtype]:
    a = _need_tensor("a", a)
    b = _need_tensor("b", b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ValueError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    return a.arr + b.arr, a.dtype


def api_scale(ctx: _Ctx, x, factor) -> tuple[np.ndarray, Dtype]:
    x = _need_tensor("x", x)
    factor = _need_number("factor", factor)
    return x.arr * factor, x.dtype


def api_matmul(ctx: _Ctx, a, b) -> tuple[np.ndarray, Dtype]:
    a = _need_tensor("a", a)
    b = _need_tensor("b", b)
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ValueError("matmul needs two rank-2 tensors")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    if a.dtype != b.dtype:
        raise ValueError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    return a.arr @ b.arr, a.dtype


def api_reduce_sum(ctx: _Ctx, x, axis) -> tuple[np.ndarray, Dtype]:
    x = _need_tensor("x", x)
    if ctx.defect("D5") and x.dtype == Dtype.FLOAT16:
        raise NotFoundError("no kernel registered for reduce_sum[float16]")
    axis = _need_int("axis", axis)
    rank = len(x.shape)
    if rank == 0:
        raise ValueError("cannot reduce a rank-0 tensor")
    if not -rank <= axis < rank:
        raise ValueError(f"axis {axis} out of range for rank {rank}")
    return np.asarray(x.arr.sum(axis=axis)), x.dtype


def api_pool1d(ctx: _Ctx, x, window, stride) -> tuple[np.ndarray, Dtype]:
    x = _need_tensor("x", x)
    window = _need_int("window", window)
    stride = _need_int("stride", stride)
    if window < 1:
        if ctx.defect("D3"):
            # Missing check: accepts the invalid window and fabricates output.
            return np.zeros(1, dtype=x.arr.dtype), x.dtype
        raise ValueError(f"window must be >= 1, got {window}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if len(x.shape) != 1:
        raise ValueError("pool1d needs a rank-1 tensor")
    n = x.shape[0]
    if n < window:
        raise ValueError(f"input of length {n} shorter than window {window}")
    count = (n - window) // stride + 1
    out = np.stack([x.arr[i * stride : i * stride + window].mean() for i in range(count)])
    return out, x.dtype


def api_pad1d(ctx: _Ctx, x, amount, mode) -> tuple[np.ndarray, Dtype]:
    x = _need_tensor("x", x)
    mode = _need_str("mode", mode)
    if mode not in ("zeros", "reflect"):
        raise ValueError(f"mode must be 'zeros' or 'reflect', got {mode!r}")
    if ctx.defect("D2") and mode == "reflect":
        raise InternalError("reflect padding hit an unimplemented internal path")
    if not isinstance(amount, tuple) or len(amount) != 2:
        raise ValueError("amount must be a (left, right) pair")
    left, right = amount
    left = _need_int("amount[0]", left)
    right = _need_int("amount[1]", right)
    if left < 0 or right < 0:
        raise ValueError("pad amounts must be >= 0")
    if len(x.shape) != 1:
        raise ValueError("pad1d needs a rank-1 tensor")
    n = x.shape[0]
    if mode == "zeros":
        return np.pad(x.arr, (left, right), mode="constant"), x.dtype
    if left > n - 1 or right > n - 1:
        raise ValueError("reflect padding amount exceeds input length - 1")
    return np.pad(x.arr, (left, right), mode="reflect"), x.dtype


def api_cast(ctx: _Ctx, x, dtype) -> tuple[np.ndarray, Dtype]:
    x = _need_tensor("x", x)
    dtype = _need_str("dtype", dtype)
    target = next((d for d in Dtype if d.value == dtype), None)
    if target is None:
        raise ValueError(f"unknown dtype {dtype!r}")
    time.sleep(CAST_BASELINE_S)
    if ctx.defect("D4") and x.dtype == Dtype.FLOAT16:
        time.sleep(D4_SLEEP_S)
    return x.arr, target


def api_debug_sleep(ctx: _Ctx, ms) -> tuple[np.ndarray, Dtype]:
    ms = _need_int("ms", ms)
    time.sleep(max(ms, 0) / 1000.0)
    return np.zeros(1), Dtype.FLOAT64


def api_debug_abort(ctx: _Ctx) -> tuple[np.ndarray, Dtype]:
    os._exit(134)


APIS = {
    "rt.add": api_add,
    "rt.scale": api_scale,
    "rt.matmul": api_matmul,
    "rt.reduce_sum": api_reduce_sum,
    "rt.pool1d": api_pool1d,
    "rt.pad1d": api_pad1d,
    "rt.cast": api_cast,
    "rt.debug_sleep": api_debug_sleep,
    "rt.debug_abort": api_debug_abort,
}

PUBLIC_APIS = tuple(name for name in APIS if not name.startswith("rt.debug_"))


def execute_api(ctx: _Ctx, api: str, kwargs: dict) -> tuple[np.ndarray, Dtype]:
    fn = APIS.get(api)
    if fn is None:
        raise AttributeError(f"target has no API named {api!r}")
    out, nominal = fn(ctx, **kwargs)
    out = quantize(np.asarray(out), nominal)
    if api == "rt.pool1d" and ctx.defect("D1"):
        stride = kwargs.get("stride")
        if isinstance(stride, int) and not isinstance(stride, bool) and stride > 1:
            out = out + 1.0  # wrong-computation: off-by-one on every element
    return out, nominal


# ---------------------------------------------------------------------------
# Digests
# ---------------------------------------------------------------------------


def digest(out: np.ndarray, nominal: Dtype) -> OutputDigest:
    flat = np.ravel(out, order="C")
    if np.iscomplexobj(flat):
        flat = np.ascontiguousarray(flat, dtype=np.complex128).view(np.float64)
    else:
        flat = flat.astype(np.float64)
    n = flat.size
    k = min(16, n)
    sample = tuple(float(flat[(i * n) // k]) for i in range(k))
    return OutputDigest(
        shape=tuple(out.shape),
        dtype=nominal,
        all_finite=bool(np.isfinite(flat).all()) if n else True,
        sum=float(flat.sum()),
        abs_sum=float(np.abs(flat).sum()),
        sample=sample,
    )


# ---------------------------------------------------------------------------
# Executor protocol loop
# ---------------------------------------------------------------------------


def handle_request(ctx: _Ctx, obj: dict) -> dict:
    req_id = obj.get("id", -1)
    try:
        api = obj["api"]
        if obj.get("backend") != ctx.backend:
            raise InternalError(
                f"executor serves backend {ctx.backend!r}, got request for {obj.get('backend')!r}"
            )
        kwargs = {a["name"]: materialize(value_from_wire(a["value"])) for a in obj["args"]}
        reps = int(obj.get("timing_reps", 1))
        elapsed: list[float] = []
        out = nominal = None
        for _ in range(max(reps, 1)):
            t0 = time.perf_counter()
            out, nominal = execute_api(ctx, api, kwargs)
            elapsed.append((time.perf_counter() - t0) * 1000.0)
        return {
            "id": req_id,
            "status": "ok",
            "output": digest(out, nominal).to_wire(),
            "elapsed_ms": elapsed,
        }
    except Exception as exc:  # every target-side failure is a protocol response
        return {
            "id": req_id,
            "status": "exception",
            "exception": {"class": type(exc).__name__, "message": str(exc)},
        }


def serve(backend: str, defects: DefectRegistry, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    ctx = _Ctx(backend=backend, defects=defects)
    np.seterr(all="ignore")
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            obj = {"id": -1, "api": "?", "backend": backend, "args": []}
        response = handle_request(ctx, obj)
        stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
        stdout.flush()


def corpus_path() -> Path:
    """Bundled seed corpus in the trace-record format."""
    return Path(__file__).parent / "data" / "seed_corpus.jsonl"


def defects_path() -> Path:
    """Bundled defect-config file listing the default-enabled defect ids."""
    return Path(__file__).parent / "data" / "defects_enabled.txt"


def load_defects_file(path: str | Path) -> DefectRegistry:
    ids = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.append(line)
    return DefectRegistry(frozenset(ids))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tracefuzz.reftarget", description=__doc__)
    parser.add_argument("--backend", required=True, choices=BACKENDS)
    parser.add_argument("--defects", default="", help="comma-separated defect ids (D1..D5)")
    parser.add_argument("--defects-file", default=None, help="file with one defect id per line")
    args = parser.parse_args(argv)
    if args.defects_file:
        registry = load_defects_file(args.defects_file)
    else:
        registry = DefectRegistry.from_spec(args.defects)
    serve(args.backend, registry)
    return 0


if __name__ == "__main__":
    sys.exit(main())

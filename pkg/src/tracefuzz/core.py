"""Shared domain model: dtypes, runtime type descriptors, values, entries.

Everything here is immutable after construction and safe to share across
threads; all operations are pure functions.  Tensors are carried as
(shape, dtype, seed) specs and only materialized inside executors, which
keeps the wire protocol small and campaigns bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable


class WireFormatError(ValueError):
    """A wire-form object does not match the documented schema."""


# ---------------------------------------------------------------------------
# Dtypes and the precision order
# ---------------------------------------------------------------------------


class Dtype(str, Enum):
    FLOAT64 = "float64"
    FLOAT32 = "float32"
    FLOAT16 = "float16"
    BFLOAT16 = "bfloat16"
    INT64 = "int64"
    INT32 = "int32"
    INT8 = "int8"
    BOOL = "bool"
    COMPLEX64 = "complex64"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


DTYPES: tuple[Dtype, ...] = tuple(Dtype)

# Precision levels exist only within the float family; float16 and bfloat16
# share a level and are therefore mutually incomparable.
_FLOAT_PRECISION = {
    Dtype.FLOAT64: 3,
    Dtype.FLOAT32: 2,
    Dtype.FLOAT16: 1,
    Dtype.BFLOAT16: 1,
}


def precision_lt(a: Dtype, b: Dtype) -> bool:
    """True when dtype `a` carries strictly less precision than `b`.

    A strict partial order: defined only within the float family, and
    float16/bfloat16 are incomparable with each other.
    """
    ra = _FLOAT_PRECISION.get(a)
    rb = _FLOAT_PRECISION.get(b)
    return ra is not None and rb is not None and ra < rb


def precision_comparable(a: Dtype, b: Dtype) -> bool:
    return precision_lt(a, b) or precision_lt(b, a)


# ---------------------------------------------------------------------------
# FuzzType: fine-grained runtime type descriptors
# ---------------------------------------------------------------------------


class FuzzType:
    """Base of the runtime type descriptor union."""

    __slots__ = ()


@dataclass(frozen=True)
class TensorType(FuzzType):
    rank: int
    dtype: Dtype

    def __post_init__(self) -> None:
        if self.rank < 0:
            raise ValueError(f"tensor rank must be >= 0, got {self.rank}")


@dataclass(frozen=True)
class IntType(FuzzType):
    pass


@dataclass(frozen=True)
class FloatType(FuzzType):
    pass


@dataclass(frozen=True)
class BoolType(FuzzType):
    pass


@dataclass(frozen=True)
class StrType(FuzzType):
    pass


@dataclass(frozen=True)
class TupleType(FuzzType):
    elems: tuple[FuzzType, ...]


@dataclass(frozen=True)
class ListType(FuzzType):
    elems: tuple[FuzzType, ...]


@dataclass(frozen=True)
class OpaqueType(FuzzType):
    """Terminal descriptor for values the engine never mutates."""


INT = IntType()
FLOAT = FloatType()
BOOL = BoolType()
STR = StrType()
OPAQUE = OpaqueType()

PRIMITIVE_TYPES: tuple[FuzzType, ...] = (INT, BOOL, FLOAT, STR)


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


class Value:
    """Base of the serializable argument value union."""

    __slots__ = ()


def _as_tuple(x: Iterable) -> tuple:
    return x if isinstance(x, tuple) else tuple(x)


@dataclass(frozen=True)
class TensorSpec(Value):
    shape: tuple[int, ...]
    dtype: Dtype
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", _as_tuple(self.shape))
        for d in self.shape:
            if not isinstance(d, int) or isinstance(d, bool) or d <= 0:
                raise ValueError(f"tensor dims must be positive ints, got {self.shape}")
        if self.seed < 0:
            raise ValueError("tensor seed must be non-negative")


@dataclass(frozen=True)
class IntV(Value):
    v: int


@dataclass(frozen=True)
class FloatV(Value):
    v: float


@dataclass(frozen=True)
class BoolV(Value):
    v: bool


@dataclass(frozen=True)
class StrV(Value):
    v: str


@dataclass(frozen=True)
class TupleV(Value):
    items: tuple[Value, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", _as_tuple(self.items))


@dataclass(frozen=True)
class ListV(Value):
    items: tuple[Value, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", _as_tuple(self.items))


@dataclass(frozen=True)
class RawV(Value):
    """Unmodeled value carried verbatim; never mutated."""

    repr: str


def infer_fuzz_type(v: Value) -> FuzzType:
    """Total, deterministic type inference over values."""
    if isinstance(v, TensorSpec):
        return TensorType(len(v.shape), v.dtype)
    if isinstance(v, IntV):
        return INT
    if isinstance(v, FloatV):
        return FLOAT
    if isinstance(v, BoolV):
        return BOOL
    if isinstance(v, StrV):
        return STR
    if isinstance(v, TupleV):
        return TupleType(tuple(infer_fuzz_type(x) for x in v.items))
    if isinstance(v, ListV):
        return ListType(tuple(infer_fuzz_type(x) for x in v.items))
    if isinstance(v, RawV):
        return OPAQUE
    raise TypeError(f"not a Value: {v!r}")


# ---------------------------------------------------------------------------
# Value wire form
# ---------------------------------------------------------------------------

_DTYPE_BY_NAME = {d.value: d for d in Dtype}


def value_to_wire(v: Value) -> dict[str, Any]:
    """One tagged JSON-ready object per value; tags and fields are normative."""
    if isinstance(v, TensorSpec):
        return {"t": "tensor", "shape": list(v.shape), "dtype": v.dtype.value, "seed": v.seed}
    if isinstance(v, IntV):
        return {"t": "int", "v": v.v}
    if isinstance(v, FloatV):
        return {"t": "float", "v": v.v}
    if isinstance(v, BoolV):
        return {"t": "bool", "v": v.v}
    if isinstance(v, StrV):
        return {"t": "str", "v": v.v}
    if isinstance(v, TupleV):
        return {"t": "tuple", "items": [value_to_wire(x) for x in v.items]}
    if isinstance(v, ListV):
        return {"t": "list", "items": [value_to_wire(x) for x in v.items]}
    if isinstance(v, RawV):
        return {"t": "raw", "repr": v.repr}
    raise TypeError(f"not a Value: {v!r}")


def value_from_wire(obj: Any) -> Value:
    if not isinstance(obj, dict):
        raise WireFormatError(f"value must be an object, got {type(obj).__name__}")
    tag = obj.get("t")
    try:
        if tag == "tensor":
            dtype = _DTYPE_BY_NAME.get(obj["dtype"])
            if dtype is None:
                raise WireFormatError(f"unknown dtype {obj['dtype']!r}")
            shape = obj["shape"]
            seed = obj["seed"]
            if not isinstance(shape, list) or not isinstance(seed, int) or isinstance(seed, bool):
                raise WireFormatError("bad tensor fields")
            return TensorSpec(tuple(shape), dtype, seed)
        if tag == "int":
            v = obj["v"]
            if not isinstance(v, int) or isinstance(v, bool):
                raise WireFormatError(f"int value must be an integer, got {v!r}")
            return IntV(v)
        if tag == "float":
            v = obj["v"]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise WireFormatError(f"float value must be numeric, got {v!r}")
            return FloatV(float(v))
        if tag == "bool":
            v = obj["v"]
            if not isinstance(v, bool):
                raise WireFormatError(f"bool value must be true/false, got {v!r}")
            return BoolV(v)
        if tag == "str":
            v = obj["v"]
            if not isinstance(v, str):
                raise WireFormatError(f"str value must be a string, got {v!r}")
            return StrV(v)
        if tag == "tuple":
            return TupleV(tuple(value_from_wire(x) for x in obj["items"]))
        if tag == "list":
            return ListV(tuple(value_from_wire(x) for x in obj["items"]))
        if tag == "raw":
            v = obj["repr"]
            if not isinstance(v, str):
                raise WireFormatError("raw repr must be a string")
            return RawV(v)
    except KeyError as exc:
        raise WireFormatError(f"missing field {exc} in {tag!r} value") from exc
    except ValueError as exc:
        if isinstance(exc, WireFormatError):
            raise
        raise WireFormatError(str(exc)) from exc
    raise WireFormatError(f"unknown value tag {tag!r}")


# ---------------------------------------------------------------------------
# Entries and test cases
# ---------------------------------------------------------------------------


class Source(str, Enum):
    DOC = "doc"
    TEST = "test"
    MODEL = "model"
    MUTANT = "mutant"


_SOURCE_BY_NAME = {s.value: s for s in Source}
TRACE_SOURCES = (Source.DOC, Source.TEST, Source.MODEL)


@dataclass(frozen=True)
class InvocationEntry:
    """One recorded or mutated argument list for one API."""

    api: str
    args: tuple[tuple[str, Value], ...]
    source: Source

    def __post_init__(self) -> None:
        object.__setattr__(self, "args", _as_tuple(self.args))
        names = [n for n, _ in self.args]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate argument names in entry for {self.api}: {names}")

    def arg_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.args)

    def arg_value(self, name: str) -> Value:
        for n, v in self.args:
            if n == name:
                return v
        raise KeyError(name)

    def to_wire(self) -> dict[str, Any]:
        return {
            "api": self.api,
            "source": self.source.value,
            "args": [{"name": n, "value": value_to_wire(v)} for n, v in self.args],
        }

    @staticmethod
    def from_wire(obj: Any, *, trace_only: bool = False) -> "InvocationEntry":
        if not isinstance(obj, dict):
            raise WireFormatError("entry must be an object")
        api = obj.get("api")
        if not isinstance(api, str) or not api:
            raise WireFormatError("entry is missing a non-empty 'api' string")
        source = _SOURCE_BY_NAME.get(obj.get("source"))
        if source is None:
            raise WireFormatError(f"unknown source {obj.get('source')!r}")
        if trace_only and source not in TRACE_SOURCES:
            raise WireFormatError(f"trace records must have source doc|test|model, got {source.value!r}")
        raw_args = obj.get("args")
        if not isinstance(raw_args, list):
            raise WireFormatError("entry 'args' must be a list")
        args = []
        for a in raw_args:
            if not isinstance(a, dict) or not isinstance(a.get("name"), str):
                raise WireFormatError("each arg needs a string 'name' and a 'value'")
            args.append((a["name"], value_from_wire(a.get("value"))))
        try:
            return InvocationEntry(api=api, args=tuple(args), source=source)
        except ValueError as exc:
            raise WireFormatError(str(exc)) from exc


def canonical_signature(api_name: str, arg_names: Iterable[str]) -> str:
    """Deterministic `api(n1,n2,...)` string used for API similarity."""
    return f"{api_name}({','.join(arg_names)})"


def _fingerprint_payload(v: Value) -> Any:
    # Tensor seeds are deliberately excluded: entries that differ only in
    # tensor contents are duplicates.
    if isinstance(v, TensorSpec):
        return ["tensor", list(v.shape), v.dtype.value]
    if isinstance(v, (IntV, FloatV, BoolV, StrV)):
        return [infer_fuzz_type(v).__class__.__name__, v.v]
    if isinstance(v, TupleV):
        return ["tuple", [_fingerprint_payload(x) for x in v.items]]
    if isinstance(v, ListV):
        return ["list", [_fingerprint_payload(x) for x in v.items]]
    if isinstance(v, RawV):
        return ["raw", v.repr]
    raise TypeError(f"not a Value: {v!r}")


def entry_fingerprint(e: InvocationEntry) -> str:
    """128-bit hex digest over api, arg names/order, values modulo tensor seeds."""
    payload = [e.api, [[n, _fingerprint_payload(v)] for n, v in e.args]]
    data = json.dumps(payload, separators=(",", ":"), sort_keys=False)
    return hashlib.blake2b(data.encode("utf-8"), digest_size=16).hexdigest()


@dataclass(frozen=True)
class BackendId:
    """A named execution mode of the target plus its host descriptor."""

    name: str
    machine: str = "local"

    def to_wire(self) -> dict[str, str]:
        return {"name": self.name, "machine": self.machine}

    @staticmethod
    def from_wire(obj: Any) -> "BackendId":
        if not isinstance(obj, dict) or not isinstance(obj.get("name"), str):
            raise WireFormatError("backend must be {'name':..., 'machine':...}")
        return BackendId(obj["name"], obj.get("machine", "local"))


@dataclass(frozen=True)
class TestCase:
    """An entry plus RNG provenance and backend plan, ready for execution."""

    __test__ = False  # not a pytest class despite the name

    entry: InvocationEntry
    seed: int
    lineage: tuple[str, ...] = ()
    backends: tuple[BackendId, ...] = ()
    timing_reps: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "lineage", _as_tuple(self.lineage))
        object.__setattr__(self, "backends", _as_tuple(self.backends))
        if self.timing_reps < 1:
            raise ValueError("timing_reps must be positive")
        is_mutant = self.entry.source == Source.MUTANT
        if is_mutant != bool(self.lineage):
            raise ValueError("lineage must be non-empty exactly for mutants")

    def to_wire(self) -> dict[str, Any]:
        obj = self.entry.to_wire()
        obj["seed"] = self.seed
        obj["lineage"] = list(self.lineage)
        obj["backends"] = [b.to_wire() for b in self.backends]
        obj["timing_reps"] = self.timing_reps
        return obj

    @staticmethod
    def from_wire(obj: Any) -> "TestCase":
        entry = InvocationEntry.from_wire(obj)
        seed = obj.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise WireFormatError("testcase 'seed' must be an integer")
        lineage = obj.get("lineage", [])
        backends = obj.get("backends", [])
        reps = obj.get("timing_reps", 1)
        if not isinstance(lineage, list) or not isinstance(backends, list):
            raise WireFormatError("testcase lineage/backends must be lists")
        if not isinstance(reps, int) or isinstance(reps, bool):
            raise WireFormatError("testcase 'timing_reps' must be an integer")
        try:
            return TestCase(
                entry=entry,
                seed=seed,
                lineage=tuple(lineage),
                backends=tuple(BackendId.from_wire(b) for b in backends),
                timing_reps=reps,
            )
        except ValueError as exc:
            raise WireFormatError(str(exc)) from exc


def dumps_compact(obj: Any) -> str:
    """Canonical single-line JSON used for all campaign artifacts."""
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)

"""Type-aware mutation engine.

One mutant is derived from a sampled seed entry by rewriting between 1
and argNum argument slots (indices drawn uniformly with replacement).
Each rewritten slot optionally gets a type mutation first, then a new
value from either the random rules or the database rules; the database
path weights candidate APIs by softmax over signature similarity and
falls back to the random rules when the query is empty.

Everything is pure given (store snapshot, rng): per-API fuzz loops can
run in parallel, each owning an RngStream derived from the campaign
seed and the API name.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, replace
from math import exp
from typing import Sequence

from tracefuzz.core import (
    BOOL,
    DTYPES,
    FLOAT,
    INT,
    OPAQUE,
    PRIMITIVE_TYPES,
    STR,
    BoolType,
    BoolV,
    FloatV,
    FuzzType,
    IntV,
    InvocationEntry,
    ListType,
    ListV,
    RawV,
    Source,
    StrV,
    TensorSpec,
    TensorType,
    TestCase,
    TupleType,
    TupleV,
    Value,
    infer_fuzz_type,
)
from tracefuzz.rng import RngStream
from tracefuzz.store import ValueStore

# Stable rule identifiers used in lineage and reports.
RULE_TENSOR_DIM = "tensor_dim"
RULE_TENSOR_DTYPE = "tensor_dtype"
RULE_PRIM_TYPE = "prim_type"
RULE_TUPLE_TYPE = "tuple_type"
RULE_LIST_TYPE = "list_type"
RULE_RAND_TENSOR_SHAPE = "rand_tensor_shape"
RULE_RAND_TENSOR_VALUE = "rand_tensor_value"
RULE_RAND_PRIM = "rand_prim"
RULE_RAND_TUPLE = "rand_tuple"
RULE_RAND_LIST = "rand_list"
RULE_DB_TENSOR_SHAPE = "db_tensor_shape"
RULE_DB_TENSOR_VALUE = "db_tensor_value"
RULE_DB_PRIM = "db_prim"
RULE_DB_TUPLE = "db_tuple"
RULE_DB_LIST = "db_list"

TYPE_RULES = (RULE_TENSOR_DIM, RULE_TENSOR_DTYPE, RULE_PRIM_TYPE, RULE_TUPLE_TYPE, RULE_LIST_TYPE)
RAND_VALUE_RULES = (
    RULE_RAND_TENSOR_SHAPE,
    RULE_RAND_TENSOR_VALUE,
    RULE_RAND_PRIM,
    RULE_RAND_TUPLE,
    RULE_RAND_LIST,
)
DB_VALUE_RULES = (
    RULE_DB_TENSOR_SHAPE,
    RULE_DB_TENSOR_VALUE,
    RULE_DB_PRIM,
    RULE_DB_TUPLE,
    RULE_DB_LIST,
)

_OPAQUE_RETRIES = 8


class NotMutable(ValueError):
    """Raised for opaque inputs and entries with no mutable slot."""


@dataclass(frozen=True)
class MutationConfig:
    p_type_mutation: float = 0.5
    p_rand_over_db: float = 0.5
    max_rank: int = 6
    max_dim: int = 64
    max_int: int = 65536
    max_str_len: int = 16
    per_api_mutants: int = 1000

    def __post_init__(self) -> None:
        for name in ("p_type_mutation", "p_rand_over_db"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        for name in ("max_rank", "max_dim", "max_int", "max_str_len", "per_api_mutants"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# Similarity and softmax
# ---------------------------------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance, two-row DP."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(sig_a: str, sig_b: str) -> float:
    """1 - editdist/maxlen; 1.0 for two empty strings."""
    longest = max(len(sig_a), len(sig_b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(sig_a, sig_b) / longest


def softmax_probs(sims: Sequence[float]) -> list[float]:
    """p_i = e^{s_i} / sum_j e^{s_j}."""
    if not sims:
        raise ValueError("softmax over an empty similarity list")
    weights = [exp(s) for s in sims]
    total = sum(weights)
    return [w / total for w in weights]


# ---------------------------------------------------------------------------
# Type mutation (tensor dim / tensor dtype / primitive / tuple / list)
# ---------------------------------------------------------------------------


def tensor_dim_rule(t: TensorType, rng: RngStream, cfg: MutationConfig) -> TensorType:
    """New rank in [0, max_rank], different from the old one; dtype kept."""
    if t.rank > cfg.max_rank:
        n2 = rng.randint(0, cfg.max_rank)
    else:
        n2 = rng.randint(0, cfg.max_rank - 1)
        if n2 >= t.rank:
            n2 += 1  # skip the old rank, keeping the draw uniform
    return TensorType(n2, t.dtype)


def tensor_dtype_rule(t: TensorType, rng: RngStream) -> TensorType:
    """New element dtype, rank kept; complex dtypes participate."""
    pool = [d for d in DTYPES if d != t.dtype]
    return TensorType(t.rank, rng.choice(pool))


def primitive_type_rule(t: FuzzType, rng: RngStream) -> FuzzType:
    """Different member of {Int, Bool, Float, Str}."""
    pool = [p for p in PRIMITIVE_TYPES if p != t]
    return rng.choice(pool)


def type_mutate(t: FuzzType, rng: RngStream, cfg: MutationConfig) -> tuple[FuzzType, str]:
    """Apply one applicable type-mutation row; returns (new type, rule id).

    Rule choice is uniform among the rows applicable to the input type.
    Opaque elements nested in collections pass through unchanged.
    """
    if isinstance(t, TensorType):
        if rng.coin():
            return tensor_dim_rule(t, rng, cfg), RULE_TENSOR_DIM
        return tensor_dtype_rule(t, rng), RULE_TENSOR_DTYPE
    if t in PRIMITIVE_TYPES:
        return primitive_type_rule(t, rng), RULE_PRIM_TYPE
    if isinstance(t, TupleType):
        elems = tuple(_type_mutate_elem(e, rng, cfg) for e in t.elems)
        return TupleType(elems), RULE_TUPLE_TYPE
    if isinstance(t, ListType):
        elems = tuple(_type_mutate_elem(e, rng, cfg) for e in t.elems)
        return ListType(elems), RULE_LIST_TYPE
    raise NotMutable(f"type {t!r} cannot be mutated")


def _type_mutate_elem(t: FuzzType, rng: RngStream, cfg: MutationConfig) -> FuzzType:
    if t == OPAQUE:
        return t
    return type_mutate(t, rng, cfg)[0]


# ---------------------------------------------------------------------------
# Random value rules
# ---------------------------------------------------------------------------

_LOWERCASE = string.ascii_lowercase


def rand_tensor_shape(t: TensorType, rng: RngStream, cfg: MutationConfig) -> TensorSpec:
    """Fresh shape with each dim uniform in [1, max_dim]; dtype kept."""
    dims = tuple(rng.randint(1, cfg.max_dim) for _ in range(t.rank))
    return TensorSpec(dims, t.dtype, rng.u64())


def rand_tensor_value(t: TensorType, old: TensorSpec, rng: RngStream) -> TensorSpec:
    """Keep shape, redraw the initialization seed."""
    seed = rng.u64()
    while seed == old.seed:
        seed = rng.u64()
    return TensorSpec(old.shape, t.dtype, seed)


def rand_primitive(t: FuzzType, rng: RngStream, cfg: MutationConfig) -> Value:
    if t == INT:
        return IntV(rng.randint(-cfg.max_int, cfg.max_int))
    if t == FLOAT:
        return FloatV(rng.normal() * 10.0)
    if t == BOOL:
        return BoolV(rng.coin())
    if t == STR:
        length = rng.randint(0, cfg.max_str_len)
        return StrV("".join(rng.choice(_LOWERCASE) for _ in range(length)))
    raise NotMutable(f"not a primitive type: {t!r}")


def value_rule_rand(
    t: FuzzType, old: Value | None, rng: RngStream, cfg: MutationConfig
) -> tuple[Value, str]:
    """Draw a fresh value of type t; returns (value, rule id).

    For tensors the shape-keeping value rule is only applicable when the
    old value is a tensor of the same rank (a dim mutation invalidates
    the old shape); otherwise the random-shape rule is used.
    """
    if isinstance(t, TensorType):
        keep_shape_ok = isinstance(old, TensorSpec) and len(old.shape) == t.rank
        if keep_shape_ok and rng.coin():
            return rand_tensor_value(t, old, rng), RULE_RAND_TENSOR_VALUE
        return rand_tensor_shape(t, rng, cfg), RULE_RAND_TENSOR_SHAPE
    if t in PRIMITIVE_TYPES:
        return rand_primitive(t, rng, cfg), RULE_RAND_PRIM
    if isinstance(t, TupleType):
        olds = old.items if isinstance(old, TupleV) and len(old.items) == len(t.elems) else None
        items = tuple(
            _value_mutate_elem(et, olds[i] if olds else None, rng, cfg)
            for i, et in enumerate(t.elems)
        )
        return TupleV(items), RULE_RAND_TUPLE
    if isinstance(t, ListType):
        olds = old.items if isinstance(old, ListV) and len(old.items) == len(t.elems) else None
        items = tuple(
            _value_mutate_elem(et, olds[i] if olds else None, rng, cfg)
            for i, et in enumerate(t.elems)
        )
        return ListV(items), RULE_RAND_LIST
    raise NotMutable(f"type {t!r} cannot be mutated")


def _value_mutate_elem(
    t: FuzzType, old: Value | None, rng: RngStream, cfg: MutationConfig
) -> Value:
    if t == OPAQUE:
        # Opaque is terminal: carried verbatim, or an empty placeholder
        # when there is nothing to carry.
        return old if isinstance(old, RawV) else RawV("")
    return value_rule_rand(t, old, rng, cfg)[0]


# ---------------------------------------------------------------------------
# Database value rules
# ---------------------------------------------------------------------------


def value_rule_db(
    api: str,
    t: FuzzType,
    arg_name: str,
    store: ValueStore,
    rng: RngStream,
) -> tuple[Value, str] | None:
    """Transfer a recorded value from a similar API; None when no candidate.

    Candidate APIs sharing (arg_name, t) are weighted by softmax over the
    signature similarity to the API under test, then one of the selected
    API's recorded values is drawn uniformly.
    """
    if t == OPAQUE:
        raise NotMutable("opaque slots have no database rule")
    if isinstance(t, BoolType):
        # The database strategy covers int|float|str primitives only.
        return None
    candidates = store.query_arg_candidates(t, arg_name, exclude_api=api)
    if not candidates:
        return None

    own_sig = store.signature(api)
    sims = [similarity(store.signature(cand_api), own_sig) for cand_api, _ in candidates]
    probs = softmax_probs(sims)
    pick = rng.random()
    acc = 0.0
    chosen = len(candidates) - 1
    for i, p in enumerate(probs):
        acc += p
        if pick < acc:
            chosen = i
            break
    _, values = candidates[chosen]
    value = values[rng.randint(0, len(values) - 1)]

    if isinstance(t, TensorType):
        assert isinstance(value, TensorSpec)
        if rng.coin():
            # Adopt the recorded shape, fresh contents.
            return TensorSpec(value.shape, t.dtype, rng.u64()), RULE_DB_TENSOR_SHAPE
        # Adopt the recorded tensor wholesale (its seed reproduces the values).
        return TensorSpec(value.shape, t.dtype, value.seed), RULE_DB_TENSOR_VALUE
    if isinstance(t, TupleType):
        return value, RULE_DB_TUPLE
    if isinstance(t, ListType):
        return value, RULE_DB_LIST
    return value, RULE_DB_PRIM


# ---------------------------------------------------------------------------
# Algorithm: one mutant from a sampled seed entry
# ---------------------------------------------------------------------------


def mutate(
    api: str,
    store: ValueStore,
    cfg: MutationConfig,
    rng: RngStream,
) -> TestCase:
    """Sample a seed entry for `api` and rewrite 1..argNum argument slots.

    Deterministic given (store snapshot, rng state).  Raises NoSeedEntries
    for unknown APIs and NotMutable for entries with no mutable slot.
    """
    entry = store.sample_entry(api, rng)
    case_seed = rng.u64()
    args = list(entry.args)
    mutable = [i for i, (_, v) in enumerate(args) if infer_fuzz_type(v) != OPAQUE]
    if not mutable:
        raise NotMutable(f"entry for {api!r} has no mutable argument slot")

    arg_num = len(args)
    num_mutation = rng.randint(1, arg_num)
    lineage: list[str] = []
    for _ in range(num_mutation):
        idx = -1
        for _attempt in range(_OPAQUE_RETRIES):
            cand = rng.randint(0, arg_num - 1)
            if infer_fuzz_type(args[cand][1]) != OPAQUE:
                idx = cand
                break
        if idx < 0:
            continue  # slot skipped after bounded retries
        _apply_slot_mutation(api, args, idx, store, cfg, rng, lineage)

    if not lineage:
        # Degenerate all-skipped draw: force one mutation on a mutable slot
        # so the mutant invariant (non-empty lineage) holds.
        idx = mutable[rng.randint(0, len(mutable) - 1)]
        _apply_slot_mutation(api, args, idx, store, cfg, rng, lineage)

    mutant = InvocationEntry(api=entry.api, args=tuple(args), source=Source.MUTANT)
    return TestCase(entry=mutant, seed=case_seed, lineage=tuple(lineage))


def _apply_slot_mutation(
    api: str,
    args: list[tuple[str, Value]],
    idx: int,
    store: ValueStore,
    cfg: MutationConfig,
    rng: RngStream,
    lineage: list[str],
) -> None:
    name, old = args[idx]
    arg_type = infer_fuzz_type(old)
    if rng.random() < cfg.p_type_mutation:
        arg_type, type_rule = type_mutate(arg_type, rng, cfg)
        lineage.append(type_rule)
    if rng.random() < cfg.p_rand_over_db:
        value, rule = value_rule_rand(arg_type, old, rng, cfg)
    else:
        picked = value_rule_db(api, arg_type, name, store, rng)
        if picked is None:
            value, rule = value_rule_rand(arg_type, old, rng, cfg)
        else:
            value, rule = picked
    lineage.append(rule)
    args[idx] = (name, value)


def plan_backends(tc: TestCase, backends: Sequence, timing_reps: int = 1) -> TestCase:
    """Attach the backend plan and timing repetitions to a mutant."""
    return replace(tc, backends=tuple(backends), timing_reps=timing_reps)

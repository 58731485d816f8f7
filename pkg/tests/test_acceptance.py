"""Acceptance gate: one test per campaign-level criterion.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
pass lines and timings.  Every tolerance and runtime bound is asserted,
not just printed.  Secondary (adapter) criteria live in
tests/test_secondary.py.
"""

from __future__ import annotations

import json
import math
import sys
import time
from contextlib import contextmanager

from tracefuzz.campaign import load_summary
from tracefuzz.cli import main
from tracefuzz.core import (
    BOOL,
    FLOAT,
    INT,
    STR,
    BackendId,
    Dtype,
    FloatV,
    IntV,
    InvocationEntry,
    ListType,
    ListV,
    Source,
    StrV,
    TensorSpec,
    TensorType,
    TestCase,
    TupleType,
    TupleV,
    infer_fuzz_type,
)
from tracefuzz.harness import ExecutorHandle, ExecutorSpec, Outcome, OutputDigest, run_test
from tracefuzz.mutation import (
    MutationConfig,
    mutate,
    rand_primitive,
    rand_tensor_shape,
    rand_tensor_value,
    similarity,
    softmax_probs,
    tensor_dim_rule,
    tensor_dtype_rule,
    primitive_type_rule,
    type_mutate,
    value_rule_db,
    value_rule_rand,
)
from tracefuzz.oracles import (
    OracleConfig,
    VerdictKind,
    crash_verdict,
    differential_verdict,
    performance_verdict,
)
from tracefuzz.reftarget import corpus_path
from tracefuzz.rng import RngStream
from tracefuzz.store import ValueStore

CFG = MutationConfig()
N_RULE_APPLICATIONS = 10_000


@contextmanager
def criterion(name: str, limit_s: float):
    t0 = time.monotonic()
    yield
    elapsed = time.monotonic() - t0
    print(f"[PASS] {name} ({elapsed:.2f}s, limit {limit_s:.0f}s)", flush=True)
    assert elapsed < limit_s, f"{name} exceeded its runtime budget: {elapsed:.1f}s"


def _dp_edit_distance(a: str, b: str) -> int:
    # Independent full-matrix oracle, deliberately not the engine's version.
    m, n = len(a), len(b)
    d = [[i + j if i * j == 0 else 0 for j in range(n + 1)] for i in range(m + 1)]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[m][n]


# ---------------------------------------------------------------------------
# Criterion 1: formula fidelity
# ---------------------------------------------------------------------------


def test_formula_fidelity():
    with criterion("formula fidelity (similarity + softmax)", 5.0):
        assert similarity("torch.nn.MaxPool2d(kernel_size)", "torch.nn.MaxPool2d(kernel_size)") == 1.0
        oracle = 1.0 - _dp_edit_distance("conv2d", "conv3d") / 6
        assert abs(similarity("conv2d", "conv3d") - oracle) < 1e-12
        assert abs(similarity("conv2d", "conv3d") - 0.8333) < 1e-4

        probs = softmax_probs([0.8, 0.6])
        assert abs(probs[0] - 0.5498) < 1e-4
        assert abs(probs[1] - 0.4502) < 1e-4

        rng = RngStream(101)
        for _ in range(1000):
            sims = [rng.random() for _ in range(rng.randint(1, 10))]
            probs = softmax_probs(sims)
            assert abs(sum(probs) - 1.0) < 1e-9
            assert all(p > 0 for p in probs)


# ---------------------------------------------------------------------------
# Criterion 2: type/value mutation rule soundness, 10k applications per rule
# ---------------------------------------------------------------------------


def _random_tensor_type(rng: RngStream) -> TensorType:
    return TensorType(rng.randint(0, 8), rng.choice(list(Dtype)))


def test_rule_soundness_10k_per_rule():
    with criterion("Table-1/Table-2 rule soundness (10k x 15 rules)", 30.0):
        rng = RngStream(202)

        for _ in range(N_RULE_APPLICATIONS):  # tensor_dim
            t = _random_tensor_type(rng)
            t2 = tensor_dim_rule(t, rng, CFG)
            assert t2.rank != t.rank and 0 <= t2.rank <= CFG.max_rank and t2.dtype == t.dtype

        for _ in range(N_RULE_APPLICATIONS):  # tensor_dtype
            t = _random_tensor_type(rng)
            t2 = tensor_dtype_rule(t, rng)
            assert t2.dtype != t.dtype and t2.rank == t.rank

        for _ in range(N_RULE_APPLICATIONS):  # prim_type
            t = rng.choice([INT, FLOAT, BOOL, STR])
            t2 = primitive_type_rule(t, rng)
            assert t2 != t and t2 in (INT, FLOAT, BOOL, STR)

        for _ in range(N_RULE_APPLICATIONS):  # tuple_type and list_type
            elems = tuple(
                rng.choice([INT, FLOAT, BOOL, STR, _random_tensor_type(rng)])
                for _ in range(rng.randint(0, 4))
            )
            for built, ctor in ((TupleType(elems), TupleType), (ListType(elems), ListType)):
                t2, _ = type_mutate(built, rng, CFG)
                assert isinstance(t2, ctor) and len(t2.elems) == len(elems)
                for old_e, new_e in zip(elems, t2.elems):
                    if isinstance(old_e, TensorType):
                        assert (new_e.rank != old_e.rank) ^ (new_e.dtype != old_e.dtype)
                    else:
                        assert new_e != old_e

        for _ in range(N_RULE_APPLICATIONS):  # rand_tensor_shape
            t = _random_tensor_type(rng)
            v = rand_tensor_shape(t, rng, CFG)
            assert len(v.shape) == t.rank
            assert all(1 <= d <= CFG.max_dim for d in v.shape)
            assert v.dtype == t.dtype

        for _ in range(N_RULE_APPLICATIONS):  # rand_tensor_value
            t = _random_tensor_type(rng)
            old = rand_tensor_shape(t, rng, CFG)
            v = rand_tensor_value(t, old, rng)
            assert v.shape == old.shape and v.dtype == t.dtype and v.seed != old.seed

        for _ in range(N_RULE_APPLICATIONS):  # rand_prim
            t = rng.choice([INT, FLOAT, BOOL, STR])
            v = rand_primitive(t, rng, CFG)
            assert infer_fuzz_type(v) == t
            if t == INT:
                assert -CFG.max_int <= v.v <= CFG.max_int
            if t == STR:
                assert len(v.v) <= CFG.max_str_len

        for _ in range(N_RULE_APPLICATIONS):  # rand_tuple and rand_list
            t = TupleType((INT, _random_tensor_type(rng), STR))
            v, _ = value_rule_rand(t, None, rng, CFG)
            assert infer_fuzz_type(v) == t
            lt = ListType((FLOAT, BOOL))
            v, _ = value_rule_rand(lt, None, rng, CFG)
            assert infer_fuzz_type(v) == lt

        # Database rules against a two-API store.
        store = ValueStore()
        records = [
            {"api": "api.one", "source": "doc", "args": [
                {"name": "x", "value": {"t": "tensor", "shape": [5, 6], "dtype": "float32", "seed": 10}},
                {"name": "k", "value": {"t": "int", "v": 42}},
                {"name": "mode", "value": {"t": "str", "v": "alpha"}},
                {"name": "pair", "value": {"t": "tuple", "items": [{"t": "int", "v": 1}, {"t": "int", "v": 2}]}},
                {"name": "tags", "value": {"t": "list", "items": [{"t": "str", "v": "a"}]}},
            ]},
            {"api": "api.two", "source": "test", "args": [
                {"name": "x", "value": {"t": "tensor", "shape": [3, 2], "dtype": "float32", "seed": 20}},
                {"name": "k", "value": {"t": "int", "v": 7}},
                {"name": "mode", "value": {"t": "str", "v": "beta"}},
                {"name": "pair", "value": {"t": "tuple", "items": [{"t": "int", "v": 3}, {"t": "int", "v": 4}]}},
                {"name": "tags", "value": {"t": "list", "items": [{"t": "str", "v": "b"}]}},
            ]},
        ]
        assert not store.ingest_lines([json.dumps(r) for r in records]).errors
        db_queries = [
            (TensorType(2, Dtype.FLOAT32), "x", {(5, 6)}),
            (INT, "k", {42}),
            (STR, "mode", {"alpha"}),
            (TupleType((INT, INT)), "pair", {(1, 2)}),
            (ListType((STR,)), "tags", {("a",)}),
        ]
        for t, name, recorded in db_queries:
            for _ in range(N_RULE_APPLICATIONS):
                got = value_rule_db("api.two", t, name, store, rng)
                assert got is not None
                v, _ = got
                assert infer_fuzz_type(v) == t
                if isinstance(v, TensorSpec):
                    assert v.shape in recorded
                elif isinstance(v, (IntV, StrV)):
                    assert v.v in recorded
                elif isinstance(v, TupleV):
                    assert tuple(item.v for item in v.items) in recorded
                elif isinstance(v, ListV):
                    assert tuple(item.v for item in v.items) in recorded


# ---------------------------------------------------------------------------
# Criterion 3: Algorithm-1 conformance
# ---------------------------------------------------------------------------


class _ScriptedRng(RngStream):
    def __init__(self, script, seed=0):
        super().__init__(seed)
        self._script = list(script)

    def random(self):
        return self._script.pop(0) if self._script else super().random()


def test_algorithm_conformance():
    with criterion("Algorithm-1 conformance", 10.0):
        store = ValueStore()
        store.ingest_file(corpus_path())

        # numMutation in [1, argNum]: with the type-mutation branch off and
        # no opaque slots, lineage length equals numMutation exactly.
        cfg = MutationConfig(p_type_mutation=0.0)
        rng = RngStream(303)
        counts = {1: 0, 2: 0, 3: 0}
        n = 10_000
        for _ in range(n):
            tc = mutate("rt.pool1d", store, cfg, rng)  # 3-argument entries
            k = len(tc.lineage)
            assert 1 <= k <= 3
            counts[k] += 1
        for k in (1, 2, 3):
            sigma = math.sqrt((1 / 3) * (2 / 3) / n)
            assert abs(counts[k] / n - 1 / 3) <= 4 * sigma, counts

        # Single-argument seed: the only slot is always the one rewritten.
        single = ValueStore()
        single.ingest_lines([json.dumps({
            "api": "api.tiny", "source": "doc",
            "args": [{"name": "only", "value": {"t": "int", "v": 5}}],
        })])
        for _ in range(100):
            tc = mutate("api.tiny", single, CFG, rng)
            assert tc.entry.args[0][0] == "only"
            assert tc.lineage

        # Stubbed branch draws plus a single-candidate DB force the value.
        db = ValueStore()
        db.ingest_lines([
            json.dumps({"api": "api.dst", "source": "doc",
                        "args": [{"name": "mode", "value": {"t": "str", "v": "zeros"}}]}),
            json.dumps({"api": "api.src", "source": "doc",
                        "args": [{"name": "mode", "value": {"t": "str", "v": "reflect"}}]}),
        ])
        stub = _ScriptedRng([0.99, 0.99], seed=7)  # no type mutation, DB path
        tc = mutate("api.dst", db, CFG, stub)
        assert tc.entry.arg_value("mode") == StrV("reflect")
        assert tc.lineage == ("db_prim",)

        # Byte-identical mutant streams for a fixed seed.
        def stream(seed):
            r = RngStream(seed)
            return b"\n".join(
                json.dumps(mutate(api, store, CFG, r).to_wire(), separators=(",", ":")).encode()
                for api in store.apis()
                for _ in range(50)
            )

        assert stream(42) == stream(42)
        assert stream(42) != stream(43)


# ---------------------------------------------------------------------------
# Criterion 4: dedup idempotence
# ---------------------------------------------------------------------------


def test_dedup_idempotence():
    with criterion("dedup idempotence on the bundled corpus", 5.0):
        store = ValueStore()
        first = store.ingest_file(corpus_path())
        stats_once = store.stats()
        again = store.ingest_file(corpus_path())
        assert first.entries_added == 22
        assert again.entries_added == 0
        assert again.duplicates_skipped == 22
        assert store.stats() == stats_once


# ---------------------------------------------------------------------------
# Criterion 5: the defect campaign (seed 42, 200 mutants/API, 3 backends)
# ---------------------------------------------------------------------------

CAMPAIGN_CFG = """\
store = seed.store
output_dir = out_defects
backends = ref,fast,buggy
executor_cmd = {python} -m tracefuzz.reftarget --backend {backend} --defects {defects}
defects = D1,D2,D3,D4,D5
campaign_seed = 42
per_api_mutants = 200
timeout_ms = 10000
"""


def test_defect_campaign(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "camp.cfg").write_text(CAMPAIGN_CFG)
    assert main(["ingest", str(corpus_path()), "--store", "seed.store"]) == 0

    with criterion("defect campaign detects D1-D5 archetypes", 120.0):
        code = main(["fuzz", "--config", "camp.cfg"])
        assert code == 1
        totals = load_summary("out_defects")["verdict_totals"]
        assert totals.get("WrongComputation", 0) >= 1, totals  # D1
        assert totals.get("CrashBug", 0) >= 2, totals  # D2, D3, D5 patterns
        assert totals.get("PerformanceAnomaly", 0) >= 1, totals  # D4
        assert totals.get("InvalidInput", 0) >= 1, totals  # benign filter

    with criterion("clean campaign with defects disabled", 120.0):
        code = main(["fuzz", "--config", "camp.cfg", "--defects", "", "--output-dir", "out_clean"])
        assert code == 0
        totals = load_summary("out_clean")["verdict_totals"]
        assert totals.get("WrongComputation", 0) == 0, totals
        assert totals.get("CrashBug", 0) == 0, totals


# ---------------------------------------------------------------------------
# Criterion 6: oracle unit fidelity
# ---------------------------------------------------------------------------


def test_oracle_unit_fidelity():
    with criterion("oracle unit fidelity (digest, timing, filter)", 1.0):
        gpu_on = BackendId("gpu_cudnn")
        gpu_off = BackendId("gpu_aten")
        cfg = OracleConfig()

        def digest(total):
            return OutputDigest(shape=(1, 128, 16, 16), dtype=Dtype.FLOAT32,
                                all_finite=True, sum=total, abs_sum=abs(total) + 200.0,
                                sample=(0.5,) * 16)

        outcomes = {
            gpu_on: Outcome(backend=gpu_on, status="ok", output=digest(-523.5300), elapsed_ms=(1.0,)),
            gpu_off: Outcome(backend=gpu_off, status="ok", output=digest(-601.6165), elapsed_ms=(1.0,)),
        }
        assert differential_verdict(outcomes, cfg).kind == VerdictKind.WRONG_COMPUTATION

        low = Outcome(backend=gpu_on, status="ok", output=digest(1.0), elapsed_ms=(377.0,) * 11)
        high = Outcome(backend=gpu_on, status="ok", output=digest(1.0), elapsed_ms=(101.0,) * 11)
        verdict = performance_verdict(low, high, Dtype.FLOAT16, Dtype.FLOAT32, cfg)
        assert verdict.kind == VerdictKind.PERFORMANCE_ANOMALY

        raised = {
            gpu_on: Outcome(backend=gpu_on, status="exception",
                            exception_class="ValueError", exception_message="bad kernel size"),
            gpu_off: Outcome(backend=gpu_off, status="exception",
                             exception_class="ValueError", exception_message="size must be positive"),
        }
        assert crash_verdict(raised, cfg).kind == VerdictKind.INVALID_INPUT


# ---------------------------------------------------------------------------
# Criterion 7: isolation under interleaved crashes
# ---------------------------------------------------------------------------


def test_isolation_campaign(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "camp.cfg").write_text(CAMPAIGN_CFG)
    assert main(["ingest", str(corpus_path()), "--store", "seed.store"]) == 0

    with criterion("isolation: D2 crashes never contaminate healthy cases", 60.0):
        # Campaign level: only D2 enabled; pad1d raises on buggy while the
        # other APIs must classify exactly as a defect-free run would.
        code = main(["fuzz", "--config", "camp.cfg", "--defects", "D2", "--mutants", "60",
                     "--api", "rt.pad1d,rt.scale,rt.add", "--output-dir", "out_d2"])
        assert code == 1
        summary = load_summary("out_d2")
        assert summary["per_api"]["rt.pad1d"].get("CrashBug", 0) >= 1
        for healthy_api in ("rt.scale", "rt.add"):
            counts = summary["per_api"][healthy_api]
            assert counts.get("CrashBug", 0) == 0, counts
            assert counts.get("WrongComputation", 0) == 0, counts

        # Harness level: hard process aborts interleaved with healthy cases
        # leave their digests bit-identical to an undisturbed baseline.
        ref = BackendId("ref")
        spec = ExecutorSpec(ref, (sys.executable, "-m", "tracefuzz.reftarget", "--backend", "ref"))
        healthy = TestCase(
            entry=InvocationEntry(
                "rt.scale",
                (("x", TensorSpec((8,), Dtype.FLOAT32, 5)), ("factor", FloatV(2.0))),
                Source.DOC,
            ),
            seed=1,
            backends=(ref,),
        )
        crasher = TestCase(
            entry=InvocationEntry("rt.debug_abort", (), Source.DOC),
            seed=1,
            backends=(ref,),
        )
        with ExecutorHandle(spec) as handle:
            pool = {ref: handle}
            baseline = run_test(healthy, pool, 10000)[ref].output
            for _ in range(3):
                assert run_test(crasher, pool, 10000)[ref].status == "crash"
                after = run_test(healthy, pool, 10000)[ref]
                assert after.status == "ok"
                assert after.output == baseline

"""Value-store tests: ingestion, dedup, sampling, queries, persistence."""

from __future__ import annotations

import json
import math

import pytest

from tracefuzz.core import (
    Dtype,
    IntV,
    StrV,
    TensorSpec,
    TupleV,
    infer_fuzz_type,
    STR,
    INT,
)
from tracefuzz.rng import RngStream
from tracefuzz.store import NoSeedEntries, StoreFormatError, ValueStore


def _record(api, args, source="doc"):
    return json.dumps(
        {
            "api": api,
            "source": source,
            "args": [{"name": n, "value": v} for n, v in args],
        }
    )


CONV2D_RECORD = _record(
    "nn.conv2d",
    [
        ("in_channels", {"t": "int", "v": 16}),
        ("out_channels", {"t": "int", "v": 33}),
        ("kernel_size", {"t": "tuple", "items": [{"t": "int", "v": 3}, {"t": "int", "v": 5}]}),
        ("padding_mode", {"t": "str", "v": "reflect"}),
        ("input", {"t": "tensor", "shape": [20, 16, 50, 100], "dtype": "float32", "seed": 1}),
    ],
)


def test_ingest_conv_doc_snippet():
    store = ValueStore()
    stats = store.ingest_lines([CONV2D_RECORD])
    assert (stats.apis_covered, stats.entries_added, stats.duplicates_skipped) == (1, 1, 0)
    (entry,) = store.entries("nn.conv2d")
    assert entry.arg_value("in_channels") == IntV(16)
    assert entry.arg_value("out_channels") == IntV(33)
    assert entry.arg_value("kernel_size") == TupleV((IntV(3), IntV(5)))


def test_double_ingest_is_idempotent():
    store = ValueStore()
    first = store.ingest_lines([CONV2D_RECORD])
    again = store.ingest_lines([CONV2D_RECORD])
    assert first.entries_added == 1
    assert again.entries_added == 0
    assert again.duplicates_skipped == 1
    assert store.stats() == (1, 1)


def test_two_distinct_records_both_added():
    store = ValueStore()
    lines = [
        _record("rt.scale", [("x", {"t": "tensor", "shape": [4], "dtype": "float32", "seed": 1}),
                             ("factor", {"t": "float", "v": 2.0})]),
        _record("rt.scale", [("x", {"t": "tensor", "shape": [4], "dtype": "float32", "seed": 1}),
                             ("factor", {"t": "float", "v": 3.0})], source="test"),
    ]
    stats = store.ingest_lines(lines)
    assert stats.entries_added == 2
    assert store.stats() == (1, 2)


def test_seed_only_difference_is_duplicate():
    store = ValueStore()
    lines = [
        _record("rt.scale", [("x", {"t": "tensor", "shape": [4], "dtype": "float32", "seed": 1})]),
        _record("rt.scale", [("x", {"t": "tensor", "shape": [4], "dtype": "float32", "seed": 2})]),
    ]
    stats = store.ingest_lines(lines)
    assert stats.entries_added == 1
    assert stats.duplicates_skipped == 1


def test_malformed_records_reported_with_line_numbers():
    store = ValueStore()
    lines = [
        "not json at all",
        CONV2D_RECORD,
        json.dumps({"api": "f", "source": "doc", "args": [{"name": "x", "value": {"t": "nope"}}]}),
        json.dumps({"api": "f", "source": "mutant", "args": []}),
    ]
    stats = store.ingest_lines(lines)
    assert stats.entries_added == 1
    assert [line for line, _ in stats.errors] == [1, 3, 4]
    # Ingestion continued past the bad lines.
    assert store.stats() == (1, 1)


def test_sample_entry_forced_and_missing():
    store = ValueStore()
    store.ingest_lines([CONV2D_RECORD])
    rng = RngStream(1)
    (only,) = store.entries("nn.conv2d")
    assert store.sample_entry("nn.conv2d", rng) == only
    with pytest.raises(NoSeedEntries):
        store.sample_entry("nn.conv3d", rng)


def test_sample_entry_uniform_two_entries():
    store = ValueStore()
    store.ingest_lines(
        [
            _record("api.f", [("k", {"t": "int", "v": 1})]),
            _record("api.f", [("k", {"t": "int", "v": 2})]),
        ]
    )
    rng = RngStream(31337)
    draws = 10000
    hits = sum(
        1 for _ in range(draws) if store.sample_entry("api.f", rng).arg_value("k") == IntV(1)
    )
    sigma = math.sqrt(0.25 / draws)
    assert abs(hits / draws - 0.5) <= 3 * sigma


def test_query_arg_candidates_cross_api():
    # 'reflect' recorded under conv2d's padding_mode is offered to conv3d.
    store = ValueStore()
    store.ingest_lines([CONV2D_RECORD])
    got = store.query_arg_candidates(STR, "padding_mode", exclude_api="nn.conv3d")
    assert got == [("nn.conv2d", [StrV("reflect")])]


def test_query_empty_store_and_self_exclusion():
    store = ValueStore()
    assert store.query_arg_candidates(STR, "padding_mode", "nn.conv3d") == []
    store.ingest_lines([CONV2D_RECORD])
    assert store.query_arg_candidates(STR, "padding_mode", "nn.conv2d") == []


def test_query_tensor_candidates_match_rank_and_dtype():
    store = ValueStore()
    store.ingest_lines([CONV2D_RECORD])
    t4_f32 = infer_fuzz_type(TensorSpec((1, 1, 1, 1), Dtype.FLOAT32, 0))
    t4_f64 = infer_fuzz_type(TensorSpec((1, 1, 1, 1), Dtype.FLOAT64, 0))
    t3_f32 = infer_fuzz_type(TensorSpec((1, 1, 1), Dtype.FLOAT32, 0))
    assert store.query_arg_candidates(t4_f32, "input", "other") != []
    assert store.query_arg_candidates(t4_f64, "input", "other") == []
    assert store.query_arg_candidates(t3_f32, "input", "other") == []


def test_query_index_consistency():
    store = ValueStore()
    store.ingest_lines(
        [
            CONV2D_RECORD,
            _record("rt.pool1d", [("x", {"t": "tensor", "shape": [32], "dtype": "float32", "seed": 3}),
                                  ("window", {"t": "int", "v": 4})]),
            _record("rt.pad1d", [("x", {"t": "tensor", "shape": [16], "dtype": "float32", "seed": 9}),
                                 ("window", {"t": "int", "v": 9})]),
        ]
    )
    for api, values in store.query_arg_candidates(INT, "window", exclude_api="zzz"):
        for v in values:
            assert infer_fuzz_type(v) == INT
            assert any(
                ("window", v) in entry.args for entry in store.entries(api)
            ), f"indexed value not present in any {api} entry"


def test_stats_counts():
    store = ValueStore()
    assert store.stats() == (0, 0)
    store.ingest_lines(
        [
            _record("a.one", [("k", {"t": "int", "v": 1})]),
            _record("a.one", [("k", {"t": "int", "v": 2})]),
            _record("a.two", [("k", {"t": "int", "v": 3})]),
        ]
    )
    assert store.stats() == (2, 3)


def test_save_load_roundtrip(tmp_path):
    store = ValueStore()
    store.ingest_lines(
        [
            CONV2D_RECORD,
            _record("rt.pool1d", [("x", {"t": "tensor", "shape": [32], "dtype": "float32", "seed": 3}),
                                  ("window", {"t": "int", "v": 4})], source="model"),
        ]
    )
    path = tmp_path / "corpus.store"
    store.save(path)
    loaded = ValueStore.load(path)
    assert loaded.stats() == store.stats()
    assert loaded.apis() == store.apis()
    query = (STR, "padding_mode", "nn.conv3d")
    assert loaded.query_arg_candidates(*query) == store.query_arg_candidates(*query)
    assert loaded.signature("rt.pool1d") == store.signature("rt.pool1d")
    for api in store.apis():
        assert loaded.entries(api) == store.entries(api)


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.store"
    path.write_text("this is not a store\n")
    with pytest.raises(StoreFormatError):
        ValueStore.load(path)
    path.write_text(json.dumps({"format": "api-value-store", "version": 99}) + "\n")
    with pytest.raises(StoreFormatError):
        ValueStore.load(path)


def test_signature_uses_first_entry_arg_names():
    store = ValueStore()
    store.ingest_lines([CONV2D_RECORD])
    assert store.signature("nn.conv2d") == (
        "nn.conv2d(in_channels,out_channels,kernel_size,padding_mode,input)"
    )

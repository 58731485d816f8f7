"""tracefuzz: trace-driven, type-aware mutation fuzzing for numeric library APIs."""

from tracefuzz.core import (
    BackendId,
    Dtype,
    FuzzType,
    InvocationEntry,
    Source,
    TensorSpec,
    TestCase,
    Value,
    canonical_signature,
    entry_fingerprint,
    infer_fuzz_type,
)
from tracefuzz.rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "BackendId",
    "Dtype",
    "FuzzType",
    "InvocationEntry",
    "RngStream",
    "Source",
    "TensorSpec",
    "TestCase",
    "Value",
    "canonical_signature",
    "entry_fingerprint",
    "infer_fuzz_type",
    "__version__",
]

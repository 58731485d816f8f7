"""Persistent API value space and argument value space.

The API value space maps each API name to its deduplicated recorded
entries (the mutation seeds).  The argument value space indexes every
recorded (argument name, argument type) pair to the values seen across
all APIs, which is what lets the engine transfer a value recorded for
one API to a similar argument of another.

Storage is a single append-friendly file: a magic header line followed
by one trace record per line.  The in-memory index is rebuilt on load.
Writes (ingest) are exclusive; after ingestion the store is read-only
and safe for concurrent readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from tracefuzz.core import (
    FuzzType,
    InvocationEntry,
    Value,
    WireFormatError,
    canonical_signature,
    entry_fingerprint,
    infer_fuzz_type,
)
from tracefuzz.rng import RngStream

STORE_MAGIC = "api-value-store"
STORE_VERSION = 1


class NoSeedEntries(LookupError):
    """The requested API has no recorded entries to mutate."""


class StoreFormatError(ValueError):
    """The store file is missing its header or has the wrong version."""


@dataclass
class IngestStats:
    apis_covered: int = 0
    entries_added: int = 0
    duplicates_skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def records_ok(self) -> int:
        return self.entries_added + self.duplicates_skipped

    def merge(self, other: "IngestStats") -> None:
        self.apis_covered = max(self.apis_covered, other.apis_covered)
        self.entries_added += other.entries_added
        self.duplicates_skipped += other.duplicates_skipped
        self.errors.extend(other.errors)


class ValueStore:
    """In-memory value spaces with single-file persistence."""

    def __init__(self) -> None:
        self._entries: dict[str, list[InvocationEntry]] = {}
        self._fingerprints: dict[str, set[str]] = {}
        # (argName, argType) -> ordered [(api, value)] rows, as recorded.
        self._arg_index: dict[tuple[str, FuzzType], list[tuple[str, Value]]] = {}
        self._signatures: dict[str, str] = {}

    # -- construction ------------------------------------------------------

    def add_entry(self, entry: InvocationEntry) -> bool:
        """Add one entry; returns False when it is a duplicate by fingerprint."""
        fp = entry_fingerprint(entry)
        fps = self._fingerprints.setdefault(entry.api, set())
        if fp in fps:
            return False
        fps.add(fp)
        self._entries.setdefault(entry.api, []).append(entry)
        self._signatures.setdefault(
            entry.api, canonical_signature(entry.api, entry.arg_names())
        )
        for name, value in entry.args:
            key = (name, infer_fuzz_type(value))
            self._arg_index.setdefault(key, []).append((entry.api, value))
        return True

    def ingest_lines(self, lines: Iterable[str], *, first_line: int = 1) -> IngestStats:
        """Parse line-delimited trace records; malformed lines are counted,
        reported with their line number, and skipped."""
        stats = IngestStats()
        apis: set[str] = set()
        for line_no, line in enumerate(lines, start=first_line):
            text = line.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
                entry = InvocationEntry.from_wire(obj, trace_only=True)
            except (json.JSONDecodeError, WireFormatError) as exc:
                stats.errors.append((line_no, str(exc)))
                continue
            apis.add(entry.api)
            if self.add_entry(entry):
                stats.entries_added += 1
            else:
                stats.duplicates_skipped += 1
        stats.apis_covered = len(apis)
        return stats

    def ingest_file(self, path: str | Path) -> IngestStats:
        with open(path, "r", encoding="utf-8") as fh:
            return self.ingest_lines(fh)

    # -- queries -----------------------------------------------------------

    def apis(self) -> list[str]:
        return sorted(self._entries)

    def entries(self, api: str) -> list[InvocationEntry]:
        return list(self._entries.get(api, ()))

    def signature(self, api: str) -> str:
        try:
            return self._signatures[api]
        except KeyError:
            raise NoSeedEntries(f"no entries recorded for API {api!r}") from None

    def sample_entry(self, api: str, rng: RngStream) -> InvocationEntry:
        """Uniform draw over the API's recorded entries."""
        entries = self._entries.get(api)
        if not entries:
            raise NoSeedEntries(f"no entries recorded for API {api!r}")
        return entries[rng.randint(0, len(entries) - 1)]

    def query_arg_candidates(
        self, arg_type: FuzzType, arg_name: str, exclude_api: str
    ) -> list[tuple[str, list[Value]]]:
        """Every API other than `exclude_api` holding values under
        (arg_name, arg_type), grouped by API in sorted-name order.

        Tensor types match on (rank, dtype) by FuzzType equality.
        """
        rows = self._arg_index.get((arg_name, arg_type), ())
        grouped: dict[str, list[Value]] = {}
        for api, value in rows:
            if api == exclude_api:
                continue
            grouped.setdefault(api, []).append(value)
        return sorted(grouped.items())

    def stats(self) -> tuple[int, int]:
        """(number of covered APIs, total deduplicated value-space size)."""
        return len(self._entries), sum(len(v) for v in self._entries.values())

    def __iter__(self) -> Iterator[InvocationEntry]:
        for api in self.apis():
            yield from self._entries[api]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = json.dumps({"format": STORE_MAGIC, "version": STORE_VERSION})
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for entry in self:
                fh.write(json.dumps(entry.to_wire(), separators=(",", ":")) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ValueStore":
        store = cls()
        with open(path, "r", encoding="utf-8") as fh:
            head = fh.readline().strip()
            try:
                meta = json.loads(head) if head else {}
            except json.JSONDecodeError:
                meta = {}
            if not isinstance(meta, dict) or meta.get("format") != STORE_MAGIC:
                raise StoreFormatError(f"{path}: not a value-store file")
            if meta.get("version") != STORE_VERSION:
                raise StoreFormatError(
                    f"{path}: unsupported store version {meta.get('version')!r}"
                )
            stats = store.ingest_lines(fh, first_line=2)
        if stats.errors:
            line, msg = stats.errors[0]
            raise StoreFormatError(f"{path}:{line}: corrupt record: {msg}")
        return store

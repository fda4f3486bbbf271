"""Authoritative face-ID registry.

Embeddings are L2-normalized before storage and comparison. A registration
either resolves to the nearest stored identity within the distance
threshold or creates a new identity with the next integer id. Assignment is
split into ``prepare`` (search, no lock held while the caller waits) and
``commit`` (re-checks under the lock), which lets tests drive every
interleaving of concurrent registrations step by step.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.6


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class IdentityRecord:
    id: int
    embedding: tuple[float, ...]
    first_seen: float
    device_of_origin: str

    def to_dict(self) -> dict:
        return {"id": self.id, "embedding": list(self.embedding), "first_seen": self.first_seen, "device_of_origin": self.device_of_origin}

    @classmethod
    def from_dict(cls, d: dict) -> "IdentityRecord":
        return cls(int(d["id"]), tuple(float(x) for x in d["embedding"]), float(d["first_seen"]), str(d["device_of_origin"]))


@dataclass(frozen=True)
class Snapshot:
    version: int
    records: tuple[IdentityRecord, ...]

    def to_dict(self) -> dict:
        return {"version": self.version, "records": [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        return cls(int(d["version"]), tuple(IdentityRecord.from_dict(r) for r in d["records"]))


def normalize(embedding, dim: int | None = None) -> np.ndarray:
    v = np.asarray(embedding, dtype=float).reshape(-1)
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"expected {dim}-dim embedding, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding must be finite")
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("embedding must be non-zero")
    return v / n


def nearest(records, query: np.ndarray, threshold: float) -> int | None:
    """Id of the closest record within ``threshold``; ties go to the lowest id."""
    best_id, best_d = None, np.inf
    for r in sorted(records, key=lambda r: r.id):
        d = float(np.linalg.norm(np.asarray(r.embedding) - query))
        if d <= threshold and d < best_d:
            best_id, best_d = r.id, d
    return best_id


@dataclass(frozen=True)
class Proposal:
    embedding: tuple[float, ...]
    version: int
    match: int | None
    device: str


class Registry:
    def __init__(self, dim: int, threshold: float = DEFAULT_THRESHOLD, clock=time.time, revalidate: bool = True):
        if not 0 < threshold < 2:
            raise ValueError("threshold must lie in (0, 2)")
        self.dim = dim
        self.threshold = threshold
        self.clock = clock
        # turning this off reproduces the lost-update race the tests look for
        self.revalidate = revalidate
        self._lock = threading.Lock()
        self._records: list[IdentityRecord] = []
        self._next_id = 1
        self._version = 0

    def __len__(self) -> int:
        return len(self._records)

    def prepare(self, embedding, device: str = "") -> Proposal:
        v = normalize(embedding, self.dim)
        with self._lock:
            records, version = list(self._records), self._version
        return Proposal(tuple(v), version, nearest(records, v, self.threshold), device)

    def commit(self, p: Proposal) -> tuple[int, bool]:
        with self._lock:
            match = p.match
            if self.revalidate and self._version != p.version:
                match = nearest(self._records, np.asarray(p.embedding), self.threshold)
            if match is not None:
                return match, False
            rec = IdentityRecord(self._next_id, p.embedding, float(self.clock()), p.device)
            self._next_id += 1
            self._records.append(rec)
            self._version += 1
            return rec.id, True

    def register_or_lookup(self, embedding, device: str = "") -> tuple[int, bool]:
        return self.commit(self.prepare(embedding, device))

    def lookup(self, embedding) -> int | None:
        v = normalize(embedding, self.dim)
        with self._lock:
            records = list(self._records)
        return nearest(records, v, self.threshold)

    def snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(self._version, tuple(self._records))

"""Edge-device caches and the sync round that refreshes them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .registry import DEFAULT_THRESHOLD, Snapshot, nearest, normalize


class DeviceUnreachable(ConnectionError):
    pass


class RegistrySource(Protocol):
    def snapshot(self) -> Snapshot: ...

    def register_or_lookup(self, embedding, device: str = "") -> tuple[int, bool]: ...


class DeviceCache:
    """Local read-only copy of the registry.

    Only the sync task writes (by swapping in a whole snapshot); readers see
    either the old or the new snapshot, never a mix.
    """

    def __init__(self, device_id: str, registry: RegistrySource, threshold: float = DEFAULT_THRESHOLD):
        self.device_id = device_id
        self.registry = registry
        self.threshold = threshold
        self.reachable = True
        self._snap = Snapshot(0, ())

    @property
    def snapshot(self) -> Snapshot:
        return self._snap

    def install(self, snap: Snapshot) -> None:
        if not self.reachable:
            raise DeviceUnreachable(f"device {self.device_id} is unreachable")
        self._snap = snap

    def register(self, embedding) -> tuple[int, bool]:
        """Registration always goes to the authoritative registry."""
        return self.registry.register_or_lookup(embedding, self.device_id)

    def resolve(self, embedding) -> int | None:
        """Local lookup against the cached snapshot."""
        return nearest(self._snap.records, normalize(embedding), self.threshold)

    def ids(self) -> list[int]:
        return [r.id for r in self._snap.records]


@dataclass
class SyncReport:
    version: int
    synced: list[str] = field(default_factory=list)
    unreachable: list[str] = field(default_factory=list)


def sync_round(devices: list[DeviceCache], registry: RegistrySource) -> SyncReport:
    """Push one registry snapshot, taken at round start, to every reachable device."""
    if not devices:
        return SyncReport(-1)
    snap = registry.snapshot()
    report = SyncReport(snap.version)
    for dev in devices:
        try:
            dev.install(snap)
            report.synced.append(dev.device_id)
        except DeviceUnreachable:
            report.unreachable.append(dev.device_id)
    return report


def min_pairwise_distance(snap: Snapshot) -> float:
    if len(snap.records) < 2:
        return float("inf")
    e = np.array([r.embedding for r in snap.records])
    d = np.linalg.norm(e[:, None] - e[None], axis=-1)
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())

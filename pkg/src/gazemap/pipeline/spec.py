"""Pipeline and stage descriptions, loadable from JSON profiles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..costmodel import ConvSpec, layers_latency
from ..geometry import ConfigError

HANDLERS = ("capture", "face", "gaze", "headpose", "match", "log")
REALLOCATION = ("off", "proportional")
PROFILE_DIR = Path(__file__).resolve().parent.parent / "data"


@dataclass(frozen=True)
class StageSpec:
    name: str
    workers: int = 1
    queue_capacity: int = 4
    simulated_latency: float = 0.0
    handler: str = "log"

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError(f"{self.name}.workers", "must be >= 1")
        if self.queue_capacity < 1:
            raise ConfigError(f"{self.name}.queue_capacity", "must be >= 1 (queues are bounded)")
        if not self.simulated_latency >= 0:
            raise ConfigError(f"{self.name}.simulated_latency", "must be >= 0")
        if self.handler not in HANDLERS:
            raise ConfigError(f"{self.name}.handler", f"unknown handler {self.handler!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "StageSpec":
        d = dict(d)
        layers = d.pop("conv_layers", None)
        rate = d.pop("macs_per_second", None)
        if layers is not None:
            if not rate:
                raise ConfigError(f"{d.get('name')}.macs_per_second", "required with conv_layers")
            # latency derived from the separable-convolution cost of the stage's network
            d["simulated_latency"] = d.get("simulated_latency", 0.0) + layers_latency([ConvSpec.from_dict(x) for x in layers], rate)
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "workers": self.workers,
            "queue_capacity": self.queue_capacity,
            "simulated_latency": self.simulated_latency,
            "handler": self.handler,
        }


@dataclass(frozen=True)
class PipelineSpec:
    stages: tuple[StageSpec, ...]
    global_worker_budget: int = 8
    reallocation: str = "off"
    epoch_items: int = 50  # items completed between reallocation decisions
    time_scale: float = 1.0  # multiplies every simulated latency
    drain_timeout: float = 60.0
    fail_fast: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ConfigError("stages", "at least one stage required")
        if self.reallocation not in REALLOCATION:
            raise ConfigError("reallocation", f"must be one of {REALLOCATION}")
        if self.global_worker_budget < len(self.stages):
            raise ConfigError("global_worker_budget", "must allow at least one worker per stage")
        total = sum(s.workers for s in self.stages)
        if total > self.global_worker_budget:
            raise ConfigError("global_worker_budget", f"stages request {total} workers, budget is {self.global_worker_budget}")
        if self.epoch_items < 1:
            raise ConfigError("epoch_items", "must be >= 1")
        if not self.time_scale >= 0:
            raise ConfigError("time_scale", "must be >= 0")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ConfigError("stages", "stage names must be unique")

    def latencies(self) -> list[float]:
        return [s.simulated_latency * self.time_scale for s in self.stages]

    def ideal_fps(self) -> float:
        """Bottleneck bound 1 / max(latency / workers), in scaled time."""
        worst = max(lat / s.workers for lat, s in zip(self.latencies(), self.stages))
        return float("inf") if worst == 0 else 1.0 / worst

    def with_workers(self, workers: list[int]) -> "PipelineSpec":
        return replace(self, stages=tuple(replace(s, workers=w) for s, w in zip(self.stages, workers)))

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        d = dict(d)
        d["stages"] = tuple(StageSpec.from_dict(s) for s in d["stages"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "stages": [s.to_dict() for s in self.stages],
            "global_worker_budget": self.global_worker_budget,
            "reallocation": self.reallocation,
            "epoch_items": self.epoch_items,
            "time_scale": self.time_scale,
            "drain_timeout": self.drain_timeout,
            "fail_fast": self.fail_fast,
            "meta": self.meta,
        }


def load_pipeline_spec(path: str | Path) -> PipelineSpec:
    """Load a profile by path, or by shipped name such as ``tx2-profile``."""
    p = Path(path)
    if not p.exists():
        shipped = PROFILE_DIR / (p.name if p.suffix == ".json" else f"{p.name}.json")
        if shipped.exists():
            p = shipped
    with open(p) as fh:
        return PipelineSpec.from_dict(json.load(fh))

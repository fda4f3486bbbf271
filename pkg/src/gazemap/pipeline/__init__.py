"""Bounded-queue execution engine, its discrete-event oracle and worker reallocation."""

from .des import DesResult, predict, simulate
from .engine import (
    DEFAULT_HANDLERS,
    Item,
    ShutdownTimeout,
    StagePanic,
    StageReport,
    ThroughputReport,
    run,
)
from .realloc import proportional_shares, reallocate
from .spec import HANDLERS, PipelineSpec, StageSpec, load_pipeline_spec

__all__ = [
    "DEFAULT_HANDLERS",
    "DesResult",
    "HANDLERS",
    "Item",
    "PipelineSpec",
    "ShutdownTimeout",
    "StagePanic",
    "StageReport",
    "StageSpec",
    "ThroughputReport",
    "load_pipeline_spec",
    "predict",
    "proportional_shares",
    "reallocate",
    "run",
    "simulate",
]

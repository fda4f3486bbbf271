"""Run configuration for end-to-end experiments.

Every tunable number, including the calibrated noise model, lives in JSON;
``data/quickstart.json`` is the shipped default and user configs are merged
over it key by key.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .geometry import CameraIntrinsics, ConfigError, PanelConfig
from .nets.matchnet import TrainConfig
from .synthgen import NoiseModel, SynthConfig

DATA_DIR = Path(__file__).resolve().parent / "data"
QUICKSTART = DATA_DIR / "quickstart.json"


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(section: str, factory, d: dict):
    try:
        return factory(d)
    except ConfigError as exc:
        raise ConfigError(f"{section}.{exc.field}", str(exc).split(": ", 1)[-1]) from exc
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from exc


@dataclass(frozen=True)
class TrainSettings:
    users: int
    cells_per_spec: int
    frames_per_dwell: int
    hyper: TrainConfig


@dataclass(frozen=True)
class EvalSettings:
    points: int
    frames_per_dwell: int
    head_turn_deg: float
    height_jitter: float
    median: bool
    noise_levels: tuple[float, ...]


@dataclass(frozen=True)
class PipelineSettings:
    profile: str
    items: int
    time_scale: float


@dataclass(frozen=True)
class RunConfig:
    seed: int
    panel: PanelConfig
    camera: CameraIntrinsics
    synth: SynthConfig
    noise: NoiseModel
    train_noise: NoiseModel
    train: TrainSettings
    eval: EvalSettings
    pipeline: PipelineSettings
    raw: dict

    def with_seed(self, seed: int) -> "RunConfig":
        return from_dict({**self.raw, "seed": seed})


def _positive_int(section: str, d: dict, key: str, minimum: int = 1) -> int:
    v = d.get(key)
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(f"{section}.{key}", f"must be an integer >= {minimum}")
    return v


def from_dict(d: dict) -> RunConfig:
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a non-negative integer")
    tr, ev, pl = d.get("train", {}), d.get("eval", {}), d.get("pipeline", {})
    train = TrainSettings(
        _positive_int("train", tr, "users"),
        _positive_int("train", tr, "cells_per_spec"),
        _positive_int("train", tr, "frames_per_dwell"),
        _build("train.hyper", TrainConfig.from_dict, tr.get("hyper", {})),
    )
    levels = tuple(float(x) for x in ev.get("noise_levels", (1.0,)))
    evs = EvalSettings(
        _positive_int("eval", ev, "points"),
        _positive_int("eval", ev, "frames_per_dwell"),
        float(ev.get("head_turn_deg", 15.0)),
        float(ev.get("height_jitter", 0.05)),
        bool(ev.get("median", False)),
        levels,
    )
    if evs.points > 36:
        raise ConfigError("eval.points", "at most 36 distinct cells per sub-case")
    time_scale = float(pl.get("time_scale", 1.0))
    if time_scale < 0:
        raise ConfigError("pipeline.time_scale", "must be >= 0")
    pipe = PipelineSettings(str(pl.get("profile", "tx2-profile")), _positive_int("pipeline", pl, "items"), time_scale)
    return RunConfig(
        seed,
        _build("panel", PanelConfig.from_dict, d.get("panel", {})),
        _build("camera", CameraIntrinsics.from_dict, d.get("camera", {})),
        _build("synth", SynthConfig.from_dict, d.get("synth", {})),
        _build("noise", NoiseModel.from_dict, d.get("noise", {})),
        _build("train_noise", NoiseModel.from_dict, d.get("train_noise", {})),
        train,
        evs,
        pipe,
        d,
    )


def load_run_config(path: str | Path | None = None, seed: int | None = None) -> RunConfig:
    with open(QUICKSTART) as fh:
        base = json.load(fh)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON: {exc}") from exc
        base = _merge(base, user)
    if seed is not None:
        base["seed"] = seed
    return from_dict(base)

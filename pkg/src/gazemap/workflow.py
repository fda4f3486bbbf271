"""Reusable experiment steps shared by the CLI and the acceptance tests."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from .config import RunConfig
from .evalharness import ExperimentResult, run_experiment
from .features import HEAD_CLIP, build_inputs, normalized_targets
from .geometry import PanelPoint, Pose, backproject
from .headpose import head_panel_points, load_face_model, solve_pnp
from .nets.matchnet import MatchNet, fit_new, match_forward
from .pipeline import PipelineSpec, ThroughputReport, load_pipeline_spec, run
from .synthgen import GazeSample, Generator, NoiseModel, generate, generate_trials, user_case_trials, training_specs

log = logging.getLogger(__name__)

# offsets that keep the sub-streams of one master seed apart
TRAIN_DATA, EVAL_PLAN, EVAL_NOISE = 0, 101, 202


def generator(cfg: RunConfig, target_mode: str) -> Generator:
    return Generator(cfg.panel, cfg.camera, load_face_model(), replace(cfg.synth, target_mode=target_mode))


def training_set(cfg: RunConfig) -> list[GazeSample]:
    specs = training_specs(cfg.seed + TRAIN_DATA, cfg.train.users)
    return generate(specs, cfg.train.cells_per_spec, cfg.train.frames_per_dwell, cfg.train_noise, cfg.seed + TRAIN_DATA, generator(cfg, "uniform"))


def train_matchnet(cfg: RunConfig, samples: list[GazeSample] | None = None) -> tuple[MatchNet, list[float]]:
    samples = samples if samples is not None else training_set(cfg)
    x = build_inputs(samples, cfg.panel, cfg.camera)
    y = normalized_targets(samples, cfg.panel)
    hyper = replace(cfg.train.hyper, seed=cfg.seed)
    net, curve = fit_new(x, y, hyper, (cfg.panel.width, cfg.panel.height))
    net.meta.update({"seed": cfg.seed, "train_samples": len(samples)})
    return net, curve


def evaluation_set(cfg: RunConfig, noise: NoiseModel | None = None, noise_seed: int | None = None) -> list[GazeSample]:
    """User-case trial suite; each dwell fixates its cell's center."""
    ev = cfg.eval
    plan = user_case_trials(cfg.seed + EVAL_PLAN, ev.points, height_jitter=ev.height_jitter, head_turn=ev.head_turn_deg)
    seed = cfg.seed + EVAL_NOISE if noise_seed is None else noise_seed
    return generate_trials(plan, ev.frames_per_dwell, noise or cfg.noise, seed, generator(cfg, "center"))


def evaluate(cfg: RunConfig, net: MatchNet, samples: list[GazeSample]) -> ExperimentResult:
    return run_experiment(samples, net, cfg.panel, cfg.camera, median=cfg.eval.median)


def noise_sweep(cfg: RunConfig, net: MatchNet) -> list[tuple[float, float]]:
    """Overall accuracy at each configured gaze-noise multiple, same seeds throughout."""
    out = []
    for level in cfg.eval.noise_levels:
        res = evaluate(cfg, net, evaluation_set(cfg, cfg.noise.scaled(level)))
        trials = res.trials
        out.append((level, 100.0 * sum(t.correct for t in trials) / len(trials)))
    return out


# per-frame pipeline handlers


def _capture(idx, ctx):
    return {"sample": ctx["samples"][idx]}


def _face(p, ctx):
    p["landmarks"] = p["sample"].landmarks
    return p


def _headpose(p, ctx):
    s = p["sample"]
    # same starting point as the batched feature path
    t0 = backproject(ctx["camera"], np.add(s.left.eye_px, s.right.eye_px) / 2, s.depth)
    est = solve_pnp(ctx["face"], p["landmarks"], ctx["camera"], init=Pose(translation=tuple(t0)))
    hit = head_panel_points(np.array([est.pose.rotation]), np.array([est.pose.translation]), ctx["panel"])[0]
    hit = hit / np.array([ctx["panel"].width, ctx["panel"].height])
    p["head"] = tuple(np.clip(np.where(np.isfinite(hit), hit, 0.5), *HEAD_CLIP))
    return p


def _gaze(p, ctx):
    s = p["sample"]
    p["eyes"] = (s.left, s.right, s.depth)
    return p


def _match(p, ctx):
    left, right, depth = p["eyes"]
    p["point"] = match_forward(ctx["net"], left, right, depth, p["head"])
    return p


def _log(p, ctx):
    pt: PanelPoint = p["point"]
    return (pt.u, pt.v)


HANDLERS = {"capture": _capture, "face": _face, "headpose": _headpose, "gaze": _gaze, "match": _match, "log": _log}


def pipeline_spec(cfg: RunConfig) -> PipelineSpec:
    spec = load_pipeline_spec(cfg.pipeline.profile)
    return replace(spec, time_scale=cfg.pipeline.time_scale)


def run_pipeline(cfg: RunConfig, net: MatchNet, samples: list[GazeSample]) -> tuple[ThroughputReport, np.ndarray]:
    """Stream the first ``pipeline.items`` frames through the staged engine."""
    frames = samples[: cfg.pipeline.items]
    ctx = {"samples": frames, "face": load_face_model(), "camera": cfg.camera, "panel": cfg.panel, "net": net}
    report = run(pipeline_spec(cfg), payloads=list(range(len(frames))), handlers=HANDLERS, context=ctx, collect=True)
    preds = np.array([it.payload for it in report.outputs]).reshape(-1, 2)
    return report, preds


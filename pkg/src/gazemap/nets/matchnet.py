"""Siamese gaze-matching regressor.

Each eye contributes a 5-feature block (unit gaze vector in the camera frame
and the eye's pixel position). Both blocks go through one shared eye branch;
raw depth goes through its own one-input branch because its range is not
known in advance, and the head-pose panel hit point is appended as two extra
features. The fusion head regresses the panel point in normalized [0, 1]^2
coordinates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import PanelPoint
from .dense import DenseNet, NonFinite, mse

FORMAT = "matchnet-v1"
EYE_FEATURES = 5


class DegenerateStats(ValueError):
    pass


class Diverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class EyeFeature:
    gaze: tuple[float, float, float]
    eye_px: tuple[float, float]

    def __post_init__(self):
        g = np.asarray(self.gaze, dtype=float)
        if abs(np.linalg.norm(g) - 1.0) > 1e-6:
            raise ValueError("gaze must be a unit vector")
        object.__setattr__(self, "gaze", tuple(float(x) for x in g))
        object.__setattr__(self, "eye_px", tuple(float(x) for x in self.eye_px))

    def as_array(self) -> np.ndarray:
        return np.array(self.gaze + self.eye_px)

    def to_dict(self) -> dict:
        return {"gaze": list(self.gaze), "eye_px": list(self.eye_px)}

    @classmethod
    def from_dict(cls, d: dict) -> "EyeFeature":
        return cls(tuple(d["gaze"]), tuple(d["eye_px"]))


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=float))

    def check(self) -> None:
        if np.any(~(self.std > 0)):
            bad = np.flatnonzero(~(self.std > 0)).tolist()
            raise DegenerateStats(f"zero standard deviation for eye features {bad}")

    @classmethod
    def fit(cls, eye_blocks: np.ndarray) -> "NormStats":
        """Pooled statistics over left and right eye blocks stacked as rows."""
        stats = cls(eye_blocks.mean(axis=0), eye_blocks.std(axis=0))
        stats.check()
        return stats

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def normalize_inputs(stats: NormStats, left: EyeFeature, right: EyeFeature) -> np.ndarray:
    """z-scored [left block, right block]; depth is routed raw to its own branch."""
    stats.check()
    return np.concatenate([(left.as_array() - stats.mean) / stats.std, (right.as_array() - stats.mean) / stats.std])


@dataclass
class MatchInputs:
    left: np.ndarray  # (B, 5) raw eye features
    right: np.ndarray  # (B, 5)
    depth: np.ndarray  # (B,) meters
    head: np.ndarray  # (B, 2) head-pose panel point, normalized by panel size

    def __len__(self) -> int:
        return len(self.depth)

    def take(self, idx) -> "MatchInputs":
        return MatchInputs(self.left[idx], self.right[idx], self.depth[idx], self.head[idx])


@dataclass
class MatchNet:
    eye_branch: DenseNet
    depth_branch: DenseNet
    fusion_head: DenseNet
    norm_stats: NormStats
    panel_size: tuple[float, float] = (1.02, 1.38)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        need = 2 * self.eye_branch.output_dim + self.depth_branch.output_dim + 2
        if self.fusion_head.input_dim != need:
            raise ValueError(f"fusion head expects {need} inputs, has {self.fusion_head.input_dim}")
        if self.fusion_head.output_dim != 2:
            raise ValueError("fusion head must emit 2 outputs")
        if self.depth_branch.input_dim != 1:
            raise ValueError("depth branch takes a single input")
        if self.eye_branch.input_dim != EYE_FEATURES:
            raise ValueError(f"eye branch takes {EYE_FEATURES} inputs")

    @classmethod
    def init(
        cls,
        stats: NormStats,
        rng: np.random.Generator,
        eye_hidden=(16, 16),
        depth_hidden=(4,),
        fusion_hidden=(32,),
        panel_size=(1.02, 1.38),
    ) -> "MatchNet":
        eye_sizes = [EYE_FEATURES, *eye_hidden]
        depth_sizes = [1, *depth_hidden]
        fusion_in = 2 * eye_sizes[-1] + depth_sizes[-1] + 2
        fusion_sizes = [fusion_in, *fusion_hidden, 2]
        return cls(
            DenseNet.init(eye_sizes, ["relu"] * (len(eye_sizes) - 1), rng),
            DenseNet.init(depth_sizes, ["relu"] * (len(depth_sizes) - 1), rng),
            DenseNet.init(fusion_sizes, ["relu"] * (len(fusion_sizes) - 2) + ["identity"], rng),
            stats,
            tuple(panel_size),
        )

    def params(self) -> list[np.ndarray]:
        return self.eye_branch.params() + self.depth_branch.params() + self.fusion_head.params()

    def forward(self, x: MatchInputs) -> tuple[np.ndarray, tuple]:
        """Raw (unclamped) normalized panel coordinates, (B, 2)."""
        zl = (x.left - self.norm_stats.mean) / self.norm_stats.std
        zr = (x.right - self.norm_stats.mean) / self.norm_stats.std
        el, cl = self.eye_branch.forward(zl)
        er, cr = self.eye_branch.forward(zr)
        dp, cd = self.depth_branch.forward(np.asarray(x.depth, dtype=float).reshape(-1, 1))
        h = np.concatenate([el, er, dp, x.head], axis=1)
        out, cf = self.fusion_head.forward(h)
        if not np.all(np.isfinite(out)):
            raise NonFinite("non-finite match output")
        return out, (cl, cr, cd, cf, el.shape[1], dp.shape[1])

    def backward(self, cache, grad_out: np.ndarray) -> list[np.ndarray]:
        cl, cr, cd, cf, ne, nd = cache
        gf, gh = self.fusion_head.backward(cf, grad_out)
        gl, _ = self.eye_branch.backward(cl, gh[:, :ne])
        gr, _ = self.eye_branch.backward(cr, gh[:, ne : 2 * ne])
        gd, _ = self.depth_branch.backward(cd, gh[:, 2 * ne : 2 * ne + nd])
        # shared eye weights: gradients from both applications accumulate
        ge = [a + b for a, b in zip(gl, gr)]
        return ge + gd + gf

    def kink_distance(self, cache) -> float:
        cl, cr, cd, cf, _, _ = cache
        return min(
            DenseNet.kink_distance(cl, self.eye_branch.layers),
            DenseNet.kink_distance(cr, self.eye_branch.layers),
            DenseNet.kink_distance(cd, self.depth_branch.layers),
            DenseNet.kink_distance(cf, self.fusion_head.layers),
        )

    def predict(self, x: MatchInputs) -> np.ndarray:
        """Panel points in meters, (B, 2), clamped to the panel."""
        out, _ = self.forward(x)
        return np.clip(out, 0.0, 1.0) * np.array(self.panel_size)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "eye_branch": self.eye_branch.to_dict(),
            "depth_branch": self.depth_branch.to_dict(),
            "fusion_head": self.fusion_head.to_dict(),
            "norm_stats": self.norm_stats.to_dict(),
            "panel_size": list(self.panel_size),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchNet":
        if d.get("format") != FORMAT:
            raise ValueError(f"expected format {FORMAT!r}, got {d.get('format')!r}")
        return cls(
            DenseNet.from_dict(d["eye_branch"]),
            DenseNet.from_dict(d["depth_branch"]),
            DenseNet.from_dict(d["fusion_head"]),
            NormStats(np.array(d["norm_stats"]["mean"]), np.array(d["norm_stats"]["std"])),
            tuple(d["panel_size"]),
            d.get("meta", {}),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str | Path) -> "MatchNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def match_forward(
    net: MatchNet, left: EyeFeature, right: EyeFeature, depth: float, head_point: tuple[float, float] = (0.5, 0.5)
) -> PanelPoint:
    if not depth > 0:
        raise ValueError("depth must be positive")
    x = MatchInputs(left.as_array()[None], right.as_array()[None], np.array([depth]), np.array([head_point], dtype=float))
    u, v = net.predict(x)[0]
    return PanelPoint(float(u), float(v))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.02
    momentum: float = 0.9
    epochs: int = 60
    batch: int = 64
    seed: int = 0
    lr_decay: float = 1.0  # multiplicative per epoch
    eye_hidden: tuple[int, ...] = (16, 16)
    depth_hidden: tuple[int, ...] = (4,)
    fusion_hidden: tuple[int, ...] = (32,)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("eye_hidden", "depth_hidden", "fusion_hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def fit(net: MatchNet, x: MatchInputs, target: np.ndarray, hyper: TrainConfig) -> list[float]:
    """Mini-batch SGD with momentum on the MSE to normalized targets.

    Returns the full-data loss before training followed by one value per epoch.
    """
    rng = np.random.default_rng(hyper.seed + 1)
    params = net.params()
    velocity = [np.zeros_like(p) for p in params]

    def full_loss() -> float:
        out, _ = net.forward(x)
        return mse(out, target)[0]

    curve = [full_loss()]
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(net, x, target, hyper, rng, params, velocity, curve, full_loss)
    return curve


def _run_epochs(net, x, target, hyper, rng, params, velocity, curve, full_loss):
    n = len(x)
    lr = hyper.lr
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch):
            idx = order[start : start + hyper.batch]
            try:
                out, cache = net.forward(x.take(idx))
            except NonFinite as exc:
                raise Diverged(str(exc)) from exc
            _, g = mse(out, target[idx])
            grads = net.backward(cache, g)
            for p, v, gr in zip(params, velocity, grads):
                v *= hyper.momentum
                v -= lr * gr
                p += v
        lr *= hyper.lr_decay
        try:
            loss = full_loss()
        except NonFinite as exc:
            raise Diverged(str(exc)) from exc
        if not np.isfinite(loss):
            raise Diverged(f"loss became {loss}")
        curve.append(loss)


def fit_new(x: MatchInputs, target: np.ndarray, hyper: TrainConfig, panel_size=(1.02, 1.38)) -> tuple[MatchNet, list[float]]:
    stats = NormStats.fit(np.concatenate([x.left, x.right]))
    rng = np.random.default_rng(hyper.seed)
    net = MatchNet.init(stats, rng, hyper.eye_hidden, hyper.depth_hidden, hyper.fusion_hidden, panel_size)
    curve = fit(net, x, target, hyper)
    return net, curve


def write_loss_csv(curve: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(curve):
            w.writerow([i, repr(float(loss))])

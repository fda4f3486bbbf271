"""Synthetic shelf-gaze datasets.

A user stands in front of the shelf at a given distance and lateral offset
and fixates a point in one grid cell for a dwell of several frames. Each
frame carries what the upstream detectors would report: 2D face landmarks,
per-eye gaze vectors and pixel positions, and a depth reading. Noise is added
per frame on top of a per-dwell gaze bias; accessories, side gaze and
bottom-row targets inflate the gaze noise.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .geometry import (
    CameraIntrinsics,
    GridCell,
    PanelConfig,
    PanelPoint,
    Pose,
    rotation_to_rvec,
)
from .headpose import FaceModel3D, LandmarkSet2D, head_rotation, load_face_model
from .nets.matchnet import EyeFeature, NormStats

SCHEMA = "ggm-synth-v1"
ACCESSORIES = ("glasses", "hat", "mask")
DISTANCES = (0.75, 1.0, 1.5)
LATERALS = (-0.5, 0.0, 0.5)
MAX_TRIES = 100


class UnreachableCell(RuntimeError):
    pass


class TooFewSamples(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    distance: float = 1.0
    lateral: float = 0.0
    height: float = 1.70
    accessories: tuple[str, ...] = ()
    side_gaze_deg: float = 0.0
    user_id: str = "u0"
    head_turn_deg: float = 0.0
    case: str = ""
    subcase: str = ""

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if abs(self.side_gaze_deg) > 30:
            raise ValueError("side_gaze_deg must lie in [-30, 30]")
        bad = set(self.accessories) - set(ACCESSORIES)
        if bad:
            raise ValueError(f"unknown accessories {sorted(bad)}")
        object.__setattr__(self, "accessories", tuple(sorted(self.accessories)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accessories"] = list(self.accessories)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["accessories"] = tuple(d.get("accessories", ()))
        return cls(**d)


@dataclass(frozen=True)
class NoiseModel:
    gaze_sigma: float = 0.0  # radians, per frame and eye
    landmark_sigma: float = 0.0  # pixels
    depth_sigma: float = 0.0  # meters
    accessory_penalty: float = 1.0  # per accessory worn
    downward_penalty: float = 1.0  # bottom two rows
    dwell_bias_sigma: float = 0.0  # radians, shared by both eyes for a whole dwell
    side_gaze_penalty: float = 1.0  # at 30 degrees of eye-in-head rotation, linear in angle

    def __post_init__(self):
        for name in ("gaze_sigma", "landmark_sigma", "depth_sigma", "dwell_bias_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("accessory_penalty", "downward_penalty", "side_gaze_penalty"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def scaled(self, factor: float) -> "NoiseModel":
        """Same model with both gaze noise terms multiplied by ``factor``."""
        return replace(self, gaze_sigma=self.gaze_sigma * factor, dwell_bias_sigma=self.dwell_bias_sigma * factor)

    def inflation(self, spec: ScenarioSpec, cell: GridCell, cfg: PanelConfig) -> float:
        f = self.accessory_penalty ** len(spec.accessories)
        if cell.row >= cfg.rows - 2:
            f *= self.downward_penalty
        eye_in_head = abs(spec.side_gaze_deg) + abs(spec.head_turn_deg)
        f *= 1 + (self.side_gaze_penalty - 1) * eye_in_head / 30.0
        return f

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SynthConfig:
    eye_offset: float = 0.12  # eye height below the top of the head
    ipd: float = 0.064
    head_follow: float = 0.6  # fraction of the gaze angle the head turns through
    fps: float = 7.5
    target_mode: str = "uniform"  # "uniform" inside the cell or "center"

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


@dataclass
class GazeSample:
    user_id: str
    scenario: ScenarioSpec
    target_cell: GridCell
    landmarks: LandmarkSet2D
    left: EyeFeature
    right: EyeFeature
    depth: float
    true_pose: Pose
    true_panel_point: PanelPoint
    timestamp: float
    dwell_id: int = 0
    frame: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "user_id": self.user_id,
            "scenario": self.scenario.to_dict(),
            "target_cell": self.target_cell.index,
            "landmarks": self.landmarks.to_dict(),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "depth": self.depth,
            "true_pose": self.true_pose.to_dict(),
            "true_panel_point": [self.true_panel_point.u, self.true_panel_point.v],
            "timestamp": self.timestamp,
            "dwell_id": self.dwell_id,
            "frame": self.frame,
        }

    @classmethod
    def from_dict(cls, d: dict, cols: int = 6) -> "GazeSample":
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported sample schema {d.get('schema')!r}")
        return cls(
            d["user_id"],
            ScenarioSpec.from_dict(d["scenario"]),
            GridCell(int(d["target_cell"]), cols),
            LandmarkSet2D.from_dict(d["landmarks"]),
            EyeFeature.from_dict(d["left"]),
            EyeFeature.from_dict(d["right"]),
            float(d["depth"]),
            Pose.from_dict(d["true_pose"]),
            PanelPoint(*d["true_panel_point"]),
            float(d["timestamp"]),
            int(d.get("dwell_id", 0)),
            int(d.get("frame", 0)),
        )


def write_jsonl(samples: Iterable[GazeSample], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), separators=(",", ":")) + "\n")


def read_jsonl(path: str | Path, cols: int = 6) -> list[GazeSample]:
    with open(path) as fh:
        return [GazeSample.from_dict(json.loads(line), cols) for line in fh if line.strip()]


# generation


def _tangent_basis(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([0.0, 1.0, 0.0]) if abs(d[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(d, e1)


def perturb_direction(d: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Small-angle isotropic perturbation: ~N(0, sigma) radians along each tangent axis."""
    e1, e2 = _tangent_basis(d)
    n = rng.normal(0.0, sigma, size=2) if sigma > 0 else np.zeros(2)
    out = d + n[0] * e1 + n[1] * e2
    return out / np.linalg.norm(out)


def _yaw_pitch(d: np.ndarray) -> tuple[float, float]:
    return math.atan2(d[0], -d[2]), math.atan2(d[1], math.hypot(d[0], d[2]))


def _from_yaw_pitch(yaw: float, pitch: float) -> np.ndarray:
    return np.array([math.sin(yaw) * math.cos(pitch), math.sin(pitch), -math.cos(yaw) * math.cos(pitch)])


def eye_midpoint(spec: ScenarioSpec, cfg: PanelConfig, synth: SynthConfig) -> np.ndarray:
    """World position of the point between the eyes."""
    return np.array([cfg.width / 2 + spec.lateral, cfg.height_to_v(spec.height - synth.eye_offset), spec.distance])


def choose_cells(n_cells: int, cells_per_spec: int, rng: np.random.Generator) -> list[int]:
    if cells_per_spec == n_cells:
        return list(range(1, n_cells + 1))
    if cells_per_spec < n_cells:
        return sorted(int(c) + 1 for c in rng.choice(n_cells, size=cells_per_spec, replace=False))
    return [int(c) + 1 for c in rng.integers(0, n_cells, size=cells_per_spec)]


@dataclass
class Generator:
    panel: PanelConfig = field(default_factory=PanelConfig)
    intr: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    face: FaceModel3D = field(default_factory=load_face_model)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def dwell(
        self,
        spec: ScenarioSpec,
        cell: GridCell,
        frames: int,
        noise: NoiseModel,
        rng: np.random.Generator,
        dwell_id: int = 0,
        t0: float = 0.0,
        side_sign: float = 1.0,
    ) -> list[GazeSample]:
        cfg, synth = self.panel, self.synth
        u0, v0 = cell.col * cfg.cell_w, cell.row * cfg.cell_h
        if synth.target_mode == "center":
            target = np.array([u0 + cfg.cell_w / 2, v0 + cfg.cell_h / 2, 0.0])
        elif synth.target_mode == "uniform":
            target = np.array([u0 + rng.uniform() * cfg.cell_w, v0 + rng.uniform() * cfg.cell_h, 0.0])
        else:
            raise ValueError(f"unknown target_mode {synth.target_mode!r}")

        mid = eye_midpoint(spec, cfg, synth)
        gaze_mid = target - mid
        gaze_mid /= np.linalg.norm(gaze_mid)
        yaw, pitch = _yaw_pitch(gaze_mid)
        head_yaw = synth.head_follow * yaw + side_sign * math.radians(spec.side_gaze_deg + spec.head_turn_deg)
        head_pitch = synth.head_follow * pitch
        R = head_rotation(_from_yaw_pitch(head_yaw, head_pitch))
        cam = cfg.camera_position
        t_cam = mid - cam
        pose = Pose(tuple(rotation_to_rvec(R)), tuple(t_cam))

        half = np.array([synth.ipd / 2, 0.0, 0.0])
        eyes_world = [mid + R @ -half, mid + R @ half]
        true_dirs = [(target - e) / np.linalg.norm(target - e) for e in eyes_world]
        eyes_cam = [e - cam for e in eyes_world]
        face_cam = self.face.points @ R.T + t_cam
        intr = self.intr
        face_px = np.column_stack([intr.fx * face_cam[:, 0] / face_cam[:, 2] + intr.cx, intr.fy * face_cam[:, 1] / face_cam[:, 2] + intr.cy])
        eye_px = [np.array([intr.fx * e[0] / e[2] + intr.cx, intr.fy * e[1] / e[2] + intr.cy]) for e in eyes_cam]
        true_depth = float(np.linalg.norm(t_cam))

        infl = noise.inflation(spec, cell, cfg)
        for _ in range(MAX_TRIES):
            bias_axes = rng.normal(0.0, noise.dwell_bias_sigma * infl, size=2) if noise.dwell_bias_sigma > 0 else np.zeros(2)
            samples = []
            for f in range(frames):
                gazes = []
                for d in true_dirs:
                    e1, e2 = _tangent_basis(d)
                    b = d + bias_axes[0] * e1 + bias_axes[1] * e2
                    b /= np.linalg.norm(b)
                    gazes.append(perturb_direction(b, noise.gaze_sigma * infl, rng))
                lm_noise = rng.normal(0.0, noise.landmark_sigma, size=face_px.shape) if noise.landmark_sigma > 0 else 0.0
                px_noise = rng.normal(0.0, noise.landmark_sigma, size=(2, 2)) if noise.landmark_sigma > 0 else np.zeros((2, 2))
                depth = true_depth + (rng.normal(0.0, noise.depth_sigma) if noise.depth_sigma > 0 else 0.0)
                if any(g[2] > -1e-6 for g in gazes) or depth <= 0:
                    break
                samples.append(
                    GazeSample(
                        spec.user_id,
                        spec,
                        cell,
                        LandmarkSet2D(self.face.names, face_px + lm_noise),
                        EyeFeature(tuple(gazes[0]), tuple(eye_px[0] + px_noise[0])),
                        EyeFeature(tuple(gazes[1]), tuple(eye_px[1] + px_noise[1])),
                        depth,
                        pose,
                        PanelPoint(float(target[0]), float(target[1])),
                        t0 + f / synth.fps,
                        dwell_id,
                        f,
                    )
                )
            else:
                return samples
        raise UnreachableCell(f"cell {cell.index} for {spec.user_id}: gaze ray misses the panel after {MAX_TRIES} tries")


def generate(
    specs: list[ScenarioSpec],
    cells_per_spec: int,
    frames_per_dwell: int,
    noise: NoiseModel,
    seed: int,
    gen: Generator | None = None,
    alternate_side: bool = True,
) -> list[GazeSample]:
    """One dwell per (spec, chosen cell); side-gaze direction alternates between dwells."""
    gen = gen or Generator()
    rng = np.random.default_rng(seed)
    out: list[GazeSample] = []
    dwell_id = 0
    t = 0.0
    dwell_len = frames_per_dwell / gen.synth.fps
    for spec in specs:
        for cell_idx in choose_cells(gen.panel.n_cells, cells_per_spec, rng):
            sign = -1.0 if alternate_side and dwell_id % 2 else 1.0
            out += gen.dwell(spec, GridCell(cell_idx, gen.panel.cols), frames_per_dwell, noise, rng, dwell_id, t, sign)
            dwell_id += 1
            t += dwell_len
    return out


# scenario suites


def grid_specs(heights=(1.70,), distances=DISTANCES, laterals=LATERALS) -> list[ScenarioSpec]:
    """The 3 distances x 3 lateral positions acquisition grid."""
    return [
        ScenarioSpec(distance=d, lateral=l, height=h, user_id=f"u{i}")
        for i, h in enumerate(heights)
        for d in distances
        for l in laterals
    ]


SUBCASES = {
    "A": ((), 0.0),
    "B": ((), 30.0),
    "C": ("accessory", 0.0),
    "D": ("accessory", 30.0),
}

USER_CASES = {
    # case: (user heights in meters, lateral positions, head turn degrees)
    "USER CASE 1": ((1.55, 1.75), (-0.5, 0.5), 0.0),
    "USER CASE 2": ((1.65, 1.85), (-0.5, 0.5), 0.0),
    "USER CASE 3": ((1.70,), (0.0,), 15.0),
}


@dataclass(frozen=True)
class Trial:
    spec: ScenarioSpec
    cells: tuple[int, ...]


def user_case_trials(seed: int, points: int = 10, distances=DISTANCES, height_jitter: float = 0.05, head_turn: float | None = None) -> list[Trial]:
    """Trial plan for the three user cases: each user gazes at ``points`` cells per sub-case.

    Two-user cases give 2 x 4 x points trials per distance, the one-user case 4 x points.
    """
    rng = np.random.default_rng(seed)
    plan = []
    for case, (heights, laterals, turn) in USER_CASES.items():
        if head_turn is not None and case == "USER CASE 3":
            turn = head_turn
        for d in distances:
            for k, (h, lat) in enumerate(zip(heights, laterals)):
                height = h + rng.uniform(-height_jitter, height_jitter)
                uid = f"{case[-1]}{'ab'[k]}"
                for sub, (acc, side) in SUBCASES.items():
                    accessories = (ACCESSORIES[(k + int(case[-1])) % 3],) if acc else ()
                    spec = ScenarioSpec(d, lat, height, accessories, side, uid, turn, case, sub)
                    cells = choose_cells(36, points, rng)
                    plan.append(Trial(spec, tuple(cells)))
    return plan


def generate_trials(plan: list[Trial], frames_per_dwell: int, noise: NoiseModel, seed: int, gen: Generator | None = None) -> list[GazeSample]:
    gen = gen or Generator()
    rng = np.random.default_rng(seed)
    out: list[GazeSample] = []
    dwell_id = 0
    dwell_len = frames_per_dwell / gen.synth.fps
    for trial in plan:
        for c in trial.cells:
            sign = -1.0 if dwell_id % 2 else 1.0
            out += gen.dwell(trial.spec, GridCell(c, gen.panel.cols), frames_per_dwell, noise, rng, dwell_id, dwell_id * dwell_len, sign)
            dwell_id += 1
    return out


def training_specs(seed: int, n_users: int = 5, distances=DISTANCES, laterals=LATERALS) -> list[ScenarioSpec]:
    """Users of assorted heights across the acquisition grid and all sub-cases."""
    rng = np.random.default_rng(seed)
    heights = np.linspace(1.52, 1.90, n_users)
    specs = []
    for i, h in enumerate(heights):
        for d in distances:
            for l in laterals:
                for sub, (acc, side) in SUBCASES.items():
                    accessories = (ACCESSORIES[i % 3],) if acc else ()
                    turn = float(rng.choice([0.0, 15.0]))
                    specs.append(ScenarioSpec(d, l, float(h), accessories, side, f"t{i}", turn, "train", sub))
    return specs


# statistics


def sample_feature_matrix(samples: list[GazeSample]) -> np.ndarray:
    """Rows of [left eye block (5), right eye block (5), depth]."""
    return np.array([np.concatenate([s.left.as_array(), s.right.as_array(), [s.depth]]) for s in samples])


@dataclass
class DatasetStats:
    mean: np.ndarray
    std: np.ndarray
    cell_counts: dict[int, int]
    degenerate: bool

    def eye_norm_stats(self) -> NormStats:
        """Pooled left/right statistics for the shared eye branch."""
        m = (self.mean[:5] + self.mean[5:10]) / 2
        # pooled variance of two equal-size groups
        var = (self.std[:5] ** 2 + self.std[5:10] ** 2) / 2 + ((self.mean[:5] - self.mean[5:10]) / 2) ** 2
        stats = NormStats(m, np.sqrt(var))
        stats.check()
        return stats


def dataset_stats(samples: list[GazeSample]) -> DatasetStats:
    if len(samples) < 2:
        raise TooFewSamples(f"need at least 2 samples, got {len(samples)}")
    x = sample_feature_matrix(samples)
    mean, std = x.mean(axis=0), x.std(axis=0)
    counts = Counter(s.target_cell.index for s in samples)
    return DatasetStats(mean, std, dict(sorted(counts.items())), bool(np.any(std == 0)))

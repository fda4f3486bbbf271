"""Coordinate frames, the shelf grid, pinhole projection and IoU scoring.

World frame: the panel lies in the plane z = 0 with its origin at the panel's
top-left corner, x to the right along the width, y downward along the height
and z pointing out of the shelf toward the user. The camera sits in the panel
plane and looks along world +z; its axes are parallel to the world axes, so
camera -> world is a pure translation by the camera position.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class GeometryError(ValueError):
    pass


class PointBehindCamera(GeometryError):
    pass


class RayParallel(GeometryError):
    pass


class RayAway(GeometryError):
    pass


class OffPanel(GeometryError):
    pass


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# PanelConfig


@dataclass(frozen=True)
class PanelConfig:
    cols: int = 6
    rows: int = 6
    cell_w: float = 0.17
    cell_h: float = 0.23
    camera_height: float = 1.5
    panel_bottom_height: float = 0.35
    # horizontal camera position measured from the panel's left edge; None = centered
    camera_u: float | None = None

    def __post_init__(self):
        if not isinstance(self.cols, int) or self.cols < 1:
            raise ConfigError("cols", f"must be an integer >= 1, got {self.cols!r}")
        if not isinstance(self.rows, int) or self.rows < 1:
            raise ConfigError("rows", f"must be an integer >= 1, got {self.rows!r}")
        if not self.cell_w > 0:
            raise ConfigError("cell_w", f"must be > 0, got {self.cell_w!r}")
        if not self.cell_h > 0:
            raise ConfigError("cell_h", f"must be > 0, got {self.cell_h!r}")

    @property
    def width(self) -> float:
        return self.cols * self.cell_w

    @property
    def height(self) -> float:
        return self.rows * self.cell_h

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def panel_top_height(self) -> float:
        return self.panel_bottom_height + self.height

    @property
    def camera_position(self) -> np.ndarray:
        """Camera optical center in world coordinates."""
        u = self.width / 2 if self.camera_u is None else self.camera_u
        return np.array([u, self.panel_top_height - self.camera_height, 0.0])

    def height_to_v(self, height_above_ground: float) -> float:
        """World y (down from panel top) of a point at the given height above ground."""
        return self.panel_top_height - height_above_ground

    @classmethod
    def from_dict(cls, d: dict) -> "PanelConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 340.0
    fy: float = 340.0
    cx: float = 320.0
    cy: float = 240.0
    width: float = 640.0
    height: float = 480.0

    def __post_init__(self):
        if not self.fx > 0:
            raise ConfigError("fx", "must be > 0")
        if not self.fy > 0:
            raise ConfigError("fy", "must be > 0")
        if not 0 <= self.cx < self.width:
            raise ConfigError("cx", "must lie in [0, width)")
        if not 0 <= self.cy < self.height:
            raise ConfigError("cy", "must lie in [0, height)")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def in_bounds(self, px: np.ndarray) -> np.ndarray:
        px = np.asarray(px, dtype=float)
        return (px[..., 0] >= 0) & (px[..., 0] < self.width) & (px[..., 1] >= 0) & (px[..., 1] < self.height)

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path) -> tuple[PanelConfig, CameraIntrinsics]:
    """Read ``{"panel": {...}, "camera": {...}}`` from a JSON file."""
    with open(path) as fh:
        raw = json.load(fh)
    return PanelConfig.from_dict(raw.get("panel", {})), CameraIntrinsics.from_dict(raw.get("camera", {}))


# Rotations and poses


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(rvec) -> np.ndarray:
    """Axis-angle 3-vector -> 3x3 rotation matrix."""
    rvec = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-12:
        return np.eye(3) + _skew(rvec)
    k = _skew(rvec / theta)
    return np.eye(3) + math.sin(theta) * k + (1 - math.cos(theta)) * (k @ k)


def rodrigues_batch(rvecs: np.ndarray) -> np.ndarray:
    """(B,3) axis-angle -> (B,3,3) rotation matrices."""
    rvecs = np.asarray(rvecs, dtype=float)
    theta = np.linalg.norm(rvecs, axis=-1)
    safe = np.where(theta < 1e-12, 1.0, theta)
    k = rvecs / safe[:, None]
    K = np.zeros(rvecs.shape[:-1] + (3, 3))
    K[:, 0, 1], K[:, 0, 2] = -k[:, 2], k[:, 1]
    K[:, 1, 0], K[:, 1, 2] = k[:, 2], -k[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -k[:, 1], k[:, 0]
    s = np.sin(theta)[:, None, None]
    c = (1 - np.cos(theta))[:, None, None]
    R = np.eye(3) + s * K + c * (K @ K)
    small = theta < 1e-12
    if np.any(small):
        S = np.zeros((int(small.sum()), 3, 3))
        r = rvecs[small]
        S[:, 0, 1], S[:, 0, 2] = -r[:, 2], r[:, 1]
        S[:, 1, 0], S[:, 1, 2] = r[:, 2], -r[:, 0]
        S[:, 2, 0], S[:, 2, 1] = -r[:, 1], r[:, 0]
        R[small] = np.eye(3) + S
    return R


def rotation_to_rvec(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rodrigues`; result has norm in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1) / 2, -1.0, 1.0)
    theta = math.acos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-7:
        return w / 2
    if math.pi - theta < 1e-5:
        # near pi the antisymmetric part vanishes; read the axis off R + I
        B = (R + np.eye(3)) / 2
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / math.sqrt(max(B[i, i], 1e-300))
        axis /= np.linalg.norm(axis)
        if np.dot(axis, w) < 0:
            axis = -axis
        return axis * theta
    return w * (theta / (2 * math.sin(theta)))


def canonical_rvec(rvec) -> np.ndarray:
    return rotation_to_rvec(rodrigues(rvec))


@dataclass(frozen=True)
class Pose:
    """Rigid transform head-local -> camera frame (axis-angle + translation, meters)."""

    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "rotation", tuple(float(x) for x in self.rotation))
        object.__setattr__(self, "translation", tuple(float(x) for x in self.translation))

    @property
    def R(self) -> np.ndarray:
        return rodrigues(self.rotation)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.R.T + self.t

    def canonical(self) -> "Pose":
        return Pose(tuple(canonical_rvec(self.rotation)), self.translation)

    def to_dict(self) -> dict:
        return {"rotation": list(self.rotation), "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(tuple(d["rotation"]), tuple(d["translation"]))


def project(intrinsics: CameraIntrinsics, pose: Pose, point3d) -> np.ndarray:
    pc = pose.apply(np.asarray(point3d, dtype=float))
    if pc[2] <= 1e-9:
        raise PointBehindCamera(f"point at camera depth {pc[2]:.3g} m")
    return np.array([intrinsics.fx * pc[0] / pc[2] + intrinsics.cx, intrinsics.fy * pc[1] / pc[2] + intrinsics.cy])


def project_points(intrinsics: CameraIntrinsics, pc: np.ndarray) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels (..., 2); no depth check."""
    pc = np.asarray(pc, dtype=float)
    z = pc[..., 2]
    return np.stack([intrinsics.fx * pc[..., 0] / z + intrinsics.cx, intrinsics.fy * pc[..., 1] / z + intrinsics.cy], axis=-1)


def backproject(intrinsics: CameraIntrinsics, px, depth: float) -> np.ndarray:
    """Pixel + camera-frame z -> camera-frame point."""
    px = np.asarray(px, dtype=float)
    return np.array([(px[0] - intrinsics.cx) * depth / intrinsics.fx, (px[1] - intrinsics.cy) * depth / intrinsics.fy, depth])


def camera_to_world(cfg: PanelConfig, p) -> np.ndarray:
    return np.asarray(p, dtype=float) + cfg.camera_position


def world_to_camera(cfg: PanelConfig, p) -> np.ndarray:
    return np.asarray(p, dtype=float) - cfg.camera_position


# Panel and grid


@dataclass(frozen=True)
class PanelPoint:
    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])

    def on_panel(self, cfg: PanelConfig) -> bool:
        return 0 <= self.u < cfg.width and 0 <= self.v < cfg.height


@dataclass(frozen=True, order=True)
class GridCell:
    index: int
    cols: int = field(default=6, compare=False)

    @property
    def row(self) -> int:
        return (self.index - 1) // self.cols

    @property
    def col(self) -> int:
        return (self.index - 1) % self.cols

    @classmethod
    def from_row_col(cls, row: int, col: int, cols: int = 6) -> "GridCell":
        return cls(row * cols + col + 1, cols)


def intersect_panel(origin, direction, cfg: PanelConfig) -> PanelPoint:
    """Hit point of a world-frame ray with the panel plane z = 0."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    if abs(direction[2]) < 1e-12:
        raise RayParallel("ray is parallel to the panel plane")
    t = -origin[2] / direction[2]
    if t < 0:
        raise RayAway("ray points away from the panel")
    hit = origin + t * direction
    return PanelPoint(float(hit[0]), float(hit[1]))


def intersect_panel_batch(origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Vectorized ray/plane hit; rows that are parallel or point away come back as NaN."""
    origins = np.asarray(origins, dtype=float)
    directions = np.asarray(directions, dtype=float)
    dz = directions[..., 2]
    ok = np.abs(dz) >= 1e-12
    t = np.where(ok, -origins[..., 2] / np.where(ok, dz, 1.0), np.nan)
    t = np.where(t >= 0, t, np.nan)
    return origins[..., :2] + t[..., None] * directions[..., :2]


def point_to_cell(p: PanelPoint, cfg: PanelConfig) -> GridCell:
    if not p.on_panel(cfg):
        raise OffPanel(f"({p.u:.4f}, {p.v:.4f}) lies outside the {cfg.width:.3f} x {cfg.height:.3f} m panel")
    col = min(int(math.floor(p.u / cfg.cell_w)), cfg.cols - 1)
    row = min(int(math.floor(p.v / cfg.cell_h)), cfg.rows - 1)
    return GridCell.from_row_col(row, col, cfg.cols)


def cell_center(cell: GridCell | int, cfg: PanelConfig) -> PanelPoint:
    if isinstance(cell, int):
        cell = GridCell(cell, cfg.cols)
    return PanelPoint((cell.col + 0.5) * cfg.cell_w, (cell.row + 0.5) * cfg.cell_h)


def cell_rect(cell: GridCell, cfg: PanelConfig) -> tuple[float, float, float, float]:
    """(u0, v0, u1, v1) of a cell."""
    u0, v0 = cell.col * cfg.cell_w, cell.row * cfg.cell_h
    return u0, v0, u0 + cfg.cell_w, v0 + cfg.cell_h


def rect_iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    if inter <= 0:
        return 0.0
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def iou_with_cell(pred_center: PanelPoint, cell: GridCell, cfg: PanelConfig) -> float:
    """IoU of a cell-sized box centered on the prediction against the target cell.

    Both boxes have the same size, so the overlap follows from the center
    offset alone; this keeps the centered case exactly 1.0.
    """
    c = cell_center(cell, cfg)
    iw = max(0.0, cfg.cell_w - abs(pred_center.u - c.u))
    ih = max(0.0, cfg.cell_h - abs(pred_center.v - c.v))
    inter = iw * ih
    if inter <= 0:
        return 0.0
    area = cfg.cell_w * cfg.cell_h
    return inter / (2 * area - inter)


def iou_offsets(du: np.ndarray, dv: np.ndarray, cfg: PanelConfig) -> np.ndarray:
    """Vectorized :func:`iou_with_cell` from prediction-minus-center offsets."""
    iw = np.maximum(0.0, cfg.cell_w - np.abs(du))
    ih = np.maximum(0.0, cfg.cell_h - np.abs(dv))
    inter = iw * ih
    area = cfg.cell_w * cfg.cell_h
    return inter / (2 * area - inter)

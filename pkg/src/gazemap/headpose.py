"""Head pose from 2D landmarks and a 3D face model (Levenberg-Marquardt PnP).

The solver works on a batch of independent problems that share one face
model, so per-frame pose estimation over a whole dataset is a handful of
vectorized iterations rather than thousands of Python loops. The pose update
is a left perturbation ``R <- exp([d_rot]x) R, t <- t + d_t``; the Jacobian
is taken with respect to those six increments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, PanelConfig, Pose, rodrigues, rodrigues_batch, rotation_to_rvec

DATA_DIR = Path(__file__).parent / "data"

REQUIRED_LANDMARKS = ("nose_tip", "chin", "left_eye_outer", "right_eye_outer", "left_mouth", "right_mouth")

MAX_ITERS = 100
STEP_TOL = 1e-10
GRAD_TOL = 1e-8
LAMBDA0 = 1e-3


class HeadPoseError(ValueError):
    pass


class DegenerateConfiguration(HeadPoseError):
    pass


class NoConvergence(HeadPoseError):
    pass


@dataclass(frozen=True)
class FaceModel3D:
    names: tuple[str, ...]
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != len(pts):
            raise ValueError("names and points differ in length")

    def check(self, require_named: bool = True) -> None:
        if len(self.names) < 6:
            raise DegenerateConfiguration(f"need at least 6 correspondences, model has {len(self.names)}")
        if require_named:
            missing = [n for n in REQUIRED_LANDMARKS if n not in self.names]
            if missing:
                raise ValueError(f"face model lacks landmarks: {missing}")
        centered = self.points - self.points.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        if s[0] == 0 or s[-1] / s[0] < 1e-6:
            raise DegenerateConfiguration("model points are coplanar or collinear")

    def subset(self, names) -> "FaceModel3D":
        idx = [self.names.index(n) for n in names]
        return FaceModel3D(tuple(names), self.points[idx])

    def point(self, name: str) -> np.ndarray:
        return self.points[self.names.index(name)]

    @classmethod
    def from_dict(cls, d: dict) -> "FaceModel3D":
        return cls(tuple(d), np.array([d[k] for k in d], dtype=float))

    def to_dict(self) -> dict:
        return {n: [float(x) for x in p] for n, p in zip(self.names, self.points)}


def load_face_model(path: str | Path | None = None) -> FaceModel3D:
    path = DATA_DIR / "face_model.json" if path is None else Path(path)
    with open(path) as fh:
        return FaceModel3D.from_dict(json.load(fh))


@dataclass(frozen=True)
class LandmarkSet2D:
    names: tuple[str, ...]
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "names", tuple(self.names))

    def aligned_to(self, model: FaceModel3D) -> np.ndarray:
        if set(self.names) != set(model.names) or len(self.names) != len(model.names):
            raise ValueError("landmark names do not match the face model")
        order = [self.names.index(n) for n in model.names]
        return self.points[order]

    def to_dict(self) -> dict:
        return {n: [float(x) for x in p] for n, p in zip(self.names, self.points)}

    @classmethod
    def from_dict(cls, d: dict) -> "LandmarkSet2D":
        return cls(tuple(d), np.array([d[k] for k in d], dtype=float))


@dataclass(frozen=True)
class PoseEstimate:
    pose: Pose
    reprojection_rmse: float
    iterations: int
    converged: bool
    cost_trace: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "pose": self.pose.to_dict(),
            "reprojection_rmse": self.reprojection_rmse,
            "iterations": self.iterations,
            "converged": self.converged,
        }


# Residuals and Jacobian


def _camera_points(X: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    # X (N,3), R (B,3,3), t (B,3) -> (B,N,3)
    return np.einsum("bij,nj->bni", R, X) + t[:, None, :]


def _residuals(pc: np.ndarray, obs: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    z = pc[..., 2]
    u = intr.fx * pc[..., 0] / z + intr.cx
    v = intr.fy * pc[..., 1] / z + intr.cy
    return np.stack([u, v], axis=-1) - obs


def jacobian(X: np.ndarray, R: np.ndarray, t: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    """d(residual)/d(rot increment, trans increment): (B, N, 2, 6)."""
    rx = np.einsum("bij,nj->bni", R, X)
    pc = rx + t[:, None, :]
    x, y, z = pc[..., 0], pc[..., 1], pc[..., 2]
    B, N = x.shape
    dproj = np.zeros((B, N, 2, 3))
    dproj[..., 0, 0] = intr.fx / z
    dproj[..., 0, 2] = -intr.fx * x / z**2
    dproj[..., 1, 1] = intr.fy / z
    dproj[..., 1, 2] = -intr.fy * y / z**2
    # d(exp([w]x) p)/dw at w=0 is -[p]x
    neg_skew = np.zeros((B, N, 3, 3))
    neg_skew[..., 0, 1], neg_skew[..., 0, 2] = rx[..., 2], -rx[..., 1]
    neg_skew[..., 1, 0], neg_skew[..., 1, 2] = -rx[..., 2], rx[..., 0]
    neg_skew[..., 2, 0], neg_skew[..., 2, 1] = rx[..., 1], -rx[..., 0]
    J = np.empty((B, N, 2, 6))
    J[..., :3] = dproj @ neg_skew
    J[..., 3:] = dproj
    return J


def perturbed_residuals(X, obs, intr, R, t, delta) -> np.ndarray:
    """Residuals after applying the 6-vector increment ``delta`` to (R, t); single problem."""
    delta = np.asarray(delta, dtype=float)
    R2 = rodrigues(delta[:3]) @ R
    pc = _camera_points(X, R2[None], (t + delta[3:])[None])
    return _residuals(pc, obs[None], intr)[0]


@dataclass
class BatchResult:
    rvecs: np.ndarray
    tvecs: np.ndarray
    rmse: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    cost_traces: list[list[float]] | None = None


def solve_pnp_batch(
    model_points: np.ndarray,
    obs: np.ndarray,
    intr: CameraIntrinsics,
    init_rvecs: np.ndarray | None = None,
    init_tvecs: np.ndarray | None = None,
    max_iters: int = MAX_ITERS,
    trace: bool = False,
) -> BatchResult:
    """Minimize the summed squared reprojection error for B problems at once.

    ``model_points`` is (N,3), ``obs`` is (B,N,2). Each problem keeps its own
    damping factor and stops independently.
    """
    X = np.asarray(model_points, dtype=float)
    obs = np.asarray(obs, dtype=float)
    B, N = obs.shape[:2]
    rv0 = np.zeros((B, 3)) if init_rvecs is None else np.broadcast_to(init_rvecs, (B, 3)).astype(float)
    t = np.tile([0.0, 0.0, 1.0], (B, 1)) if init_tvecs is None else np.broadcast_to(init_tvecs, (B, 3)).astype(float).copy()
    R = rodrigues_batch(rv0)

    def cost_of(R_, t_, obs_):
        pc = _camera_points(X, R_, t_)
        r = _residuals(pc, obs_, intr)
        c = np.sum(r**2, axis=(1, 2))
        return np.where(np.all(pc[..., 2] > 1e-9, axis=1), c, np.inf)

    cost = cost_of(R, t, obs)
    lam = np.full(B, LAMBDA0)
    iters = np.zeros(B, dtype=int)
    done = np.zeros(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    traces = [[float(c)] for c in cost] if trace else None

    for _ in range(max_iters):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        Ra, ta, oa = R[act], t[act], obs[act]
        pc = _camera_points(X, Ra, ta)
        r = _residuals(pc, oa, intr).reshape(act.size, 2 * N)
        J = jacobian(X, Ra, ta, intr).reshape(act.size, 2 * N, 6)
        g = np.einsum("bki,bk->bi", J, r)
        H = np.einsum("bki,bkj->bij", J, J)
        iters[act] += 1

        small_grad = np.linalg.norm(g, axis=1) < GRAD_TOL
        diag = np.einsum("bii->bi", H)
        A = H + (lam[act][:, None] * (diag + 1e-12))[:, :, None] * np.eye(6)
        step = -np.linalg.solve(A, g[..., None])[..., 0]
        small_step = np.linalg.norm(step, axis=1) < STEP_TOL
        stop = small_grad | small_step
        converged[act[stop]] = True
        done[act[stop]] = True

        go = ~stop
        if not np.any(go):
            continue
        idx = act[go]
        st = step[go]
        R_new = rodrigues_batch(st[:, :3]) @ R[idx]
        t_new = t[idx] + st[:, 3:]
        c_new = cost_of(R_new, t_new, obs[idx])
        better = c_new < cost[idx]
        acc, rej = idx[better], idx[~better]
        R[acc], t[acc], cost[acc] = R_new[better], t_new[better], c_new[better]
        lam[acc] /= 10
        lam[rej] *= 10
        if trace:
            for b in acc:
                traces[b].append(float(cost[b]))

    rvecs = np.array([rotation_to_rvec(Ri) for Ri in R])
    rmse = np.sqrt(cost / N)
    return BatchResult(rvecs, t, rmse, iters, converged, traces)


def solve_pnp(
    model: FaceModel3D,
    obs: LandmarkSet2D,
    intr: CameraIntrinsics,
    init: Pose | None = None,
    max_iters: int = MAX_ITERS,
    rmse_threshold: float = 2.0,
    require_named: bool = False,
) -> PoseEstimate:
    """Estimate the head-local -> camera pose from named 2D/3D correspondences."""
    model.check(require_named=require_named)
    pts2d = obs.aligned_to(model)
    init = init or Pose()
    res = solve_pnp_batch(
        model.points, pts2d[None], intr, np.array(init.rotation)[None], np.array(init.translation)[None], max_iters, trace=True
    )
    rmse = float(res.rmse[0])
    conv = bool(res.converged[0]) and np.isfinite(rmse)
    if not conv and not rmse <= rmse_threshold:
        raise NoConvergence(f"no convergence after {int(res.iterations[0])} iterations (rmse {rmse:.3g} px)")
    return PoseEstimate(Pose(tuple(res.rvecs[0]), tuple(res.tvecs[0])), rmse, int(res.iterations[0]), conv, tuple(res.cost_traces[0]))


def forward_axis(pose: Pose, camera_rotation: np.ndarray | None = None) -> np.ndarray:
    """World-frame unit vector the face points along (head-local -z)."""
    d = pose.R @ np.array([0.0, 0.0, -1.0])
    if camera_rotation is not None:
        d = np.asarray(camera_rotation) @ d
    return d / np.linalg.norm(d)


def forward_axes(rvecs: np.ndarray) -> np.ndarray:
    R = rodrigues_batch(rvecs)
    return -R[:, :, 2]


def head_panel_points(rvecs: np.ndarray, tvecs: np.ndarray, cfg: PanelConfig) -> np.ndarray:
    """Where each head's forward axis meets the panel; NaN when it does not."""
    from .geometry import intersect_panel_batch

    origins = np.asarray(tvecs) + cfg.camera_position
    return intersect_panel_batch(origins, forward_axes(rvecs))


def head_rotation(forward: np.ndarray) -> np.ndarray:
    """Roll-free rotation whose head-local -z axis maps to ``forward``."""
    f = np.asarray(forward, dtype=float)
    f = f / np.linalg.norm(f)
    z = -f
    down = np.array([0.0, 1.0, 0.0])
    x = np.cross(down, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])

"""Turn gaze samples into matcher inputs.

The head-pose feature comes from running the PnP solver on each sample's 2D
landmarks, so the learned matcher sees the estimated pose, not the truth.
"""

from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, PanelConfig, backproject
from .headpose import FaceModel3D, head_panel_points, load_face_model, solve_pnp_batch
from .nets.matchnet import MatchInputs

HEAD_CLIP = (-0.5, 1.5)


def estimate_head_points(
    samples, cfg: PanelConfig, intr: CameraIntrinsics, face: FaceModel3D | None = None
) -> np.ndarray:
    """(B, 2) head forward-axis panel hits normalized by panel size.

    Misses (NaN) fall back to the panel center; far hits are clipped.
    """
    face = face or load_face_model()
    if not samples:
        return np.zeros((0, 2))
    obs = np.array([s.landmarks.aligned_to(face) for s in samples])
    # start from the eye midpoint back-projected at the measured depth
    init_t = np.array([backproject(intr, (np.add(s.left.eye_px, s.right.eye_px)) / 2, s.depth) for s in samples])
    res = solve_pnp_batch(face.points, obs, intr, None, init_t)
    hits = head_panel_points(res.rvecs, res.tvecs, cfg) / np.array([cfg.width, cfg.height])
    hits = np.where(np.isfinite(hits), hits, 0.5)
    return np.clip(hits, *HEAD_CLIP)


def build_inputs(samples, cfg: PanelConfig, intr: CameraIntrinsics, face: FaceModel3D | None = None) -> MatchInputs:
    left = np.array([s.left.as_array() for s in samples]).reshape(-1, 5)
    right = np.array([s.right.as_array() for s in samples]).reshape(-1, 5)
    depth = np.array([s.depth for s in samples], dtype=float)
    return MatchInputs(left, right, depth, estimate_head_points(samples, cfg, intr, face))


def normalized_targets(samples, cfg: PanelConfig) -> np.ndarray:
    pts = np.array([[s.true_panel_point.u, s.true_panel_point.v] for s in samples]).reshape(-1, 2)
    return pts / np.array([cfg.width, cfg.height])

"""Dwell-level scoring and accuracy tables.

One dwell (all frames of one fixation) is one trial. Per-frame predictions
are averaged into a single panel point, a cell-sized box is centered on it,
and the trial counts as correct when that box overlaps the target cell with
IoU >= 0.5.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .features import build_inputs
from .geometry import CameraIntrinsics, GridCell, PanelConfig, PanelPoint, cell_center, iou_offsets
from .headpose import FaceModel3D
from .nets.matchnet import MatchNet
from .synthgen import GazeSample, ScenarioSpec

IOU_THRESHOLD = 0.5


class EmptyDwell(ValueError):
    pass


class ScenarioMismatch(ValueError):
    pass


def dwell_aggregate(frames: Sequence[PanelPoint] | np.ndarray, median: bool = False) -> PanelPoint:
    """Coordinate-wise mean (or median) of per-frame predictions."""
    if isinstance(frames, np.ndarray):
        pts = frames.astype(float)
    else:
        pts = np.array([[p.u, p.v] if isinstance(p, PanelPoint) else p for p in frames], dtype=float)
    if pts.size == 0:
        raise EmptyDwell("dwell has no frames")
    pts = pts.reshape(-1, 2)
    agg = np.median(pts, axis=0) if median else pts.mean(axis=0)
    return PanelPoint(float(agg[0]), float(agg[1]))


def score(pred: PanelPoint, cell: GridCell, cfg: PanelConfig) -> tuple[float, bool]:
    c = cell_center(cell, cfg)
    iou = float(iou_offsets(np.array(pred.u - c.u), np.array(pred.v - c.v), cfg))
    return iou, iou >= IOU_THRESHOLD


@dataclass(frozen=True)
class TrialResult:
    scenario: ScenarioSpec
    target_cell: GridCell
    predicted_point: PanelPoint
    iou: float
    correct: bool
    dwell_id: int = 0


@dataclass(frozen=True)
class AccuracyRow:
    test_definition: str
    user_case: str
    trials: int
    correct: int

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.trials if self.trials else float("nan")


@dataclass
class AccuracyTable:
    rows: list[AccuracyRow]
    meta: dict = field(default_factory=dict)

    def lookup(self, test_definition: str, user_case: str) -> AccuracyRow:
        for r in self.rows:
            if r.test_definition == test_definition and r.user_case == user_case:
                return r
        raise KeyError((test_definition, user_case))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["test_definition", "user_case", "trials", "accuracy_pct"])
        for r in self.rows:
            w.writerow([r.test_definition, r.user_case, r.trials, f"{r.accuracy:.2f}"])
        return buf.getvalue()


def definition_label(n_users: int, distance: float) -> str:
    who = "1 user" if n_users == 1 else f"{n_users} users"
    return f"{who} stare at a specific point ({distance:g}m)"


def _row_key(spec: ScenarioSpec, users_per_group: dict) -> tuple[str, str]:
    n = len(users_per_group[(spec.case, spec.distance)])
    return definition_label(n, spec.distance), spec.case


def tabulate(trials: list[TrialResult], per_user: bool = False) -> AccuracyTable:
    """Group trials by (test definition, user case); ``per_user`` splits each row by user."""
    users = defaultdict(set)
    for t in trials:
        users[(t.scenario.case, t.scenario.distance)].add(t.scenario.user_id)
    counts: dict[tuple, list[int]] = {}
    for t in trials:
        key = _row_key(t.scenario, users)
        if per_user:
            key = (key[0], f"{key[1]} / {t.scenario.user_id}")
        c = counts.setdefault(key, [0, 0])
        c[0] += 1
        c[1] += int(t.correct)

    def order(k):
        case = k[1]
        return (case.split(" / ")[0], _distance_of(k[0]), case)

    rows = [AccuracyRow(k[0], k[1], n, c) for k, (n, c) in sorted(counts.items(), key=lambda kv: order(kv[0]))]
    meta = {"scoring": "per-user" if per_user else "joint", "iou_threshold": IOU_THRESHOLD}
    return AccuracyTable(rows, meta)


def _distance_of(defn: str) -> float:
    return float(defn.rsplit("(", 1)[1].rstrip("m)"))


@dataclass
class CellStats:
    trials: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return 100.0 * self.correct / self.trials if self.trials else float("nan")


def per_cell(trials: list[TrialResult], n_cells: int = 36) -> dict[int, CellStats]:
    out = {i: CellStats() for i in range(1, n_cells + 1)}
    for t in trials:
        s = out[t.target_cell.index]
        s.trials += 1
        s.correct += int(t.correct)
    return out


def row_split(trials: list[TrialResult], cfg: PanelConfig) -> dict[str, CellStats]:
    """Accuracy on the top rows vs. the bottom two rows (cells 25-36 on a 6x6 grid)."""
    top, bottom = CellStats(), CellStats()
    for t in trials:
        s = bottom if t.target_cell.row >= cfg.rows - 2 else top
        s.trials += 1
        s.correct += int(t.correct)
    return {"top": top, "bottom": bottom}


Predictor = Callable[[list[GazeSample]], np.ndarray]


def oracle_predictor(samples: list[GazeSample]) -> np.ndarray:
    """Returns the ground-truth point; the accuracy upper bound."""
    return np.array([[s.true_panel_point.u, s.true_panel_point.v] for s in samples])


def predict_frames(
    samples: list[GazeSample],
    model: MatchNet | Predictor,
    cfg: PanelConfig,
    intr: CameraIntrinsics,
    face: FaceModel3D | None = None,
) -> np.ndarray:
    if isinstance(model, MatchNet):
        return model.predict(build_inputs(samples, cfg, intr, face))
    return np.asarray(model(samples), dtype=float).reshape(-1, 2)


def score_dwells(
    samples: list[GazeSample], predictions: np.ndarray, cfg: PanelConfig, median: bool = False
) -> list[TrialResult]:
    groups: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        groups[s.dwell_id].append(i)
    out = []
    for dwell_id in sorted(groups):
        idx = groups[dwell_id]
        first = samples[idx[0]]
        pred = dwell_aggregate(predictions[idx], median)
        iou, ok = score(pred, first.target_cell, cfg)
        out.append(TrialResult(first.scenario, first.target_cell, pred, iou, ok, dwell_id))
    return out


@dataclass
class ExperimentResult:
    table: AccuracyTable
    per_user: AccuracyTable
    cells: dict[int, CellStats]
    split: dict[str, CellStats]
    trials: list[TrialResult]

    def write(self, out_dir: str | Path, cfg: PanelConfig) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "accuracy_table.csv", out / "accuracy_table_per_user.csv", out / "per_cell.csv", out / "row_split.csv", out / "heatmap.svg"]
        paths[0].write_text(self.table.to_csv())
        paths[1].write_text(self.per_user.to_csv())
        paths[2].write_text(per_cell_csv(self.cells, cfg))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", "trials", "accuracy_pct"])
        for name, s in self.split.items():
            w.writerow([name, s.trials, f"{s.accuracy:.2f}"])
        paths[3].write_text(buf.getvalue())
        paths[4].write_text(heatmap_svg(self.cells, cfg))
        return paths


def run_experiment(
    dataset: list[GazeSample],
    model: MatchNet | Predictor | np.ndarray,
    cfg: PanelConfig,
    intr: CameraIntrinsics | None = None,
    face: FaceModel3D | None = None,
    median: bool = False,
    required_rows: Sequence[tuple[str, str]] | None = None,
) -> ExperimentResult:
    """Score every dwell in ``dataset``.

    ``model`` may be a trained matcher, a callable mapping samples to (B, 2)
    panel points in meters, or an array of precomputed frame predictions.
    """
    intr = intr or CameraIntrinsics()
    preds = model if isinstance(model, np.ndarray) else predict_frames(dataset, model, cfg, intr, face)
    if len(preds) != len(dataset):
        raise ValueError(f"{len(preds)} predictions for {len(dataset)} samples")
    trials = score_dwells(dataset, preds, cfg, median)
    table = tabulate(trials)
    if required_rows:
        have = {(r.test_definition, r.user_case) for r in table.rows}
        missing = [r for r in required_rows if tuple(r) not in have]
        if missing:
            raise ScenarioMismatch(f"dataset does not cover rows {missing}")
    table.meta["per_user_reported"] = True
    return ExperimentResult(table, tabulate(trials, per_user=True), per_cell(trials, cfg.n_cells), row_split(trials, cfg), trials)


def per_cell_csv(cells: dict[int, CellStats], cfg: PanelConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", "row", "col", "trials", "correct", "accuracy_pct"])
    for idx, s in cells.items():
        c = GridCell(idx, cfg.cols)
        acc = "" if not s.trials else f"{s.accuracy:.2f}"
        w.writerow([idx, c.row + 1, c.col + 1, s.trials, s.correct, acc])
    return buf.getvalue()


def heatmap_svg(cells: dict[int, CellStats], cfg: PanelConfig, px: int = 60) -> str:
    """Per-cell accuracy as a grid of shaded squares; untested cells are grey."""
    w, h = cfg.cols * px, cfg.rows * px
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">']
    for idx, s in cells.items():
        c = GridCell(idx, cfg.cols)
        x, y = c.col * px, c.row * px
        if s.trials:
            a = s.accuracy / 100
            fill = f"rgb({int(255 * (1 - a))},{int(200 * a)},60)"
            label = f"{s.accuracy:.0f}%"
        else:
            fill, label = "rgb(200,200,200)", "-"
        parts.append(f'<rect x="{x}" y="{y}" width="{px}" height="{px}" fill="{fill}" stroke="black"/>')
        parts.append(f'<text x="{x + px / 2}" y="{y + px / 2 + 4}" font-size="12" text-anchor="middle">{idx}: {label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

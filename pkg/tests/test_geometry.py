import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazemap.geometry import (
    CameraIntrinsics,
    ConfigError,
    GridCell,
    OffPanel,
    PanelConfig,
    PanelPoint,
    PointBehindCamera,
    Pose,
    RayAway,
    RayParallel,
    cell_center,
    cell_rect,
    intersect_panel,
    iou_with_cell,
    point_to_cell,
    project,
    rect_iou,
    rodrigues,
    rotation_to_rvec,
)

CFG = PanelConfig()
INTR = CameraIntrinsics(fx=500, fy=500, cx=320, cy=320, width=640, height=640)


def test_panel_derived_size():
    assert CFG.width == pytest.approx(1.02)
    assert CFG.height == pytest.approx(1.38)
    assert CFG.n_cells == 36


@pytest.mark.parametrize("field,kwargs", [("rows", {"rows": 0}), ("cols", {"cols": -1}), ("cell_w", {"cell_w": 0.0})])
def test_panel_validation_names_field(field, kwargs):
    with pytest.raises(ConfigError) as exc:
        PanelConfig(**kwargs)
    assert exc.value.field == field


def test_project_optical_axis():
    np.testing.assert_allclose(project(INTR, Pose(), [0, 0, 0]), [320, 320])
    identity = Pose((0, 0, 0), (0, 0, 0))
    np.testing.assert_allclose(project(INTR, identity, [0, 0, 1]), [320, 320])


def test_project_offset_point():
    identity = Pose((0, 0, 0), (0, 0, 0))
    assert project(INTR, identity, [0.1, 0, 1])[0] == pytest.approx(370.0)


@pytest.mark.parametrize("z", [0.0, -1.0, 1e-10])
def test_project_behind_camera(z):
    with pytest.raises(PointBehindCamera):
        project(INTR, Pose((0, 0, 0), (0, 0, 0)), [0, 0, z])


def test_intersect_perpendicular():
    p = intersect_panel([0.5, 0.7, 1.0], [0, 0, -1], CFG)
    assert (p.u, p.v) == pytest.approx((0.5, 0.7))


def test_intersect_oblique():
    d = np.array([0.5, 0.7, -1.0])
    p = intersect_panel([0, 0, 1.0], d / np.linalg.norm(d), CFG)
    assert (p.u, p.v) == pytest.approx((0.5, 0.7), abs=1e-12)


def test_intersect_errors():
    with pytest.raises(RayParallel):
        intersect_panel([0, 0, 1], [1, 0, 0], CFG)
    with pytest.raises(RayAway):
        intersect_panel([0, 0, 1], [0, 0, 1], CFG)
    with pytest.raises(ValueError):
        intersect_panel([0, 0, 1], [0, 0, -2], CFG)


def test_point_to_cell_examples():
    assert point_to_cell(PanelPoint(0.085, 0.115), CFG).index == 1
    assert point_to_cell(PanelPoint(0.5, 0.7), CFG).index == 21
    with pytest.raises(OffPanel):
        point_to_cell(PanelPoint(1.02, 0.1), CFG)
    with pytest.raises(OffPanel):
        point_to_cell(PanelPoint(0.1, -0.001), CFG)


def test_boundary_goes_to_next_cell():
    # half-open intervals: u exactly on the first column boundary belongs to col 1
    assert point_to_cell(PanelPoint(0.17, 0.0), CFG).index == 2


@pytest.mark.parametrize("i", range(1, 37))
def test_cell_round_trip(i):
    assert point_to_cell(cell_center(i, CFG), CFG).index == i
    assert iou_with_cell(cell_center(i, CFG), GridCell(i), CFG) == 1.0


def test_bottom_rows_are_25_to_36():
    for i in range(1, 37):
        assert (i >= 25) == (GridCell(i).row in (4, 5))


def test_iou_examples():
    c = cell_center(8, CFG)
    assert iou_with_cell(PanelPoint(c.u + CFG.cell_w / 2, c.v), GridCell(8), CFG) == pytest.approx(1 / 3)
    assert iou_with_cell(PanelPoint(c.u + 2 * CFG.cell_w, c.v), GridCell(8), CFG) == 0.0


def test_iou_matches_generic_rectangle_iou():
    rng = np.random.default_rng(3)
    for _ in range(500):
        cell = GridCell(int(rng.integers(1, 37)))
        p = PanelPoint(*rng.uniform(-0.2, 1.3, size=2))
        box = (p.u - CFG.cell_w / 2, p.v - CFG.cell_h / 2, p.u + CFG.cell_w / 2, p.v + CFG.cell_h / 2)
        assert iou_with_cell(p, cell, CFG) == pytest.approx(rect_iou(box, cell_rect(cell, CFG)), abs=1e-12)
        assert rect_iou(box, cell_rect(cell, CFG)) == pytest.approx(rect_iou(cell_rect(cell, CFG), box), abs=1e-15)


@given(st.floats(0, 0.3), st.floats(0, 0.3), st.sampled_from([1, 0]))
def test_iou_monotone_along_axis(a, b, axis):
    lo, hi = min(a, b), max(a, b)
    c = cell_center(15, CFG)

    def at(s):
        return iou_with_cell(PanelPoint(c.u + s, c.v) if axis == 0 else PanelPoint(c.u, c.v + s), GridCell(15), CFG)

    assert at(hi) <= at(lo) + 1e-15


@settings(max_examples=300)
@given(
    st.floats(0, 1.0199), st.floats(0, 1.3799),
    st.floats(-2, 3), st.floats(-2, 3), st.floats(0.05, 3),
)
def test_intersect_reprojection(u, v, ox, oy, oz):
    origin = np.array([ox, oy, oz])
    d = np.array([u, v, 0.0]) - origin
    d /= np.linalg.norm(d)
    p = intersect_panel(origin, d, CFG)
    assert abs(p.u - u) < 1e-9 and abs(p.v - v) < 1e-9


def test_rotation_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(0, math.pi - 1e-3)
        r = axis * theta
        np.testing.assert_allclose(rotation_to_rvec(rodrigues(r)), r, atol=1e-9)
    near_pi = np.array([0.0, 0.0, math.pi - 1e-7])
    np.testing.assert_allclose(rodrigues(rotation_to_rvec(rodrigues(near_pi))), rodrigues(near_pi), atol=1e-6)

from collections import Counter

import numpy as np
import pytest

from gazemap.geometry import CameraIntrinsics, GridCell, PanelConfig, PanelPoint, Pose, intersect_panel, point_to_cell
from gazemap.headpose import LandmarkSet2D
from gazemap.nets.matchnet import EyeFeature
from gazemap.synthgen import (
    Generator,
    GazeSample,
    NoiseModel,
    ScenarioSpec,
    SynthConfig,
    TooFewSamples,
    UnreachableCell,
    dataset_stats,
    generate,
    generate_trials,
    grid_specs,
    read_jsonl,
    user_case_trials,
    write_jsonl,
)

CFG = PanelConfig()


def eye_positions(s: GazeSample, ipd=0.064):
    mid = s.true_pose.t + CFG.camera_position
    R = s.true_pose.R
    return mid + R @ np.array([-ipd / 2, 0, 0]), mid + R @ np.array([ipd / 2, 0, 0])


@pytest.fixture(scope="module")
def noiseless():
    return generate(grid_specs(), 36, 10, NoiseModel(), seed=0)


def test_noiseless_rays_land_in_target_cell(noiseless):
    assert len(noiseless) == 3240
    hits = 0
    for s in noiseless:
        for eye, feat in zip(eye_positions(s), (s.left, s.right)):
            p = intersect_panel(eye, np.array(feat.gaze), CFG)
            hits += point_to_cell(p, CFG) == s.target_cell
    assert hits == 2 * 3240


def test_sample_invariants(noiseless):
    intr = CameraIntrinsics()
    for s in noiseless[::7]:
        assert point_to_cell(s.true_panel_point, CFG) == s.target_cell
        assert s.depth == pytest.approx(np.linalg.norm(s.true_pose.t))
        assert np.all(intr.in_bounds(s.landmarks.points))
    # every cell used once per scenario
    assert Counter(s.target_cell.index for s in noiseless) == {i: 90 for i in range(1, 37)}


def test_depth_follows_distance_and_lateral():
    spec = ScenarioSpec(distance=1.5, lateral=0.5, height=1.70)
    s = generate([spec], 1, 1, NoiseModel(), seed=1)[0]
    eye = np.array([CFG.width / 2 + 0.5, CFG.height_to_v(1.58), 1.5])
    assert s.depth == pytest.approx(np.linalg.norm(eye - CFG.camera_position))


def test_depth_noise_is_bounded():
    noise = NoiseModel(depth_sigma=0.02)
    data = generate(grid_specs(), 4, 20, noise, seed=2)
    err = np.array([s.depth - np.linalg.norm(s.true_pose.t) for s in data])
    assert abs(err.mean()) < 0.005
    assert err.std() == pytest.approx(0.02, rel=0.15)
    assert np.abs(err).max() < 6 * 0.02


def test_same_seed_same_bytes(tmp_path):
    noise = NoiseModel(gaze_sigma=0.02, landmark_sigma=1.0, depth_sigma=0.01, dwell_bias_sigma=0.01)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_jsonl(generate(grid_specs()[:3], 5, 3, noise, seed=7), a)
    write_jsonl(generate(grid_specs()[:3], 5, 3, noise, seed=7), b)
    assert a.read_bytes() == b.read_bytes()
    write_jsonl(generate(grid_specs()[:3], 5, 3, noise, seed=8), b)
    assert a.read_bytes() != b.read_bytes()


def test_jsonl_round_trip(tmp_path):
    data = generate(grid_specs()[:2], 3, 2, NoiseModel(gaze_sigma=0.01), seed=3)
    p = tmp_path / "d.jsonl"
    write_jsonl(data, p)
    back = read_jsonl(p)
    assert len(back) == len(data)
    assert back[5].to_dict() == data[5].to_dict()
    assert '"schema":"ggm-synth-v1"' in p.read_text().splitlines()[0]


def test_center_targets():
    gen = Generator(synth=SynthConfig(target_mode="center"))
    s = generate([ScenarioSpec()], 36, 1, NoiseModel(), seed=0, gen=gen)
    for x in s:
        c = x.target_cell
        assert x.true_panel_point.u == pytest.approx((c.col + 0.5) * CFG.cell_w)
        assert x.true_panel_point.v == pytest.approx((c.row + 0.5) * CFG.cell_h)


def test_downward_penalty_inflates_bottom_row_error():
    noise = NoiseModel(gaze_sigma=0.02, downward_penalty=2.0)
    data = generate(grid_specs(), 36, 31, noise, seed=4)
    assert len(data) >= 10_000
    top, bottom = [], []
    for s in data:
        eye = eye_positions(s)[0]
        true = np.array([s.true_panel_point.u, s.true_panel_point.v, 0.0]) - eye
        true /= np.linalg.norm(true)
        err = np.arccos(np.clip(np.dot(true, s.left.gaze), -1, 1))
        (bottom if s.target_cell.row >= 4 else top).append(err)
    assert np.mean(bottom) > 1.5 * np.mean(top)


def test_accessories_and_side_gaze_inflate_noise():
    noise = NoiseModel(accessory_penalty=1.5, side_gaze_penalty=2.0, downward_penalty=3.0)
    cell = GridCell(1)
    assert noise.inflation(ScenarioSpec(), cell, CFG) == 1.0
    assert noise.inflation(ScenarioSpec(accessories=("hat", "mask")), cell, CFG) == pytest.approx(2.25)
    assert noise.inflation(ScenarioSpec(side_gaze_deg=30), cell, CFG) == pytest.approx(2.0)
    assert noise.inflation(ScenarioSpec(), GridCell(25), CFG) == pytest.approx(3.0)


def test_unreachable_cell_after_retries():
    with pytest.raises(UnreachableCell):
        generate([ScenarioSpec()], 1, 60, NoiseModel(gaze_sigma=5.0), seed=0)


def test_spec_and_noise_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(distance=0)
    with pytest.raises(ValueError):
        ScenarioSpec(side_gaze_deg=31)
    with pytest.raises(ValueError):
        ScenarioSpec(accessories=("scarf",))
    with pytest.raises(ValueError):
        NoiseModel(gaze_sigma=-1)
    with pytest.raises(ValueError):
        NoiseModel(downward_penalty=0.5)
    assert ScenarioSpec(accessories=("mask", "glasses")).accessories == ("glasses", "mask")


def test_table1_trial_counts():
    plan = user_case_trials(seed=0)
    per_row = Counter()
    per_user = Counter()
    for t in plan:
        per_row[(t.spec.case, t.spec.distance)] += len(t.cells)
        per_user[(t.spec.case, t.spec.distance, t.spec.user_id)] += len(t.cells)
        assert len(set(t.cells)) == 10
    for d in (0.75, 1.0, 1.5):
        assert per_row[("USER CASE 1", d)] == 80
        assert per_row[("USER CASE 2", d)] == 80
        assert per_row[("USER CASE 3", d)] == 40
    assert set(per_user.values()) == {40}


def test_table1_heights_and_image_bounds():
    plan = user_case_trials(seed=1)
    h = {t.spec.user_id: t.spec.height for t in plan if t.spec.distance == 1.0}
    assert abs(h["1a"] - 1.55) <= 0.05 and abs(h["1b"] - 1.75) <= 0.05
    assert abs(h["2a"] - 1.65) <= 0.05 and abs(h["2b"] - 1.85) <= 0.05
    data = generate_trials(plan, 2, NoiseModel(landmark_sigma=1.0), seed=1)
    pts = np.concatenate([s.landmarks.points for s in data])
    assert np.all(CameraIntrinsics().in_bounds(pts))


# dataset statistics


def _sample(gaze, px, depth, cell=1):
    f = EyeFeature(tuple(gaze), tuple(px))
    return GazeSample("u", ScenarioSpec(), GridCell(cell), LandmarkSet2D((), np.zeros((0, 2))), f, f, depth, Pose(), PanelPoint(0.1, 0.1), 0.0)


def test_identical_samples_are_degenerate():
    s = _sample((0, 0, -1), (320, 240), 1.0)
    st = dataset_stats([s, s])
    assert st.degenerate
    assert np.all(st.std == 0)


def test_hand_computed_stats():
    g = np.array([0.6, 0.0, -0.8])
    samples = [_sample(g, (100, 200), 1.0, 1), _sample(g, (110, 200), 2.0, 2), _sample(g, (120, 200), 3.0, 2)]
    st = dataset_stats(samples)
    assert st.mean[3] == pytest.approx(110.0)
    assert st.std[3] == pytest.approx(np.sqrt(200 / 3))
    assert st.mean[10] == pytest.approx(2.0)
    assert st.std[10] == pytest.approx(np.sqrt(2 / 3))
    assert st.cell_counts == {1: 1, 2: 2}
    assert sum(st.cell_counts.values()) == 3


def test_too_few_samples():
    with pytest.raises(TooFewSamples):
        dataset_stats([_sample((0, 0, -1), (0, 0), 1.0)])


def test_uniform_cell_sampling_counts():
    n = 7200
    data = generate([ScenarioSpec()], n, 1, NoiseModel(), seed=5)
    counts = dataset_stats(data).cell_counts
    assert sum(counts.values()) == n
    for c in range(1, 37):
        assert abs(counts.get(c, 0) - n / 36) <= 5 * np.sqrt(n / 36)

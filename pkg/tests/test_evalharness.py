import math
import random

import numpy as np
import pytest

from gazemap.evalharness import (
    EmptyDwell,
    ScenarioMismatch,
    TrialResult,
    dwell_aggregate,
    heatmap_svg,
    oracle_predictor,
    per_cell,
    row_split,
    run_experiment,
    score,
    tabulate,
)
from gazemap.geometry import GridCell, PanelConfig, PanelPoint, cell_rect, rect_iou
from gazemap.synthgen import Generator, NoiseModel, ScenarioSpec, SynthConfig, generate_trials, user_case_trials

CFG = PanelConfig()


def test_dwell_mean():
    p = PanelPoint(0.4, 0.7)
    assert dwell_aggregate([p] * 5) == p
    m = dwell_aggregate([PanelPoint(0.1, 0.1), PanelPoint(0.3, 0.3)])
    assert m.u == pytest.approx(0.2) and m.v == pytest.approx(0.2)


def test_dwell_mean_against_reordered_sum():
    rng = np.random.default_rng(0)
    frames = [PanelPoint(*xy) for xy in rng.uniform(0, 1, size=(37, 2))]
    got = dwell_aggregate(frames)
    shuffled = frames[:]
    random.Random(1).shuffle(shuffled)
    assert got.u == pytest.approx(math.fsum(p.u for p in shuffled) / 37, abs=1e-15)
    assert got.v == pytest.approx(math.fsum(p.v for p in shuffled) / 37, abs=1e-15)


def test_dwell_median_flag_and_empty():
    frames = [PanelPoint(0.0, 0.0), PanelPoint(0.1, 0.1), PanelPoint(5.0, 5.0)]
    assert dwell_aggregate(frames, median=True) == PanelPoint(0.1, 0.1)
    with pytest.raises(EmptyDwell):
        dwell_aggregate([])
    with pytest.raises(EmptyDwell):
        dwell_aggregate(np.zeros((0, 2)))


def test_scoring_matches_rectangle_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        cell = GridCell(int(rng.integers(1, 37)))
        p = PanelPoint(*rng.uniform([-0.2, -0.2], [CFG.width + 0.2, CFG.height + 0.2]))
        iou, ok = score(p, cell, CFG)
        box = (p.u - CFG.cell_w / 2, p.v - CFG.cell_h / 2, p.u + CFG.cell_w / 2, p.v + CFG.cell_h / 2)
        ref = rect_iou(box, cell_rect(cell, CFG))
        assert iou == pytest.approx(ref, abs=1e-12)
        if abs(ref - 0.5) > 1e-9:
            assert ok == (ref >= 0.5)


def test_centered_prediction_is_perfect():
    iou, ok = score(PanelPoint(0.085, 0.115), GridCell(1), CFG)
    assert iou == 1.0 and ok


def _trial(case, dist, user, cell, ok):
    spec = ScenarioSpec(distance=dist, user_id=user, case=case)
    return TrialResult(spec, GridCell(cell), PanelPoint(0, 0), 1.0 if ok else 0.0, ok)


def test_tabulate_joint_and_per_user():
    trials = [_trial("USER CASE 1", 1.0, "a", 1, True)] * 3 + [_trial("USER CASE 1", 1.0, "b", 30, False)]
    trials += [_trial("USER CASE 3", 1.0, "c", 2, True)] * 2
    t = tabulate(trials)
    row = t.lookup("2 users stare at a specific point (1m)", "USER CASE 1")
    assert (row.trials, row.accuracy) == (4, 75.0)
    assert t.lookup("1 user stare at a specific point (1m)", "USER CASE 3").accuracy == 100.0
    pu = tabulate(trials, per_user=True)
    assert pu.lookup("2 users stare at a specific point (1m)", "USER CASE 1 / b").accuracy == 0.0
    split = row_split(trials, CFG)
    assert split["bottom"].trials == 1 and split["top"].accuracy == 100.0
    cells = per_cell(trials)
    assert cells[1].trials == 3 and cells[36].trials == 0


def test_csv_and_svg_shapes():
    trials = [_trial("USER CASE 1", 0.75, "a", c, c % 2 == 0) for c in range(1, 37)]
    t = tabulate(trials)
    assert t.to_csv().splitlines()[1] == "1 user stare at a specific point (0.75m),USER CASE 1,36,50.00"
    svg = heatmap_svg(per_cell(trials), CFG)
    assert svg.count("<rect") == 36


@pytest.fixture(scope="module")
def noiseless_suite():
    gen = Generator(synth=SynthConfig(target_mode="center"))
    return generate_trials(user_case_trials(0), 5, NoiseModel(), 0, gen)


def test_oracle_predictor_scores_everything(noiseless_suite, tmp_path):
    res = run_experiment(noiseless_suite, oracle_predictor, CFG)
    assert all(r.accuracy == 100.0 for r in res.table.rows)
    assert [r.trials for r in res.table.rows] == [80, 80, 80, 80, 80, 80, 40, 40, 40]
    paths = res.write(tmp_path, CFG)
    assert (tmp_path / "per_cell.csv").read_text().count("\n") == 37
    assert all(p.exists() for p in paths)


def test_uniform_targets_cap_perfect_predictor():
    # a perfect point predictor with uniformly placed targets is mostly "wrong"
    # because the scored box is centered on the prediction, not on the cell
    gen = Generator(synth=SynthConfig(target_mode="uniform"))
    data = generate_trials(user_case_trials(0), 1, NoiseModel(), 0, gen)
    res = run_experiment(data, oracle_predictor, CFG)
    total = sum(r.correct for r in res.table.rows) / sum(r.trials for r in res.table.rows)
    assert 0.15 < total < 0.4


def test_precomputed_predictions_and_mismatch(noiseless_suite):
    preds = oracle_predictor(noiseless_suite) + 0.5
    res = run_experiment(noiseless_suite, preds, CFG)
    assert all(r.accuracy == 0.0 for r in res.table.rows)
    with pytest.raises(ScenarioMismatch):
        run_experiment(noiseless_suite, oracle_predictor, CFG, required_rows=[("2 users stare at a specific point (2m)", "USER CASE 1")])
    with pytest.raises(ValueError):
        run_experiment(noiseless_suite, preds[:-1], CFG)


def test_accuracy_falls_with_gaze_noise():
    from gazemap.geometry import intersect_panel

    gen = Generator(synth=SynthConfig(target_mode="center"))
    plan = user_case_trials(3)
    cam = CFG.camera_position

    def geometric(samples):
        # exact ray cast from the true eye position: isolates the gaze noise
        out = []
        for s in samples:
            eye = s.true_pose.t + cam + s.true_pose.R @ np.array([-0.032, 0, 0])
            p = intersect_panel(eye, np.array(s.left.gaze), CFG)
            out.append([p.u, p.v])
        return np.array(out)

    accs = []
    for sigma in (0.01, 0.03, 0.06):
        data = generate_trials(plan, 5, NoiseModel(gaze_sigma=sigma, dwell_bias_sigma=sigma / 2), 9, gen)
        res = run_experiment(data, geometric, CFG)
        accs.append(sum(t.correct for t in res.trials) / len(res.trials))
    assert accs[0] >= accs[1] >= accs[2]
    assert accs[0] > accs[2]

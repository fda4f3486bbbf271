import json
import random
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazemap.geometry import ConfigError
from gazemap.pipeline import (
    PipelineSpec,
    ShutdownTimeout,
    StagePanic,
    StageSpec,
    load_pipeline_spec,
    predict,
    proportional_shares,
    reallocate,
    run,
    simulate,
)


def chain(latencies, workers, capacity=4, budget=None, **kw):
    stages = tuple(StageSpec(f"s{i}", w, capacity, lat, "log") for i, (lat, w) in enumerate(zip(latencies, workers)))
    return PipelineSpec(stages, budget or sum(workers), **kw)


def test_single_stage_conservation():
    r = run(chain([0.0], [1]), items=1000)
    assert r.items_processed == 1000
    assert r.items_failed == 0
    assert r.fps == pytest.approx(r.items_processed / r.wall_seconds)


def test_three_stage_throughput_matches_bottleneck():
    spec = chain([0.010, 0.040, 0.020], [1, 4, 2])
    assert spec.ideal_fps() == pytest.approx(100.0)
    oracle = predict(spec, 300)
    assert oracle.steady_fps() == pytest.approx(100.0, rel=1e-9)
    r = run(spec, items=300)
    assert r.items_processed == 300
    assert abs(r.fps - 100.0) <= 15.0
    assert all(0.0 <= s.busy_fraction <= 1.0 for s in r.stages)


def test_unit_capacities_terminate():
    spec = chain([0.001, 0.0, 0.002, 0.0], [1, 2, 1, 3], capacity=1)
    r = run(spec, items=400)
    assert r.items_processed == 400


def test_every_item_visits_every_stage_in_order():
    spec = chain([0.0005, 0.0, 0.001], [2, 3, 2], capacity=2)
    r = run(spec, items=500, collect=True)
    assert [it.seq for it in r.outputs] == list(range(500))
    assert all(it.path == [0, 1, 2] for it in r.outputs)


def test_handlers_transform_payloads_with_context():
    spec = PipelineSpec((StageSpec("cap", 1, 2, 0, "capture"), StageSpec("m", 2, 2, 0, "match")), 3)
    handlers = {"capture": lambda p, ctx: p * ctx["k"], "match": lambda p, ctx: p + 1}
    r = run(spec, payloads=[1, 2, 3], handlers=handlers, context={"k": 10}, collect=True)
    assert [it.payload for it in r.outputs] == [11, 21, 31]


def test_failures_are_counted_not_lost():
    def flaky(p, ctx):
        if p % 3 == 0:
            raise RuntimeError("bad frame")
        return p

    spec = PipelineSpec((StageSpec("a", 1, 2, 0, "capture"), StageSpec("b", 2, 2, 0, "face")), 3)
    r = run(spec, items=300, handlers={"face": flaky})
    assert r.items_injected == r.items_processed + r.items_failed
    assert r.items_failed == 100
    assert r.failures[0][1] == "b"


def test_fail_fast_panics_with_stage_and_item():
    def boom(p, ctx):
        if p == 7:
            raise ValueError("boom")
        return p

    spec = PipelineSpec((StageSpec("a", 1, 2, 0, "capture"), StageSpec("g", 1, 2, 0, "gaze")), 2, fail_fast=True)
    with pytest.raises(StagePanic) as info:
        run(spec, items=50, handlers={"gaze": boom})
    assert info.value.stage == "g"
    assert info.value.item_id == 7


def test_drain_timeout():
    release = threading.Event()

    def stuck(p, ctx):
        release.wait(2.0)
        return p

    spec = PipelineSpec((StageSpec("a", 1, 1, 0, "capture"),), 1, drain_timeout=0.2)
    t0 = time.perf_counter()
    with pytest.raises(ShutdownTimeout):
        run(spec, items=2, handlers={"capture": stuck})
    release.set()
    assert time.perf_counter() - t0 < 2.0


def test_duration_mode():
    r = run(chain([0.002], [1]), duration=0.2)
    assert r.items_injected == r.items_processed > 10


def test_report_serialization():
    r = run(chain([0.0, 0.0], [1, 1]), items=20)
    d = json.loads(r.to_json())
    assert d["items_processed"] == 20
    assert r.to_csv().splitlines()[0].startswith("stage,items")


# validation


def test_budget_and_capacity_validation():
    with pytest.raises(ConfigError) as e:
        StageSpec("x", 1, 0, 0.0, "log")
    assert e.value.field == "x.queue_capacity"
    with pytest.raises(ConfigError):
        chain([0.0, 0.0], [2, 2], budget=3)
    with pytest.raises(ConfigError):
        StageSpec("x", 1, 1, 0.0, "render")


def test_conv_layers_give_latency():
    s = StageSpec.from_dict(
        {"name": "face", "handler": "face", "conv_layers": [{"dk": 3, "df": 10, "m": 4, "n": 8}], "macs_per_second": 1e3}
    )
    # depthwise 3*3*4*100 + pointwise 4*8*100
    assert s.simulated_latency == pytest.approx((3600 + 3200) / 1e3)


@pytest.mark.parametrize("name,target", [("tx2-profile", 7.5), ("xavier-profile", 10.0)])
def test_shipped_profiles_have_headroom(name, target):
    spec = load_pipeline_spec(name)
    assert spec.ideal_fps() >= target
    assert [s.handler for s in spec.stages] == ["capture", "face", "headpose", "gaze", "match", "log"]


# reallocation


def test_equal_load_gives_equal_workers():
    spec = chain([0.01] * 4, [1] * 4, budget=10, reallocation="proportional")
    w = reallocate(spec, [0.5] * 4)
    assert sum(w) == 10 and max(w) - min(w) <= 1


def test_busy_stage_gets_most_workers():
    spec = chain([0.01] * 4, [2] * 4, budget=8, reallocation="proportional")
    assert reallocate(spec, [0.8, 0.2, 0.2, 0.2])[0] >= 4
    assert reallocate(spec, [1.0, 0.0, 0.0, 0.0]) == [5, 1, 1, 1]


def test_budget_equal_to_stage_count():
    spec = chain([0.01] * 3, [1] * 3, budget=3, reallocation="proportional")
    assert reallocate(spec, [0.9, 0.1, 0.0]) == [1, 1, 1]


def test_reallocation_off_keeps_workers():
    spec = chain([0.01] * 2, [2, 1], budget=5)
    assert reallocate(spec, [1.0, 0.0]) == [2, 1]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.integers(0, 10))
def test_shares_respect_budget_and_floor(busy, extra):
    budget = len(busy) + extra
    spec = chain([0.0] * len(busy), [1] * len(busy), budget=budget, reallocation="proportional")
    w = reallocate(spec, busy)
    assert sum(w) <= budget
    assert min(w) >= 1
    # fixed point
    assert reallocate(spec.with_workers(w), busy) == w


def test_shares_hand_example():
    assert proportional_shares([3, 1], 8) == [6, 2]
    assert proportional_shares([1, 1, 1], 4) == [2, 1, 1]


def test_engine_reallocates_toward_bottleneck():
    spec = chain([0.001, 0.008, 0.001], [2, 1, 2], capacity=2, budget=6, reallocation="proportional", epoch_items=20)
    r = run(spec, items=300)
    assert r.items_processed == 300
    assert all(sum(h) <= 6 for h in r.worker_history)
    assert r.worker_history[-1][1] >= 2


# discrete-event oracle


def test_des_hand_computed_schedule():
    # fast producer, slow consumer, unit buffers: the consumer sets the pace
    r = simulate([0.01, 0.03], [1, 1], [1, 1], 4)
    assert r.completions == pytest.approx([0.04, 0.07, 0.10, 0.13])


def test_des_parallel_servers():
    r = simulate([0.1], [4], [8], 400)
    assert r.steady_fps() == pytest.approx(40.0, rel=0.02)


def test_des_blocking_after_service():
    # no buffer slack downstream: upstream servers wait holding their items
    r = simulate([0.01, 0.05], [3, 1], [1, 1], 10)
    assert r.steady_fps() == pytest.approx(20.0)


def test_engine_tracks_des_on_random_specs():
    rng = random.Random(3)
    for _ in range(4):
        n = rng.randint(1, 4)
        spec = chain([rng.uniform(0.002, 0.01) for _ in range(n)], [rng.randint(1, 3) for _ in range(n)], capacity=rng.randint(1, 4))
        oracle = predict(spec, 200).fps
        got = run(spec, items=200).fps
        assert abs(got - oracle) <= 0.2 * oracle


def test_small_property_sweep():
    rng = random.Random(11)
    for _ in range(20):
        n = rng.randint(1, 6)
        spec = chain(
            [rng.uniform(0, 0.02) for _ in range(n)],
            [rng.randint(1, 4) for _ in range(n)],
            capacity=rng.randint(1, 8),
            time_scale=0.005,
        )
        r = run(spec, items=500)
        assert r.items_processed == 500
        assert all(s.max_queue_depth <= spec.stages[i].queue_capacity for i, s in enumerate(r.stages))

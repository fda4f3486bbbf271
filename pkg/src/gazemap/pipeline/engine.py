"""Threaded multi-stage pipeline over bounded queues.

Each stage owns an input queue of fixed capacity and a pool of worker
threads. Workers block on ``put`` when the next queue is full, so a slow
stage throttles everything upstream. Stage handlers are plain functions of
(payload, context); a stub stage pads its handler time up to its simulated
latency. With reallocation on, a monitor thread re-splits the worker budget
every ``epoch_items`` completed items using the busy fractions it observed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .realloc import reallocate
from .spec import HANDLERS, PipelineSpec

log = logging.getLogger(__name__)

POLL = 0.005
Handler = Callable[[Any, dict], Any]


class StagePanic(RuntimeError):
    def __init__(self, stage: str, item_id: int, cause: BaseException):
        super().__init__(f"stage {stage!r} failed on item {item_id}: {cause!r}")
        self.stage = stage
        self.item_id = item_id
        self.cause = cause


class ShutdownTimeout(RuntimeError):
    pass


def passthrough(payload, ctx):
    return payload


DEFAULT_HANDLERS: dict[str, Handler] = {name: passthrough for name in HANDLERS}


@dataclass
class Item:
    seq: int
    payload: Any = None
    path: list[int] = field(default_factory=list)


@dataclass
class StageReport:
    name: str
    items: int
    failed: int
    busy_fraction: float
    mean_queue_depth: float
    max_queue_depth: int
    workers: int


@dataclass
class ThroughputReport:
    items_injected: int
    items_processed: int
    items_failed: int
    wall_seconds: float
    stages: list[StageReport]
    worker_history: list[list[int]] = field(default_factory=list)
    failures: list[tuple[int, str, str]] = field(default_factory=list)
    outputs: list[Item] = field(default_factory=list, repr=False)

    @property
    def fps(self) -> float:
        return self.items_processed / self.wall_seconds if self.wall_seconds > 0 else float("inf")

    def to_dict(self) -> dict:
        return {
            "items_injected": self.items_injected,
            "items_processed": self.items_processed,
            "items_failed": self.items_failed,
            "wall_seconds": self.wall_seconds,
            "fps": self.fps,
            "stages": [vars(s) for s in self.stages],
            "worker_history": self.worker_history,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "items", "failed", "busy_fraction", "mean_queue_depth", "max_queue_depth", "workers"])
        for s in self.stages:
            w.writerow([s.name, s.items, s.failed, f"{s.busy_fraction:.4f}", f"{s.mean_queue_depth:.3f}", s.max_queue_depth, s.workers])
        return buf.getvalue()


class _Stage:
    def __init__(self, index: int, name: str, capacity: int, latency: float, handler: Handler):
        self.index = index
        self.name = name
        self.q: queue.Queue = queue.Queue(maxsize=capacity)
        self.latency = latency
        self.handler = handler
        self.lock = threading.Lock()
        self.items = 0
        self.failed = 0
        self.busy = 0.0
        self.epoch_busy = 0.0
        self.depth_sum = 0
        self.depth_n = 0
        self.depth_max = 0
        self.workers: list[_Worker] = []
        self.upstream_done = threading.Event()
        self.worker_seconds = 0.0  # integral of live workers over time
        self.epoch_worker_seconds = 0.0
        self.last_change = 0.0

    def live(self) -> list["_Worker"]:
        return [w for w in self.workers if w.thread.is_alive()]

    def account(self, now: float) -> None:
        n = sum(1 for w in self.workers if not w.retire.is_set() and w.thread.is_alive())
        dt = now - self.last_change
        self.worker_seconds += n * dt
        self.epoch_worker_seconds += n * dt
        self.last_change = now


class _Worker:
    def __init__(self, engine: "_Engine", stage: _Stage):
        self.engine = engine
        self.stage = stage
        self.retire = threading.Event()
        self.thread = threading.Thread(target=self.loop, name=f"{stage.name}-worker", daemon=True)

    def loop(self) -> None:
        eng, st = self.engine, self.stage
        nxt = eng.stages[st.index + 1] if st.index + 1 < len(eng.stages) else None
        while not eng.stop.is_set() and not self.retire.is_set():
            try:
                item = st.q.get(timeout=POLL)
            except queue.Empty:
                if st.upstream_done.is_set() and st.q.empty():
                    return
                continue
            depth = st.q.qsize()
            t0 = time.perf_counter()
            try:
                item.payload = st.handler(item.payload, eng.context)
                ok = True
            except Exception as exc:  # noqa: BLE001 - recorded and optionally escalated
                ok = False
                eng.fail(st, item, exc)
            if st.latency > 0:
                left = st.latency - (time.perf_counter() - t0)
                if left > 0:
                    time.sleep(left)
            spent = time.perf_counter() - t0
            with st.lock:
                st.busy += spent
                st.epoch_busy += spent
                st.depth_sum += depth
                st.depth_n += 1
                st.depth_max = max(st.depth_max, depth + 1)
                if ok:
                    st.items += 1
            if not ok:
                continue
            item.path.append(st.index)
            if nxt is None:
                eng.complete(item)
            else:
                while not eng.stop.is_set():
                    try:
                        nxt.q.put(item, timeout=POLL)
                        break
                    except queue.Full:
                        continue


class _Engine:
    def __init__(self, spec: PipelineSpec, handlers: dict[str, Handler], context: dict, collect: bool):
        self.spec = spec
        self.context = context
        self.collect = collect
        lat = spec.latencies()
        self.stages = [
            _Stage(i, s.name, s.queue_capacity, lat[i], handlers.get(s.handler, passthrough)) for i, s in enumerate(spec.stages)
        ]
        self.stop = threading.Event()
        self.lock = threading.Lock()
        self.done_count = 0
        self.fail_count = 0
        self.outputs: list[Item] = []
        self.failures: list[tuple[int, str, str]] = []
        self.panic: StagePanic | None = None
        self.epoch_event = threading.Event()
        self.last_done = 0.0
        self.targets = [s.workers for s in spec.stages]
        self.history: list[list[int]] = [list(self.targets)]

    def complete(self, item: Item) -> None:
        with self.lock:
            self.done_count += 1
            self.last_done = time.perf_counter()
            if self.collect:
                self.outputs.append(item)
            if self.done_count % self.spec.epoch_items == 0:
                self.epoch_event.set()

    def fail(self, stage: _Stage, item: Item, exc: BaseException) -> None:
        with self.lock:
            self.fail_count += 1
            self.failures.append((item.seq, stage.name, repr(exc)))
            stage.failed += 1
            if self.spec.fail_fast and self.panic is None:
                self.panic = StagePanic(stage.name, item.seq, exc)
                self.stop.set()

    def spawn(self, stage: _Stage) -> None:
        w = _Worker(self, stage)
        stage.workers.append(w)
        w.thread.start()

    def live_total(self) -> int:
        return sum(len(s.live()) for s in self.stages)

    def rebalance(self) -> None:
        now = time.perf_counter()
        busy = []
        for st in self.stages:
            with st.lock:
                st.account(now)
                frac = st.epoch_busy / st.epoch_worker_seconds if st.epoch_worker_seconds > 0 else 0.0
                busy.append(min(1.0, frac))
                st.epoch_busy = 0.0
                st.epoch_worker_seconds = 0.0
        targets = reallocate(self.spec, busy)
        if targets != self.targets:
            log.debug("reallocating workers %s -> %s (busy %s)", self.targets, targets, busy)
            self.targets = targets
            self.history.append(list(targets))
        for st, want in zip(self.stages, targets):
            active = [w for w in st.workers if not w.retire.is_set() and w.thread.is_alive()]
            for w in active[want:]:
                with st.lock:
                    st.account(time.perf_counter())
                w.retire.set()

    def grow(self) -> None:
        """Start workers for stages below target, only while the live total stays within budget."""
        for st, want in zip(self.stages, self.targets):
            if st.upstream_done.is_set() and st.q.empty():
                continue
            active = [w for w in st.workers if not w.retire.is_set() and w.thread.is_alive()]
            for _ in range(want - len(active)):
                if self.live_total() >= self.spec.global_worker_budget:
                    return
                with st.lock:
                    st.account(time.perf_counter())
                self.spawn(st)

    def monitor(self, finished: threading.Event) -> None:
        while not finished.is_set() and not self.stop.is_set():
            if self.epoch_event.wait(POLL):
                self.epoch_event.clear()
                self.rebalance()
            self.grow()


def run(
    spec: PipelineSpec,
    items: int | None = None,
    duration: float | None = None,
    handlers: dict[str, Handler] | None = None,
    context: dict | None = None,
    payloads: list | None = None,
    collect: bool = False,
) -> ThroughputReport:
    """Push items through the pipeline and report throughput.

    Give either a count, a duration in seconds, or explicit ``payloads``.
    Every injected item ends up either processed by all stages or recorded
    as failed.
    """
    if payloads is not None:
        items = len(payloads)
    if (items is None) == (duration is None):
        raise ValueError("give exactly one of items or duration")
    eng = _Engine(spec, {**DEFAULT_HANDLERS, **(handlers or {})}, dict(context or {}), collect)
    start = time.perf_counter()
    for st in eng.stages:
        st.last_change = start
        for _ in range(spec.stages[st.index].workers):
            eng.spawn(st)
    finished = threading.Event()
    mon = None
    if spec.reallocation != "off":
        mon = threading.Thread(target=eng.monitor, args=(finished,), name="realloc-monitor", daemon=True)
        mon.start()

    injected = 0
    first = eng.stages[0]
    deadline = None if duration is None else start + duration
    while not eng.stop.is_set():
        if items is not None and injected >= items:
            break
        if deadline is not None and time.perf_counter() >= deadline:
            break
        item = Item(injected, payloads[injected] if payloads is not None else injected)
        try:
            first.q.put(item, timeout=POLL)
        except queue.Full:
            continue
        injected += 1

    # cascade shutdown: a stage is drained once its upstream is done and its workers have exited
    drain_deadline = time.perf_counter() + spec.drain_timeout
    first.upstream_done.set()
    for i, st in enumerate(eng.stages):
        while True:
            if eng.stop.is_set():
                break
            alive = st.live()
            if not alive and st.q.empty():
                break
            if not alive:
                # every worker retired while items remain; restart one
                eng.spawn(st)
            if time.perf_counter() > drain_deadline:
                eng.stop.set()
                finished.set()
                raise ShutdownTimeout(f"stage {st.name!r} did not drain within {spec.drain_timeout} s")
            if alive:
                alive[0].thread.join(POLL)
        if i + 1 < len(eng.stages):
            eng.stages[i + 1].upstream_done.set()
    finished.set()
    if mon is not None:
        mon.join()
    for st in eng.stages:
        for w in st.workers:
            w.thread.join(1.0)
    end = time.perf_counter()
    if eng.panic is not None:
        raise eng.panic

    wall = (eng.last_done or end) - start
    reports = []
    for st in eng.stages:
        st.account(end)
        ws = st.worker_seconds if st.worker_seconds > 0 else 1e-12
        reports.append(
            StageReport(
                st.name,
                st.items,
                st.failed,
                min(1.0, st.busy / ws),
                st.depth_sum / st.depth_n if st.depth_n else 0.0,
                st.depth_max,
                eng.targets[st.index],
            )
        )
    outputs = sorted(eng.outputs, key=lambda it: it.seq) if collect else []
    return ThroughputReport(injected, eng.done_count, eng.fail_count, max(wall, 1e-12), reports, eng.history, eng.failures, outputs)

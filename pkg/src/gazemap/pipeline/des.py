"""Discrete-event model of the engine, used as its throughput oracle.

Tandem stations, each with c identical servers and a deterministic service
time, fed by an always-ready source. Every station has a bounded input
buffer; a server that finishes while the next buffer is full holds its item
(blocking after service), which is exactly what a worker stuck in a
blocking ``put`` does.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

from .spec import PipelineSpec


@dataclass
class DesResult:
    items: int
    makespan: float
    completions: list[float]

    @property
    def fps(self) -> float:
        return self.items / self.makespan if self.makespan > 0 else float("inf")

    def steady_fps(self) -> float:
        """Rate between the first and last completion, free of fill-up time."""
        if self.items < 2 or self.completions[-1] == self.completions[0]:
            return self.fps
        return (self.items - 1) / (self.completions[-1] - self.completions[0])


def simulate(service: list[float], servers: list[int], capacity: list[int], items: int) -> DesResult:
    n = len(service)
    queues = [deque() for _ in range(n)]
    idle = list(servers)
    held: list[deque] = [deque() for _ in range(n)]  # finished items waiting for space downstream
    events: list[tuple[float, int, int, int]] = []  # (time, tiebreak, stage, item)
    injected = 0
    done: list[float] = []
    tick = 0
    now = 0.0

    def settle():
        nonlocal injected, tick
        moved = True
        while moved:
            moved = False
            for i in range(n - 1, -1, -1):
                while held[i]:
                    if i == n - 1:
                        held[i].popleft()
                        done.append(now)
                        idle[i] += 1
                    elif len(queues[i + 1]) < capacity[i + 1]:
                        queues[i + 1].append(held[i].popleft())
                        idle[i] += 1
                    else:
                        break
                    moved = True
                while idle[i] > 0 and queues[i]:
                    item = queues[i].popleft()
                    idle[i] -= 1
                    tick += 1
                    heapq.heappush(events, (now + service[i], tick, i, item))
                    moved = True
            while injected < items and len(queues[0]) < capacity[0]:
                queues[0].append(injected)
                injected += 1
                moved = True

    settle()
    while events:
        now, _, stage, item = heapq.heappop(events)
        held[stage].append(item)
        # drain every event at the same instant before settling
        while events and events[0][0] == now:
            _, _, s2, it2 = heapq.heappop(events)
            held[s2].append(it2)
        settle()
    return DesResult(len(done), done[-1] if done else 0.0, done)


def predict(spec: PipelineSpec, items: int) -> DesResult:
    return simulate(spec.latencies(), [s.workers for s in spec.stages], [s.queue_capacity for s in spec.stages], items)

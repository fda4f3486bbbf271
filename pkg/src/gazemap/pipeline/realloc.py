"""Proportional worker reallocation by observed load."""

from __future__ import annotations

import numpy as np

from .spec import PipelineSpec


def proportional_shares(weights, budget: int) -> list[int]:
    """Integer shares of ``budget`` proportional to ``weights``, each at least 1.

    Stages whose exact share falls below one are pinned to one and the rest
    of the budget is re-split among the others; the remainder after flooring
    goes to the largest fractional parts (ties to the earlier stage).
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if budget < n:
        raise ValueError(f"budget {budget} cannot give {n} stages one worker each")
    w = np.where(np.isfinite(w) & (w > 0), w, 0.0)
    if w.sum() == 0:
        w = np.ones(n)
    pinned = np.zeros(n, dtype=bool)
    while True:
        free = budget - pinned.sum()
        active = ~pinned
        exact = np.ones(n)
        total = w[active].sum()
        exact[active] = free * w[active] / total if total > 0 else free / active.sum()
        low = active & (exact < 1)
        if not low.any():
            break
        pinned |= low
    base = np.floor(exact + 1e-12).astype(int)
    base = np.maximum(base, 1)
    left = budget - base.sum()
    frac = exact - np.floor(exact + 1e-12)
    order = sorted(range(n), key=lambda i: (-frac[i], i))
    for i in order[: max(left, 0)]:
        base[i] += 1
    return [int(x) for x in base]


def reallocate(spec: PipelineSpec, busy) -> list[int]:
    """New worker counts from per-stage busy fractions over the last epoch.

    Depends only on the observations and the budget, so feeding the same
    observations again returns the same assignment.
    """
    busy = list(busy)
    if len(busy) != len(spec.stages):
        raise ValueError("one busy fraction per stage required")
    if spec.reallocation == "off":
        return [s.workers for s in spec.stages]
    return proportional_shares(busy, spec.global_worker_budget)


"""Central-difference gradient checking for the hand-written backward passes."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .dense import DenseNet, mse
from .matchnet import MatchInputs, MatchNet
from .triplet import Embedder, triplet_loss_and_grads

STEP = 1e-5
# a step of h moves pre-activations by roughly h times the input scale, so the
# probe must sit well clear of every kink for the finite difference to be smooth
KINK_MARGIN = 100
# gradient entries below this magnitude are compared absolutely; central
# differences carry roundoff of about eps * loss / h ~ 1e-11 on exact zeros
ABS_FLOOR = 1e-6


class NonDifferentiablePoint(ValueError):
    pass


Objective = Callable[[], tuple[float, list[np.ndarray], float]]


def grad_check(objective: Objective, params: list[np.ndarray], h: float = STEP, kink_tol: float | None = None) -> float:
    """Max relative error between analytic and numeric gradients over all parameters.

    ``objective()`` returns (loss, grads aligned with ``params``, distance to
    the nearest kink). Parameters are perturbed in place and restored.
    """
    kink_tol = KINK_MARGIN * h if kink_tol is None else kink_tol
    loss, grads, kink = objective()
    if kink < kink_tol:
        raise NonDifferentiablePoint(f"probe lies {kink:.2e} from a kink")
    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = objective()[0]
            flat[i] = old - h
            down = objective()[0]
            flat[i] = old
            num = (up - down) / (2 * h)
            err = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), ABS_FLOOR)
            worst = max(worst, err)
    return worst


def dense_mse_objective(net: DenseNet, x: np.ndarray, y: np.ndarray) -> Objective:
    def objective():
        out, cache = net.forward(x)
        loss, g = mse(out, y)
        grads, _ = net.backward(cache, g)
        return loss, grads, DenseNet.kink_distance(cache, net.layers)

    return objective


def matchnet_mse_objective(net: MatchNet, x: MatchInputs, y: np.ndarray) -> Objective:
    def objective():
        out, cache = net.forward(x)
        loss, g = mse(out, y)
        return loss, net.backward(cache, g), net.kink_distance(cache)

    return objective


def triplet_objective(e: Embedder, anchor, pos, neg) -> Objective:
    return lambda: triplet_loss_and_grads(e, anchor, pos, neg)

"""Identity embedder trained with the triplet hinge on L2 distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import DenseNet


def triplet_hinge(margin: float, d_pos: float, d_neg: float) -> float:
    return max(0.0, margin + d_pos - d_neg)


@dataclass
class Embedder:
    net: DenseNet
    margin: float = 0.2

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self.net(np.atleast_2d(x))

    def params(self) -> list[np.ndarray]:
        return self.net.params()


def triplet_loss(e: Embedder, anchor, pos, neg) -> float:
    """Mean hinge over a batch (or a single triplet)."""
    return triplet_loss_and_grads(e, anchor, pos, neg)[0]


def triplet_loss_and_grads(e: Embedder, anchor, pos, neg) -> tuple[float, list[np.ndarray], float]:
    """Loss, parameter gradients and distance to the nearest kink.

    The kink distance covers the hinge, coincident embeddings (where the L2
    distance is not differentiable) and relu pre-activations.
    """
    a, p, n = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (anchor, pos, neg))
    fa, ca = e.net.forward(a)
    fp, cp = e.net.forward(p)
    fn, cn = e.net.forward(n)
    dap = fa - fp
    dan = fa - fn
    d_pos = np.linalg.norm(dap, axis=1)
    d_neg = np.linalg.norm(dan, axis=1)
    arg = e.margin + d_pos - d_neg
    active = arg > 0
    b = len(arg)
    loss = float(np.sum(np.where(active, arg, 0.0)) / b)

    w = active / b
    sp = np.where(d_pos > 0, w / np.where(d_pos > 0, d_pos, 1.0), 0.0)[:, None]
    sn = np.where(d_neg > 0, w / np.where(d_neg > 0, d_neg, 1.0), 0.0)[:, None]
    g_fa = sp * dap - sn * dan
    g_fp = -sp * dap
    g_fn = sn * dan
    grads = None
    for cache, g in ((ca, g_fa), (cp, g_fp), (cn, g_fn)):
        gi, _ = e.net.backward(cache, g)
        grads = gi if grads is None else [x + y for x, y in zip(grads, gi)]

    kink = min(
        float(np.min(np.abs(arg))),
        float(np.min(np.where(active, d_pos, np.inf))),
        float(np.min(np.where(active, d_neg, np.inf))),
        DenseNet.kink_distance(ca, e.net.layers),
        DenseNet.kink_distance(cp, e.net.layers),
        DenseNet.kink_distance(cn, e.net.layers),
    )
    return loss, grads, kink


def train_embedder(e: Embedder, triplets: tuple[np.ndarray, np.ndarray, np.ndarray], lr=0.05, momentum=0.9, epochs=50, batch=32, seed=0) -> list[float]:
    """Plain momentum SGD on fixed triplets; the margin never changes."""
    a, p, n = triplets
    rng = np.random.default_rng(seed)
    params = e.params()
    vel = [np.zeros_like(q) for q in params]
    curve = [triplet_loss(e, a, p, n)]
    for _ in range(epochs):
        order = rng.permutation(len(a))
        for s in range(0, len(a), batch):
            idx = order[s : s + batch]
            _, grads, _ = triplet_loss_and_grads(e, a[idx], p[idx], n[idx])
            for q, v, g in zip(params, vel, grads):
                v *= momentum
                v -= lr * g
                q += v
        curve.append(triplet_loss(e, a, p, n))
    return curve

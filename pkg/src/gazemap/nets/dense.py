"""Fully-connected layers with explicit forward/backward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "identity")


class NonFinite(FloatingPointError):
    pass


@dataclass
class Layer:
    W: np.ndarray  # (in, out)
    b: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ValueError("layer weight/bias shapes do not chain")


class DenseNet:
    """A stack of dense layers. Parameters are stored in place and shared by reference."""

    def __init__(self, layers: list[Layer]):
        for a, b in zip(layers, layers[1:]):
            if a.W.shape[1] != b.W.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def init(cls, sizes: list[int], activations: list[str], rng: np.random.Generator) -> "DenseNet":
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for fan_in, fan_out, act in zip(sizes, sizes[1:], activations):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Layer(rng.uniform(-lim, lim, size=(fan_in, fan_out)), np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        cache = []
        h = np.asarray(x, dtype=float)
        for layer in self.layers:
            z = h @ layer.W + layer.b
            cache.append((h, z))
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        if not np.all(np.isfinite(h)):
            raise NonFinite("activation overflow in dense forward pass")
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Returns (grads aligned with :meth:`params`, grad wrt input)."""
        grads: list[np.ndarray] = []
        g = grad_out
        for layer, (h, z) in zip(reversed(self.layers), reversed(cache)):
            if layer.activation == "relu":
                g = g * (z > 0)
            grads = [h.T @ g, g.sum(axis=0)] + grads
            g = g @ layer.W.T
        return grads, g

    @staticmethod
    def kink_distance(cache: list, layers: list[Layer]) -> float:
        """Smallest |pre-activation| over relu units (inf when there are none)."""
        d = np.inf
        for layer, (_, z) in zip(layers, cache):
            if layer.activation == "relu" and z.size:
                d = min(d, float(np.min(np.abs(z))))
        return d

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"W": layer.W.tolist(), "b": layer.b.tolist(), "activation": layer.activation} for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        return cls([Layer(np.array(x["W"], dtype=float), np.array(x["b"], dtype=float), x["activation"]) for x in d["layers"]])

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over samples of the summed squared error, and its gradient wrt ``pred``."""
    diff = pred - target
    n = pred.shape[0]
    return float(np.sum(diff**2) / n), 2.0 * diff / n

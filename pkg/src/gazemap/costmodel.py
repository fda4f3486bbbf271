"""Multiply-add counts for standard vs depthwise-separable convolution.

All counts are exact Python integers; anything above ``MAX_COUNT`` (the
signed 64-bit range) is reported as :class:`CostOverflow` so the numbers stay
representable when exported.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

MAX_COUNT = 2**63 - 1


class CostOverflow(OverflowError):
    pass


@dataclass(frozen=True)
class ConvSpec:
    dk: int
    df: int
    m: int
    n: int
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("dk", "df", "m", "n"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ConvSpec":
        return cls(**d)


def _checked(count: int) -> int:
    if count > MAX_COUNT:
        raise CostOverflow(f"mult-add count {count} exceeds {MAX_COUNT}")
    return count


def conv_cost(s: ConvSpec) -> int:
    return _checked(s.dk * s.dk * s.m * s.n * s.df * s.df)


def dsc_cost(s: ConvSpec) -> int:
    """Depthwise k x k filter per input channel plus the 1 x 1 pointwise mix."""
    return _checked(s.dk * s.dk * s.df * s.df * s.m + s.df * s.df * s.m * s.n)


def cost_ratio(s: ConvSpec) -> float:
    return 1.0 / s.n + 1.0 / (s.dk * s.dk)


def _scale(count: int, factor: float) -> int:
    return max(1, math.floor(count * factor + 0.5))


def scaled_dims(s: ConvSpec) -> tuple[int, int, int]:
    """Channel and resolution counts after the width/resolution multipliers."""
    return _scale(s.m, s.alpha), _scale(s.n, s.alpha), _scale(s.df, s.beta)


def scaled_cost(s: ConvSpec) -> int:
    m, n, df = scaled_dims(s)
    return _checked(s.dk * s.dk * df * df * m + df * df * m * n)


def speedup(s: ConvSpec) -> float:
    return conv_cost(s) / dsc_cost(s)


def layers_latency(layers: list[ConvSpec], macs_per_second: float) -> float:
    """Seconds to run a stack of separable layers on a device with the given MAC rate."""
    return sum(scaled_cost(layer) for layer in layers) / macs_per_second


def cost_table(specs: list[ConvSpec]) -> list[dict]:
    rows = []
    for s in specs:
        conv, dsc = conv_cost(s), dsc_cost(s)
        rows.append(
            {
                **asdict(s),
                "conv_cost": conv,
                "dsc_cost": dsc,
                "ratio": dsc / conv,
                "ratio_closed_form": cost_ratio(s),
                "speedup": conv / dsc,
                "scaled_cost": scaled_cost(s),
            }
        )
    return rows


def format_table(rows: list[dict]) -> str:
    cols = ["dk", "df", "m", "n", "alpha", "beta", "conv_cost", "dsc_cost", "ratio", "speedup", "scaled_cost"]
    cells = [[f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def load_specs(path) -> list[ConvSpec]:
    with open(path) as fh:
        return [ConvSpec.from_dict(d) for d in json.load(fh)]

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gazemap.costmodel import (
    ConvSpec,
    CostOverflow,
    conv_cost,
    cost_ratio,
    dsc_cost,
    scaled_cost,
    scaled_dims,
)


@pytest.mark.parametrize(
    "spec,expected",
    [
        (ConvSpec(dk=3, df=28, m=16, n=32), 3_612_672),
        (ConvSpec(dk=1, df=1, m=1, n=1), 1),
        (ConvSpec(dk=3, df=224, m=3, n=64), 86_704_128),
    ],
)
def test_conv_cost(spec, expected):
    assert conv_cost(spec) == expected


@pytest.mark.parametrize(
    "spec,expected",
    [
        (ConvSpec(dk=3, df=28, m=16, n=32), 9 * 784 * 16 + 784 * 16 * 32),
        (ConvSpec(dk=1, df=1, m=1, n=1), 2),
        (ConvSpec(dk=3, df=2, m=1, n=1), 40),
    ],
)
def test_dsc_cost(spec, expected):
    assert dsc_cost(spec) == expected


def test_dsc_example_value():
    assert dsc_cost(ConvSpec(dk=3, df=28, m=16, n=32)) == 514_304


def test_ratio_examples():
    assert cost_ratio(ConvSpec(dk=3, df=1, m=1, n=32)) == pytest.approx(0.14236111111, rel=1e-10)
    assert cost_ratio(ConvSpec(dk=1, df=1, m=1, n=1)) == 2.0
    big = ConvSpec(dk=3, df=1, m=1, n=10**6)
    assert cost_ratio(big) == pytest.approx(1 / 9, rel=1e-5)


def test_scaled_cost_examples():
    assert scaled_cost(ConvSpec(dk=3, df=28, m=16, n=32, alpha=0.5, beta=0.5)) == 39_200
    s = ConvSpec(dk=3, df=28, m=16, n=32)
    assert scaled_cost(s) == dsc_cost(s)
    assert scaled_dims(ConvSpec(dk=3, df=28, m=16, n=32, alpha=0.25))[:2] == (4, 8)


def test_scaled_dims_floor_at_one():
    assert scaled_dims(ConvSpec(dk=3, df=2, m=1, n=1, alpha=0.01, beta=0.01)) == (1, 1, 1)


def test_overflow_reported():
    with pytest.raises(CostOverflow):
        conv_cost(ConvSpec(dk=10**4, df=10**4, m=10**4, n=10**4))


@pytest.mark.parametrize("bad", [{"dk": 0}, {"m": -1}, {"alpha": 0.0}, {"beta": 1.5}])
def test_invalid_spec(bad):
    kw = dict(dk=3, df=8, m=4, n=4) | bad
    with pytest.raises(ValueError):
        ConvSpec(**kw)


specs = st.builds(
    ConvSpec,
    dk=st.integers(1, 11),
    df=st.integers(1, 512),
    m=st.integers(1, 2048),
    n=st.integers(1, 2048),
    alpha=st.floats(0.01, 1.0),
    beta=st.floats(0.01, 1.0),
)


@given(specs)
def test_ratio_identity_exact(s):
    assert Fraction(dsc_cost(s), conv_cost(s)) == Fraction(1, s.n) + Fraction(1, s.dk**2)
    assert abs(dsc_cost(s) / conv_cost(s) - cost_ratio(s)) <= 1e-12 * cost_ratio(s)


@given(specs, st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_scaled_cost_monotone(s, a2, b2):
    lo_a, hi_a = sorted((s.alpha, a2))
    lo_b, hi_b = sorted((s.beta, b2))
    base = dict(dk=s.dk, df=s.df, m=s.m, n=s.n)
    assert scaled_cost(ConvSpec(**base, alpha=lo_a, beta=s.beta)) <= scaled_cost(ConvSpec(**base, alpha=hi_a, beta=s.beta))
    assert scaled_cost(ConvSpec(**base, alpha=s.alpha, beta=lo_b)) <= scaled_cost(ConvSpec(**base, alpha=s.alpha, beta=hi_b))


@given(specs)
def test_separable_cheaper(s):
    if s.n >= 2 and s.dk >= 2:
        assert dsc_cost(s) < conv_cost(s)

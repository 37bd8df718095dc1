import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import bessel_K_integral as oracle_K
from ovlab.specfun import CROSSOVER, bessel_K, bessel_K_asymptotic, evaluate


def test_reference_values():
    # values frozen from the integral-representation oracle
    assert bessel_K(0, 1.0) == pytest.approx(0.421024438241, abs=1e-12)
    assert bessel_K(1, 1.0) == pytest.approx(0.601907230197, abs=1e-12)


def test_leading_asymptotic_at_50():
    x = 50.0
    assert bessel_K(0, x) * math.sqrt(2 * x / math.pi) * math.exp(x) == pytest.approx(1, abs=1e-2)
    # the full asymptotic series is far better than the leading term
    assert bessel_K(0, x) == pytest.approx(bessel_K_asymptotic(0, x), rel=1e-14)


@pytest.mark.parametrize("order", [0, 1])
@pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 1.999, 2.0, 2.001, 7.5, 30.0])
def test_matches_oracle(order, x):
    assert abs(bessel_K(order, x) - oracle_K(order, x)) < 1e-12 * max(1, oracle_K(order, x))


@pytest.mark.parametrize("order", [0, 1])
def test_continuous_at_crossover(order):
    lo = bessel_K(order, CROSSOVER * (1 - 1e-12))
    hi = bessel_K(order, CROSSOVER)
    assert hi == pytest.approx(lo, rel=1e-11)


@given(st.floats(min_value=0.1, max_value=20))
def test_derivative_relation(x):
    # K0' = -K1
    h = 1e-5 * x
    d = (bessel_K(0, x + h) - bessel_K(0, x - h)) / (2 * h)
    assert d == pytest.approx(-bessel_K(1, x), rel=1e-7)


@given(st.floats(min_value=0.01, max_value=100))
def test_positive_and_ordered(x):
    k0, k1 = bessel_K(0, x), bessel_K(1, x)
    assert 0 < k0 < k1


def test_array_input_and_errors():
    xs = np.array([0.5, 1.0, 5.0])
    out = bessel_K(0, xs)
    assert out.shape == xs.shape
    assert out[1] == bessel_K(0, 1.0)
    with pytest.raises(ValueError):
        bessel_K(2, 1.0)
    with pytest.raises(ValueError):
        bessel_K(0, 0.0)
    assert evaluate(1, 1.0).value == bessel_K(1, 1.0)

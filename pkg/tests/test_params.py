import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardcore.errors import DomainError
from hardcore.params import (HardcoreParams, convert_params, density_to_fugacity,
                             fugacity_to_density, kesten_stigum, markov_kernel,
                             threshold_table)


def test_known_conversion():
    # alpha/(1-2a) * ((1-a)/(1-2a))^(d-1) at d=3, a=0.2: (1/3)(16/9)
    assert density_to_fugacity(0.2, 3) == pytest.approx(16 / 27, rel=1e-15)
    assert fugacity_to_density(16 / 27, 3) == pytest.approx(0.2, abs=1e-12)


def test_zero():
    assert density_to_fugacity(0.0, 5) == 0.0
    p = HardcoreParams.from_lambda(4, 0.0)
    assert p.alpha == 0.0


@settings(max_examples=1000, deadline=None)
@given(st.floats(1e-6, 0.499), st.integers(2, 1000))
def test_roundtrip(alpha, d):
    lam = density_to_fugacity(alpha, d)
    if not math.isfinite(lam) or lam > 1e300:
        return
    assert fugacity_to_density(lam, d) == pytest.approx(alpha, abs=1e-12, rel=1e-10)


def test_monotone():
    a = np.linspace(0.01, 0.49, 50)
    lam = [density_to_fugacity(x, 7) for x in a]
    assert np.all(np.diff(lam) > 0)


@pytest.mark.parametrize("bad", [-0.1, 0.5, 0.7])
def test_alpha_domain(bad):
    with pytest.raises(DomainError):
        density_to_fugacity(bad, 3)


def test_lambda_domain():
    with pytest.raises(DomainError):
        fugacity_to_density(-1.0, 3)


def test_convert_exclusive():
    with pytest.raises(ValueError):
        convert_params(3)
    with pytest.raises(ValueError):
        convert_params(3, lam=1.0, alpha=0.2)


def test_kernel_values():
    k, c = markov_kernel(HardcoreParams.from_alpha(3, 0.2))
    assert (k.p11, k.p10) == (0.0, 1.0)
    assert k.p01 == pytest.approx(0.25)
    assert k.p00 == pytest.approx(0.75)
    assert c.theta == pytest.approx(-0.25)
    assert c.pi01 == pytest.approx(4.0)
    assert c.delta == pytest.approx(3.0)
    assert k.second_eigenvalue() == pytest.approx(c.theta)
    assert np.allclose(k.matrix.sum(axis=1), 1.0)


def test_kernel_stationary():
    for a in (0.05, 0.2, 0.4):
        k, _ = markov_kernel(HardcoreParams.from_alpha(5, a))
        pi = np.array([1 - a, a])
        assert np.allclose(pi @ k.matrix, pi, atol=1e-15)


def test_internal_fugacity():
    p = HardcoreParams.from_alpha(3, 0.2)
    assert p.lam_internal == pytest.approx(p.lam * 0.8 / 0.6)


def test_kesten_stigum():
    assert kesten_stigum(0.2, 3) == pytest.approx(0.125)


def test_threshold_table():
    t = threshold_table(100)
    assert t.alpha_R_lower < t.alpha_R_upper
    assert t.lam_R_lower < t.lam_R_upper
    assert any("asymptotic" in f for f in t.flags)
    small = threshold_table(8)
    assert len(small.flags) >= 2
    with pytest.raises(ValueError):
        threshold_table(2)

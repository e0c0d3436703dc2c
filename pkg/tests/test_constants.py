import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard import (BubbleParams, DomainError, bubble_eval, critical_exponents,
                      riesz_potential_closed_form, riesz_potential_quadrature, universal_constants)
from choquard.constants import bubble_gradient, choquard_residual, exact_solution_prefactor


def _radial(f, n):
    area = 2 * mpmath.pi ** (mpmath.mpf(n) / 2) / mpmath.gamma(mpmath.mpf(n) / 2)
    return float(area * mpmath.quad(lambda r: r ** (n - 1) * f(r), [0, 1, mpmath.inf]))


@pytest.mark.parametrize("n", [3, 4, 5])
def test_gamma0_c1_against_mpmath(n):
    c = universal_constants(n, 1.0, direct=False)
    g0 = (n * (n - 2) * _radial(lambda r: (1 + r * r) ** (-n), n)) ** -0.5
    c1 = _radial(lambda r: (1 + r * r) ** (-mpmath.mpf(n + 2) / 2), n)
    assert c.gamma0 == pytest.approx(g0, rel=1e-10)
    assert c.c1 == pytest.approx(c1, rel=1e-10)


def test_closed_forms_n3_n4():
    c3 = universal_constants(3, 1.0, direct=False)
    c4 = universal_constants(4, 2.0, direct=False)
    assert c3.gamma0 == pytest.approx((3 * math.pi ** 2 / 4) ** -0.5, rel=1e-12)
    assert c3.c1 == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert c4.gamma0 == pytest.approx((4 * math.pi ** 2 / 3) ** -0.5, rel=1e-12)
    assert c4.c1 == pytest.approx(math.pi ** 2 / 2, rel=1e-12)


def test_sobolev_constant_n3():
    # Aubin-Talenti value 3 (pi/2)^(4/3)
    c = universal_constants(3, 1.0, direct=False)
    assert c.S == pytest.approx(3 * (math.pi / 2) ** (4 / 3), rel=1e-10)


def test_exponents():
    e = critical_exponents(3, 1.0)
    assert (e.two_mu_lower, e.two_mu_star, e.two_star) == pytest.approx((5 / 3, 5.0, 6.0))
    with pytest.raises(DomainError):
        critical_exponents(2, 1.0)
    with pytest.raises(DomainError):
        critical_exponents(3, 3.0)
    with pytest.raises(DomainError):
        critical_exponents(3.5, 1.0)


def test_bubble_params_validation():
    with pytest.raises(DomainError):
        BubbleParams((0, 0, 0), 0.0)
    with pytest.raises(DomainError):
        BubbleParams((0, 0, 0), 1.0, -1.0)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.2, 50), r=st.floats(0, 3))
def test_bubble_scaling(lam, r):
    p = BubbleParams((0.0, 0.0, 0.0), lam)
    x = np.array([r, 0.0, 0.0])
    lhs = bubble_eval(p, x)
    rhs = lam ** 0.5 * bubble_eval(BubbleParams((0, 0, 0), 1.0), lam * x)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_bubble_gradient_fd():
    p = BubbleParams((0.1, -0.2, 0.3), 3.0)
    x = np.array([0.4, 0.1, -0.2])
    g = bubble_gradient(p, x)
    e = 1e-6
    fd = [(bubble_eval(p, x + e * np.eye(3)[k]) - bubble_eval(p, x - e * np.eye(3)[k])) / (2 * e)
          for k in range(3)]
    assert np.allclose(g, fd, rtol=1e-7)


def test_riesz_closed_form_against_mc():
    c = universal_constants(3, 1.0, direct=False)
    e = critical_exponents(3, 1.0)
    p = BubbleParams((0, 0, 0), 1.0)
    x = np.array([0.7, 0.0, 0.0])
    val, se = riesz_potential_quadrature(p, x, e, c, method="monte_carlo", samples=200_000, seed=3)
    cf = float(riesz_potential_closed_form(p, x, e, c))
    assert abs(val - cf) < 4 * se + 1e-3 * cf


def test_bubble_solves_choquard_equation():
    c = universal_constants(3, 1.0, direct=False)
    e = critical_exponents(3, 1.0)
    x = np.array([[0.3, 0.1, 0.0], [1.0, -0.5, 0.2]])
    p = BubbleParams((0, 0, 0), 1.5)
    scaled = choquard_residual(p, x, e, c)
    k = exact_solution_prefactor(3, 1.0, c)
    plain = choquard_residual(p, x, e, c, normalization="plain", normalized=False, amplitude=k)
    assert np.max(np.abs(scaled)) < 1e-4
    assert np.max(np.abs(plain)) < 1e-4

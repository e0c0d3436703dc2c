import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard import (BubbleParams, Domain, ScalarField, ZeroFieldError, evaluate_functionals, grad_J,
                      hls_energy, make_grid, project_bubble)
from choquard.energy import (J_normalized, J_value, hls_inequality_margin, outside_box_integral,
                             riesz_sum)


@pytest.fixture(scope="module")
def grid():
    return make_grid(Domain.ball(), 1 / 6)


def _positive_field(grid, seed):
    rng = np.random.default_rng(seed)
    return ScalarField(grid, rng.uniform(0.1, 1.0, grid.size))


def test_direct_matches_brute_force(grid):
    rho = np.random.default_rng(0).uniform(size=grid.size)
    d = grid.points[:, None, :] - grid.points[None, :, :]
    r = np.linalg.norm(d, axis=-1)
    from choquard.energy import kernel_table
    K = np.where(r > 0, r, 1.0) ** -1.0
    np.fill_diagonal(K, kernel_table(grid, 1.0).flat[0])
    assert np.allclose(riesz_sum(grid, rho, 1.0, "direct"), K @ rho, rtol=1e-12)
    assert np.allclose(riesz_sum(grid, rho, 1.0, "fft"), K @ rho, rtol=1e-10)


def test_cell_average_exceeds_corner_value(grid):
    from choquard.energy import kernel_table
    tab = kernel_table(grid, 1.0)
    assert tab.flat[0] > tab[1, 0, 0]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), c=st.floats(0.1, 10.0))
def test_J_scale_invariant(seed, c):
    g = make_grid(Domain.ball(), 1 / 4)
    u = _positive_field(g, seed)
    assert J_normalized(u * c, 1.0) == pytest.approx(J_normalized(u, 1.0), rel=1e-10)


def test_functionals_consistency(grid):
    eb = evaluate_functionals(_positive_field(grid, 1), 1.0)
    assert eb.dirichlet == pytest.approx(1.0, rel=1e-12)
    assert eb.J == pytest.approx(1.0 / eb.D, rel=1e-12)
    q = 5.0
    assert eb.J1 == pytest.approx((0.5 - 1 / (2 * q)) * eb.D ** (-1 / (q - 1)), rel=1e-12)


def test_zero_field_rejected(grid):
    with pytest.raises(ZeroFieldError):
        J_normalized(ScalarField(grid, np.zeros(grid.size)), 1.0)


def test_gradient_tangential(grid):
    u = _positive_field(grid, 2)
    u = u * (1 / u.norm1())
    g = grad_J(u, 1.0, tangential=True)
    from choquard import dirichlet_inner_product
    assert abs(dirichlet_inner_product(g, u)) < 1e-10 * g.norm1()


def test_hls_margin_nonnegative(consts3_fast):
    pb = project_bubble(BubbleParams((0, 0, 0), 6.0), Domain.ball(), "solve", h=1 / 12, consts=consts3_fast)
    assert hls_inequality_margin(pb.field, consts3_fast) > 0


def test_outside_box_integral_gaussian():
    # int_{|x|_inf > R} exp(-|x|^2) over R^3
    from scipy import special
    R = 1.0
    exact = np.pi ** 1.5 * (1 - special.erf(R) ** 3)
    val = outside_box_integral(lambda r: np.exp(-r * r), 3, R)
    assert val == pytest.approx(exact, rel=1e-6)


def test_J_value_unnormalized(grid):
    u = _positive_field(grid, 3)
    assert J_value(u * (1 / u.norm1()), 1.0) == pytest.approx(J_normalized(u, 1.0), rel=1e-12)
    assert hls_energy(u, 1.0, "fft") == pytest.approx(hls_energy(u, 1.0, "direct"), rel=1e-12)

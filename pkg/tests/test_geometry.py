import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard import (Domain, GridMismatchError, ScalarField, dirichlet_inner_product, make_grid,
                      poisson_solve)


def test_ball_node_count_matches_lattice_enumeration():
    g = make_grid(Domain.ball(), 0.5)
    pts = [p for p in itertools.product([-0.5, 0.0, 0.5], repeat=3) if np.linalg.norm(p) < 1]
    assert g.size == len(pts) == 27


@pytest.mark.parametrize("spec", ["ball:1.0", "annulus:0.3,1.0", "box:0,1"])
def test_domain_spec_roundtrip(spec):
    d = Domain.parse(spec)
    assert Domain.from_spec(d.spec()) == d


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain.parse("annulus:1.0,0.3")
    with pytest.raises(ValueError):
        Domain.parse("torus:1")
    with pytest.raises(ValueError):
        Domain.ball(radius=-1.0)


def test_signed_distance_annulus():
    d = Domain.annulus(0.3, 1.0)
    x = np.array([[0.65, 0, 0], [0.0, 0.0, 0.0], [2.0, 0, 0]])
    assert np.allclose(d.signed_distance(x), [0.35, -0.3, -1.0])


def test_operator_is_symmetric_positive():
    g = make_grid(Domain.annulus(0.3, 1.0), 0.1)
    A = g.operator
    assert abs(A - A.T).max() == 0.0
    assert np.all(A.diagonal() > 0)


def test_second_order_on_harmonic_oracle():
    # u = x^2 - y^2 + z is harmonic; solve with its boundary values
    f = lambda p: p[..., 0] ** 2 - p[..., 1] ** 2 + p[..., 2]
    errs = []
    for h in (0.1, 0.05):
        g = make_grid(Domain.ball(), h)
        u = g.solve(g.dirichlet_lift(f))
        errs.append(np.max(np.abs(u - f(g.points))))
    assert errs[1] < errs[0] / 2.5


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_dirichlet_inner_product_symmetric_and_matches_operator(seed):
    g = make_grid(Domain.ball(), 0.2)
    rng = np.random.default_rng(seed)
    u = ScalarField(g, rng.normal(size=g.size))
    v = ScalarField(g, rng.normal(size=g.size))
    a, b = dirichlet_inner_product(u, v), dirichlet_inner_product(v, u)
    assert a == b
    assert a == pytest.approx(g.h ** 3 * u.values @ (g.operator @ v.values), rel=1e-12)
    assert dirichlet_inner_product(u, u) > 0


def test_poisson_solve_constant_rhs_ball():
    # -Lap w = 6 in the unit ball has w = 1 - |x|^2; the cut-edge stencil is O(h^2)
    g = make_grid(Domain.ball(), 0.05)
    w = poisson_solve(ScalarField(g, np.full(g.size, 6.0)))
    assert np.max(np.abs(w.values - (1 - np.sum(g.points ** 2, axis=1)))) < g.h ** 2


def test_large_grid_uses_iterative_path():
    g = make_grid(Domain.ball(), 0.04)
    assert g.size > 3000
    w = g.solve(np.full(g.size, 6.0))
    assert np.max(np.abs(w - (1 - np.sum(g.points ** 2, axis=1)))) < g.h ** 2
    assert np.linalg.norm(6.0 - g.operator @ w) <= 1e-8 * np.linalg.norm(np.full(g.size, 6.0))


def test_field_bytes_roundtrip(tmp_path):
    g = make_grid(Domain.annulus(0.3, 1.0), 0.1)
    u = ScalarField(g, np.arange(g.size, dtype=float))
    path = tmp_path / "u.bin"
    u.save(path)
    v = ScalarField.load(path)
    assert v.grid.same_as(g)
    assert np.array_equal(u.values, v.values)
    assert v.to_bytes() == u.to_bytes()


def test_field_immutability_and_mismatch():
    g1 = make_grid(Domain.ball(), 0.25)
    g2 = make_grid(Domain.ball(), 0.2)
    u = ScalarField(g1, np.ones(g1.size))
    with pytest.raises(ValueError):
        u.values[0] = 2.0
    with pytest.raises(GridMismatchError):
        dirichlet_inner_product(u, ScalarField(g2, np.ones(g2.size)))
    with pytest.raises(ValueError):
        ScalarField(g1, np.full(g1.size, np.nan))

import numpy as np
import pytest

from choquard import Domain, DomainError, SingularityError, correction_for, green_eval, robin_function
from choquard.green import harmonic_part_annulus, harmonic_part_ball, singular_part, walk_on_spheres


def test_ball_robin_closed_form(consts3_fast):
    # H(a, a) = gamma0 / (1 - |a|^2) in the unit ball, n = 3
    H, err = robin_function((0.5, 0, 0), Domain.ball())
    assert H == pytest.approx(consts3_fast.gamma0 / 0.75, rel=1e-12)
    assert err == 0.0


@pytest.mark.parametrize("dom,a", [(Domain.ball(), (0.3, -0.2, 0.1)),
                                   (Domain.annulus(0.3, 1.0), (0.65, 0.0, 0.0))])
def test_harmonic_part_matches_singular_part_on_boundary(dom, a):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(20, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    fn = harmonic_part_ball if dom.kind == "ball" else harmonic_part_annulus
    for r in ({dom.radius} | ({dom.r_inner} if dom.kind == "annulus" else set())):
        pts = r * v
        assert np.allclose(fn(a, pts, dom), singular_part(a, pts), rtol=1e-10)


def test_annulus_series_against_grid_and_wos():
    dom = Domain.annulus(0.3, 1.0)
    a = np.array([0.65, 0.0, 0.0])
    exact = float(harmonic_part_annulus(a, a, dom))
    assert exact == pytest.approx(0.7244075047, rel=1e-9)
    grid_val, _ = correction_for(a, dom, "grid", h=0.05)(a)
    assert grid_val == pytest.approx(exact, rel=5e-3)
    g = lambda y: singular_part(a, y)
    m, se = walk_on_spheres(a, dom, g, walks=4000, seed=1)
    assert abs(m - exact) < 4 * se


def test_wos_worker_independence():
    dom = Domain.ball()
    a = np.array([0.5, 0.0, 0.0])
    g = lambda y: singular_part(a, y)
    r1 = walk_on_spheres(a, dom, g, walks=5000, seed=7, workers=1)
    r4 = walk_on_spheres(a, dom, g, walks=5000, seed=7, workers=4)
    assert r1 == r4


def test_green_symmetry_ball():
    dom = Domain.ball()
    a, b = np.array([0.2, 0.1, 0.0]), np.array([-0.4, 0.3, 0.2])
    gab = green_eval(a, b, correction_for(a, dom))[0]
    gba = green_eval(b, a, correction_for(b, dom))[0]
    assert gab == pytest.approx(gba, rel=1e-12)
    assert gab > 0


def test_green_errors():
    dom = Domain.ball()
    a = (0.2, 0.0, 0.0)
    corr = correction_for(a, dom)
    with pytest.raises(SingularityError):
        green_eval(a, a, corr)
    with pytest.raises(DomainError):
        correction_for((1.5, 0, 0), dom)
    with pytest.raises(DomainError):
        correction_for(a, Domain.box((-1,) * 3, (1,) * 3), "closed")

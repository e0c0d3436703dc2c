"""Acceptance checks, one test per criterion (n = 3, mu = 1 unless stated).

Tolerances are fixed here and are not tuned to observed results.
"""

import math
import time

import mpmath
import numpy as np
import pytest

from choquard import (BubbleConfiguration, BubbleParams, Domain, ScalarField, bubble_fit,
                      critical_exponents, dirichlet_inner_product, expansion_J, grad_J, make_grid,
                      project_bubble, riesz_potential_closed_form, riesz_potential_quadrature,
                      run_flow, seed_field, universal_constants, whole_space_J)
from choquard.energy import J_value, hls_energy, hls_inequality_margin
from choquard.expansion import bound_checks, eps_interaction
from choquard.green import correction_for, singular_part, walk_on_spheres
from choquard.projection import cross_energy_study, richardson, self_energy_study

MU = 1.0


def _radial_oracle(f, n):
    area = 2 * mpmath.pi ** (mpmath.mpf(n) / 2) / mpmath.gamma(mpmath.mpf(n) / 2)
    return float(area * mpmath.quad(lambda r: r ** (n - 1) * f(r), [0, 1, mpmath.inf]))


def test_c01_constants(verdict):
    worst = 0.0
    detail = []
    for n, mu in ((3, 1.0), (4, 1.0)):
        c = universal_constants(n, mu, direct=False)
        g0 = (n * (n - 2) * _radial_oracle(lambda r: (1 + r * r) ** (-n), n)) ** -0.5
        c1 = _radial_oracle(lambda r: (1 + r * r) ** (-mpmath.mpf(n + 2) / 2), n)
        worst = max(worst, abs(c.gamma0 / g0 - 1), abs(c.c1 / c1 - 1))
        detail.append(f"n={n} gamma0={c.gamma0:.6f} c1={c.c1:.5f}")
    verdict("criterion 1 constants", worst <= 1e-8, f"{'; '.join(detail)}; max rel err {worst:.1e} (tol 1e-8)")


def test_c02_identity_vs_double_integral(verdict):
    c = universal_constants(3, MU)
    verdict("criterion 2 S~ identity", c.S_tilde_gap <= 1e-2,
            f"identity {c.S_tilde_HL:.6f} direct {c.S_tilde_HL_direct:.6f} rel gap {c.S_tilde_gap:.2e} (tol 1e-2)")


def test_c03_riesz_closed_form(verdict):
    c = universal_constants(3, MU, direct=False)
    e = critical_exponents(3, MU)
    p = BubbleParams((0.0, 0.0, 0.0), 1.0)
    errs = []
    for r in (0.0, 0.5, 1.0, 2.0):
        x = np.array([r, 0.0, 0.0])
        cf = float(riesz_potential_closed_form(p, x, e, c))
        val, _ = riesz_potential_quadrature(p, x, e, c, method="radial")
        errs.append(abs(val - cf) / cf)
    verdict("criterion 3 Riesz potential", max(errs) <= 1e-2,
            "rel errs " + ", ".join(f"{v:.1e}" for v in errs) + " (tol 1e-2)")


def test_c04_scale_invariance(verdict):
    c = universal_constants(3, MU, direct=False)
    J1 = whole_space_J(BubbleParams((0, 0, 0), 1.0), MU, R=4.0, h=0.1, consts=c)["J"]
    J2 = whole_space_J(BubbleParams((0, 0, 0), 2.0), MU, R=4.0, h=0.1, consts=c)["J"]
    rel = abs(J1 - J2) / J1
    verdict("criterion 4 scale invariance", rel <= 1e-2, f"J(lam=1)={J1:.3f} J(lam=2)={J2:.3f} rel {rel:.2e} (tol 1e-2)")


def test_c05_robin_function(verdict):
    c = universal_constants(3, MU, direct=False)
    dom = Domain.ball()
    a = np.array([0.5, 0.0, 0.0])
    exact = 4.0 / 3.0 * c.gamma0
    wos, se = walk_on_spheres(a, dom, lambda y: singular_part(a, y), walks=100_000, seed=0)
    grid_val, _ = correction_for(a, dom, "grid", h=0.02)(a)
    e1, e2 = abs(wos / exact - 1), abs(grid_val / exact - 1)
    verdict("criterion 5 Robin function", e1 <= 0.02 and e2 <= 0.02,
            f"exact {exact:.6f} WoS {wos:.6f} (+-{se:.1e}, rel {e1:.1e}) grid {grid_val:.6f} (rel {e2:.1e}) (tol 2e-2)")


def test_c06_self_energy_contraction(verdict):
    c = universal_constants(3, MU, direct=False)
    dom = Domain.ball()
    res = {lam: self_energy_study(BubbleParams((0, 0, 0), lam), dom, 1 / 32, c) for lam in (8.0, 16.0)}
    r8, r16 = res[8.0]["residual_extrapolated"], res[16.0]["residual_extrapolated"]
    verdict("criterion 6 <PU,PU> residual", r16 <= r8 / 3,
            f"extrapolated residual lam=8 {r8:.3e}, lam=16 {r16:.3e}, ratio {r8 / r16:.2f} (need >= 3)")


def test_c07_cross_energy(verdict):
    c = universal_constants(3, MU, direct=False)
    dom = Domain.annulus(0.3, 1.0)
    pi = BubbleParams((0.65, 0.0, 0.0), 12.0)
    pj = BubbleParams((-0.65, 0.0, 0.0), 12.0)
    st = cross_energy_study(pi, pj, dom, 0.05, c)
    ratio = st["ratio_extrapolated"]
    verdict("criterion 7 cross energy", 0.9 <= ratio <= 1.1,
            f"measured {st['extrapolated']:.4e} predicted {st['predicted']:.4e} ratio {ratio:.3f} (need [0.9, 1.1])")


@pytest.fixture(scope="module")
def ball_expansions():
    c = universal_constants(3, MU)
    out = {}
    for lam in (10.0, 20.0):
        conf = BubbleConfiguration.from_arrays([(0.0, 0.0, 0.0)], lam, 1.0, Domain.ball())
        out[lam] = expansion_J(conf, c, direct=True, h=1 / 32, extrapolate=True)
    return out


def test_c08a_single_bubble_gap(verdict, ball_expansions):
    rep = ball_expansions[10.0]
    rel = rep.gap / abs(rep.correction)
    verdict("criterion 8a p=1 gap", rel <= 0.02,
            f"lam=10 predicted {rep.predicted_J:.2f} direct {rep.direct_J:.2f} gap/correction {rel:.4f} (tol 0.02)")


def test_c08b_gap_contraction(verdict, ball_expansions):
    g10, g20 = ball_expansions[10.0].gap, ball_expansions[20.0].gap
    verdict("criterion 8b gap contraction", g10 / g20 >= 2.0,
            f"gap lam=10 {g10:.2f}, lam=20 {g20:.2f}, factor {g10 / g20:.2f} (need >= 2)")


def test_c08c_two_bubble_annulus_gap(verdict):
    c = universal_constants(3, MU)
    conf = BubbleConfiguration.from_arrays([(0.65, 0, 0), (-0.65, 0, 0)], 12.0, [0.5, 0.5],
                                           Domain.annulus(0.3, 1.0))
    rep = expansion_J(conf, c, direct=True, h=1 / 20, extrapolate=True)
    rel = rep.gap / abs(rep.correction)
    verdict("criterion 8c p=2 annulus gap", rel <= 0.05,
            f"lam=12 predicted {rep.predicted_J:.1f} direct {rep.direct_J:.1f} gap/correction {rel:.4f} (tol 0.05)")


def test_c09_level_bounds(verdict):
    c = universal_constants(3, MU)
    S = c.S_tilde_HL
    eps, lam = 0.25, 16.0
    dom = Domain.ball()
    lines, ok = [], True
    for centers in ([(0.0, 0.0, 0.0)], [(-0.5, 0.0, 0.0), (0.5, 0.0, 0.0)]):
        conf = BubbleConfiguration.from_arrays(centers, lam, 1.0, dom)
        bs = conf.bubbles
        admissible = (lam > 1 / eps and lam * conf.boundary_distances.min() > 1 / eps
                      and all(eps_interaction(bs[i], bs[j]) < eps
                              for i in range(conf.p) for j in range(conf.p) if i != j))
        r1 = bound_checks(conf, c, eps, 1 / 32)
        r2 = bound_checks(conf, c, eps, 1 / 64)
        J = richardson(r1.J, r2.J)
        margin = r1.upper_generic - J
        ok &= admissible and margin > 0
        lines.append(f"p={conf.p} J/S~={J / S:.3f} bound/S~={r1.upper_generic / S:.3f} margin {margin / S:+.3f} S~")
    h = 1 / 32
    deg = [BubbleConfiguration.from_arrays([(-0.5, 0, 0), (0.5, 0, 0)], lam, [0.999, 0.001], dom),
           BubbleConfiguration.from_arrays([(-h, 0, 0), (h, 0, 0)], lam, [0.5, 0.5], dom)]
    for conf in deg:
        r = bound_checks(conf, c, eps, h, slack=0.05)
        ok &= r.degenerate and r.holds_degenerate
        lines.append(f"degenerate J/S~={r.J / S:.3f} <= {r.upper_degenerate / S:.3f}")
    verdict("criterion 9 level bounds", ok, "; ".join(lines))


def test_c10_gradient_fd(verdict):
    g = make_grid(Domain.box((0.0,) * 3, (1.0,) * 3), 1 / 17)
    assert g.size == 16 ** 3
    worst = 0.0
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        u = ScalarField(g, rng.uniform(0.5, 1.5, g.size))
        v = ScalarField(g, rng.normal(size=g.size))
        ana = dirichlet_inner_product(grad_J(u, MU), v)
        t = 1e-4
        fd = (J_value(u + v * t, MU) - J_value(u - v * t, MU)) / (2 * t)
        worst = max(worst, abs(fd - ana) / abs(ana))
    verdict("criterion 10 gradient", worst <= 1e-4, f"max rel err over 20 pairs {worst:.2e} (tol 1e-4)")


def test_c11_flow(verdict):
    c = universal_constants(3, MU, direct=False)
    dom = Domain.ball()
    g = make_grid(dom, 1 / 16)
    st = seed_field("single-bubble", dom, g, MU, lam=4.0, consts=c)
    st.dt *= 0.05
    worst_norm, min_val = [0.0], [0.0]

    def check(s):
        worst_norm[0] = max(worst_norm[0], abs(dirichlet_inner_product(s.u, s.u) - 1.0))
        min_val[0] = min(min_val[0], float(np.min(s.u.values)))

    summ = run_flow(st, max_steps=500, snapshot_every=100, dt_cap=st.dt, consts=c, callback=check)
    Js = [J for _, J, _ in summ.state.J_history]
    monotone_J = all(b <= a for a, b in zip(Js, Js[1:]))
    lams, prev = [], [BubbleParams(tuple(dom.anchor()), 4.0)]
    for _, _, _, u in summ.snapshots[-5:]:
        fit = bubble_fit(u, 1, init=prev, consts=c)
        prev = fit.bubbles()
        lams.append(float(fit.lams[0]))
    rising = all(b > a for a, b in zip(lams, lams[1:]))
    ok = (summ.state.steps == 500 and monotone_J and worst_norm[0] <= 1e-10 and min_val[0] >= 0 and rising)
    verdict("criterion 11 flow", ok,
            f"steps {summ.state.steps} status {summ.status} J {Js[0] / c.S_tilde_HL:.3f}->{Js[-1] / c.S_tilde_HL:.3f} S~, "
            f"J monotone {monotone_J}, max |norm-1| {worst_norm[0]:.1e}, min u {min_val[0]:.1e}, "
            f"fitted lam " + ", ".join(f"{v:.3f}" for v in lams))


def test_c12_fit_recovery(verdict):
    c = universal_constants(3, MU, direct=False)
    dom = Domain.ball()
    g = make_grid(dom, 1 / 16)
    cases = [[BubbleParams((0.1, -0.05, 0.0), 8.0, 1.0)],
             [BubbleParams((-0.35, 0.1, 0.0), 8.0, 1.0), BubbleParams((0.35, -0.1, 0.05), 10.0, 0.7)]]
    ok, lines = True, []
    for truth in cases:
        u = ScalarField(g, sum(b.alpha * project_bubble(b, dom, "solve", g, consts=c).values for b in truth))
        fit = bubble_fit(u, len(truth), consts=c)
        truth = sorted(truth, key=lambda b: b.a)
        dpos = max(np.linalg.norm(np.subtract(f, t.a)) for f, t in zip(fit.centers, truth))
        dlam = max(abs(f / t.lam - 1) for f, t in zip(fit.lams, truth))
        dalp = max(abs(f - t.alpha) for f, t in zip(fit.alphas, truth))
        ok &= dpos <= g.h and dlam <= 0.05 and dalp <= 1e-3
        lines.append(f"p={len(truth)} |da| {dpos:.1e} (<= h) |dlam|/lam {dlam:.1e} |dalpha| {dalp:.1e}")
    verdict("criterion 12 fit recovery", ok, "; ".join(lines))


def test_c13_energy_paths(verdict):
    g = make_grid(Domain.ball(), 1 / 8)
    worst = 0.0
    for k in range(50):
        rng = np.random.default_rng(k)
        u = ScalarField(g, rng.normal(size=g.size))
        a, b = hls_energy(u, MU, "direct"), hls_energy(u, MU, "fft")
        worst = max(worst, abs(a - b) / abs(a))
    big = make_grid(Domain.box((0.0,) * 3, (1.0,) * 3), 1 / 49)
    assert big.size == 48 ** 3
    u = ScalarField(big, np.random.default_rng(99).uniform(size=big.size))
    hls_energy(u, MU, "direct")  # compile outside the timing
    t0 = time.perf_counter()
    hls_energy(u, MU, "fft")
    t_fft = time.perf_counter() - t0
    t0 = time.perf_counter()
    hls_energy(u, MU, "direct")
    t_dir = time.perf_counter() - t0
    verdict("criterion 13 energy paths", worst <= 1e-10 and t_fft < t_dir,
            f"max rel diff {worst:.1e} (tol 1e-10); 48^3 fft {t_fft:.3f}s direct {t_dir:.2f}s speedup {t_dir / t_fft:.0f}x")


HLS_TOL = 1e-2  # relative to S_HL; lattice energies at h = 1/10


def test_c14_hls_inequality(verdict):
    c = universal_constants(3, MU, direct=False)
    dom = Domain.ball()
    g = make_grid(dom, 1 / 10)
    worst = math.inf
    for k in range(100):
        rng = np.random.default_rng(5000 + k)
        kind = k % 3
        if kind == 0:
            vals = rng.uniform(0.0, 1.0, g.size)
        elif kind == 1:
            vals = np.zeros(g.size)
            for _ in range(rng.integers(1, 5)):
                x0 = rng.uniform(-0.6, 0.6, 3)
                w = rng.uniform(0.1, 0.4)
                vals += rng.uniform(0.2, 1.0) * np.exp(-np.sum((g.points - x0) ** 2, axis=1) / (2 * w * w))
        else:
            a = rng.uniform(-0.4, 0.4, 3)
            vals = project_bubble(BubbleParams(tuple(a), rng.uniform(2.0, 8.0)), dom, "solve", g,
                                  consts=c, regime_floor=0.0).values
        worst = min(worst, hls_inequality_margin(ScalarField(g, vals), c) / c.S_HL)
    verdict("criterion 14 HLS inequality", worst >= -HLS_TOL,
            f"min relative margin over 100 fields {worst:+.3e} (need >= -{HLS_TOL})")

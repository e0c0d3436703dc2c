"""Projected bubbles ``PU`` on a bounded domain and their energy expansions.

``PU`` is the Dirichlet projection of ``U = gamma0 * delta_(a, lam)``:
``-Lap PU = -Lap U`` in the domain with ``PU = 0`` on the boundary. Two
representations are provided, a lattice solve and the truncated expansion
``U - H(a, .) / lam^((n-2)/2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import BubbleParams, UniversalConstants, bubble_eval, universal_constants
from .errors import DomainError
from .geometry import Domain, Grid, ScalarField, dirichlet_inner_product, make_grid
from .green import HarmonicCorrection, correction_for, green_eval

REGIME_FLOOR = 4.0


class RegimeWarning(UserWarning):
    """Issued when ``lam * d(a, boundary)`` is too small for the expansion."""


@dataclass(frozen=True)
class ProjectedBubble:
    """A projected bubble sampled on a grid.

    Attributes
    ----------
    params : BubbleParams
    domain : Domain
    method : str
        ``"solve"`` or ``"approx"``.
    field : ScalarField
    regime : float
        ``lam * d(a, boundary)``.
    regime_ok : bool
        False when ``regime`` is below the floor used at construction.
    clamp : float
        Largest magnitude clamped to zero (approx method only).
    """

    params: BubbleParams
    domain: Domain
    method: str
    field: ScalarField
    regime: float
    regime_ok: bool
    clamp: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def _regime(p: BubbleParams, domain: Domain, floor: float):
    d = float(domain.signed_distance(p.center))
    if not d > 0:
        raise DomainError(f"bubble center {p.a} is not interior")
    r = p.lam * d
    ok = r >= floor
    if not ok:
        warnings.warn(f"lam * d(a, boundary) = {r:.3g} is below the regime floor {floor}",
                      RegimeWarning, stacklevel=3)
    return r, ok


def project_bubble(p: BubbleParams, domain: Domain, method: str = "solve", grid: Grid | None = None,
                   *, h: float | None = None, correction: HarmonicCorrection | None = None,
                   consts: UniversalConstants | None = None,
                   regime_floor: float = REGIME_FLOOR) -> ProjectedBubble:
    """Build ``PU_(a, lam)`` on a grid.

    Parameters
    ----------
    p : BubbleParams
        Center and concentration; ``p.alpha`` is ignored (PU is unit-amplitude).
    method : {"solve", "approx"}
        ``solve`` inverts the discrete Laplacian on the closed-form ``-Lap U``;
        ``approx`` evaluates ``U - H(a, .) / lam^((n-2)/2)`` clamped at zero.
    grid : Grid, optional
        Built from ``h`` when omitted.
    correction : HarmonicCorrection, optional
        H(a, .) for the approx method; defaults to ``correction_for``.
    """
    if grid is None:
        if h is None:
            raise DomainError("need a grid or a mesh width")
        grid = make_grid(domain, h)
    if grid.domain != domain:
        raise DomainError("grid was built on a different domain")
    if p.n != domain.n:
        raise DomainError("bubble and domain dimensions differ")
    regime, ok = _regime(p, domain, regime_floor)
    n = domain.n
    consts = consts or universal_constants(n, 1.0, direct=False)
    unit = BubbleParams(p.a, p.lam)
    U = bubble_eval(unit, grid.points, normalized=True, gamma0=consts.gamma0)
    if method == "solve":
        rhs = consts.bubble_lap_coeff * U ** ((n + 2.0) / (n - 2.0))
        vals = grid.solve(rhs)
        return ProjectedBubble(p, domain, "solve", ScalarField(grid, vals), regime, ok)
    if method == "approx":
        corr = correction or correction_for(p.a, domain)
        if corr.kind in ("ball", "annulus"):
            from .green import harmonic_part_annulus, harmonic_part_ball
            fn = harmonic_part_ball if corr.kind == "ball" else harmonic_part_annulus
            Hx = np.asarray(fn(p.a, grid.points, domain), dtype=float)
        else:
            Hx = np.array([corr.value(x) for x in grid.points])
        vals = U - Hx / p.lam ** ((n - 2) / 2.0)
        clamp = float(max(0.0, -vals.min()))
        vals = np.maximum(vals, 0.0)
        return ProjectedBubble(p, domain, "approx", ScalarField(grid, vals), regime, ok, clamp)
    raise ValueError(f"unknown projection method {method!r}")


def theta_remainder(pb: ProjectedBubble, correction: HarmonicCorrection | None = None,
                    consts: UniversalConstants | None = None):
    """``theta = U - PU - H(a, .)/lam^((n-2)/2)`` on the nodes and its pointwise bound.

    Returns ``(theta, bound)`` where ``bound = gamma0 / (lam^((n+2)/2) |x-a|^n)``.
    """
    g = pb.grid
    n = g.n
    p = pb.params
    consts = consts or universal_constants(n, 1.0, direct=False)
    corr = correction or correction_for(p.a, pb.domain)
    approx = project_bubble(p, pb.domain, "approx", g, correction=corr, consts=consts,
                            regime_floor=0.0)
    U = bubble_eval(BubbleParams(p.a, p.lam), g.points, normalized=True, gamma0=consts.gamma0)
    # unclamped U - H/lam^((n-2)/2), rebuilt from the clamp-free pieces
    Hscaled = U - approx.values
    neg = approx.values == 0.0
    if np.any(neg):
        Hscaled = Hscaled.copy()
        from .green import harmonic_part_annulus, harmonic_part_ball
        if corr.kind == "ball":
            Hs = harmonic_part_ball(p.a, g.points[neg], pb.domain)
        elif corr.kind == "annulus":
            Hs = harmonic_part_annulus(p.a, g.points[neg], pb.domain)
        else:
            Hs = np.array([corr.value(x) for x in g.points[neg]])
        Hscaled[neg] = np.asarray(Hs) / p.lam ** ((n - 2) / 2.0)
    theta = U - pb.values - Hscaled
    r = np.linalg.norm(g.points - p.center, axis=1)
    with np.errstate(divide="ignore"):
        bound = consts.gamma0 / (p.lam ** ((n + 2) / 2.0) * r ** n)
    return theta, bound


@dataclass
class EnergyComparison:
    """Measured discrete energy against its asymptotic prediction."""

    measured: float
    predicted: float
    regime_ok: bool = True
    detail: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return abs(self.measured - self.predicted)

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted


def self_energy_prediction(p: BubbleParams, consts: UniversalConstants, H_aa: float) -> float:
    """``1 - gamma0 n (n-2) c1 H(a, a) / lam^(n-2)``."""
    n = consts.n
    return 1.0 - consts.gamma0 * n * (n - 2) * consts.c1 * H_aa / p.lam ** (n - 2)


def cross_energy_prediction(lam: float, consts: UniversalConstants, G_ij: float) -> float:
    """``n (n-2) gamma0 c1 G(a_i, a_j) / lam^(n-2)``."""
    n = consts.n
    return n * (n - 2) * consts.gamma0 * consts.c1 * G_ij / lam ** (n - 2)


def pu_self_energy(pb: ProjectedBubble, consts: UniversalConstants,
                   correction: HarmonicCorrection | None = None) -> EnergyComparison:
    """Discrete ``<PU, PU>`` against ``1 - gamma0 n(n-2) c1 H(a,a) / lam^(n-2)``."""
    corr = correction or correction_for(pb.params.a, pb.domain)
    H_aa, H_err = corr(np.asarray(pb.params.a, dtype=float))
    measured = dirichlet_inner_product(pb.field, pb.field)
    predicted = self_energy_prediction(pb.params, consts, H_aa)
    return EnergyComparison(measured, predicted, pb.regime_ok,
                            {"H_aa": H_aa, "H_err": H_err, "h": pb.grid.h, "lam": pb.params.lam})


def pu_cross_energy(pb_i: ProjectedBubble, pb_j: ProjectedBubble, consts: UniversalConstants,
                    correction: HarmonicCorrection | None = None) -> EnergyComparison:
    """Discrete ``<PU_i, PU_j>`` against ``n(n-2) gamma0 c1 G(a_i, a_j) / lam^(n-2)``.

    ``correction`` is H(a_i, .); the closed or default numeric form is used when omitted.
    """
    pi, pj = pb_i.params, pb_j.params
    if pi.lam != pj.lam:
        raise DomainError("cross-energy expansion needs a common lambda")
    if np.allclose(pi.a, pj.a):
        raise DomainError("cross-energy needs distinct centers")
    corr = correction or correction_for(pi.a, pb_i.domain)
    G, G_err = green_eval(pi.a, pj.a, corr)
    measured = dirichlet_inner_product(pb_i.field, pb_j.field)
    predicted = cross_energy_prediction(pi.lam, consts, G)
    sep = pi.lam * float(np.linalg.norm(np.subtract(pi.a, pj.a)))
    return EnergyComparison(measured, predicted, pb_i.regime_ok and pb_j.regime_ok,
                            {"G": G, "G_err": G_err, "lam_sep": sep, "h": pb_i.grid.h, "lam": pi.lam})


def richardson(coarse: float, fine: float, order: float = 2.0) -> float:
    """Extrapolate values at ``h`` and ``h/2`` assuming error ``~ h^order``."""
    f = 2.0 ** order
    return (f * fine - coarse) / (f - 1.0)


def self_energy_study(p: BubbleParams, domain: Domain, h: float, consts: UniversalConstants,
                      correction: HarmonicCorrection | None = None, order: float = 2.0) -> dict:
    """``<PU, PU>`` at ``h`` and ``h/2`` with both fixed-h and extrapolated residuals."""
    recs = []
    for hh in (h, h / 2.0):
        pb = project_bubble(p, domain, "solve", h=hh, consts=consts)
        recs.append(pu_self_energy(pb, consts, correction))
    extrap = richardson(recs[0].measured, recs[1].measured, order)
    pred = recs[0].predicted
    return {
        "lam": p.lam,
        "h": h,
        "measured_h": recs[0].measured,
        "measured_h2": recs[1].measured,
        "extrapolated": extrap,
        "predicted": pred,
        "residual_fixed_h": abs(recs[1].measured - pred),
        "residual_extrapolated": abs(extrap - pred),
        "regime_ok": recs[0].regime_ok,
    }


def cross_energy_study(pi: BubbleParams, pj: BubbleParams, domain: Domain, h: float,
                       consts: UniversalConstants, order: float = 2.0) -> dict:
    """``<PU_i, PU_j>`` at ``h`` and ``h/2`` plus the extrapolated ratio to the prediction."""
    recs = []
    for hh in (h, h / 2.0):
        g = make_grid(domain, hh)
        bi = project_bubble(pi, domain, "solve", g, consts=consts)
        bj = project_bubble(pj, domain, "solve", g, consts=consts)
        recs.append(pu_cross_energy(bi, bj, consts))
    extrap = richardson(recs[0].measured, recs[1].measured, order)
    pred = recs[0].predicted
    return {
        "lam": pi.lam,
        "h": h,
        "measured_h": recs[0].measured,
        "measured_h2": recs[1].measured,
        "extrapolated": extrap,
        "predicted": pred,
        "ratio_fixed_h": recs[1].measured / pred,
        "ratio_extrapolated": extrap / pred,
        "G": recs[0].detail["G"],
        "regime_ok": recs[0].regime_ok,
    }

"""Dirichlet Green function ``G(a, x) = gamma0 |x - a|^(2-n) - H(a, x)``.

The regular part H is harmonic in the domain with boundary values
``gamma0 |y - a|^(2-n)``. Representations: the image formula on balls, a
zonal-harmonic series on concentric annuli, a lattice Laplace solve, and
Walk-on-Spheres.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .constants import _gamma0
from .errors import DomainError, SingularityError
from .geometry import Domain, Grid, ScalarField, make_grid
from . import quadrature as quad

WOS_BLOCK = 4096
WOS_MAX_STEPS = 100_000


def _g0(n):
    return _gamma0(n, quad.RTOL)


def singular_part(a, x, n=None):
    """``gamma0 |x - a|^(2-n)``."""
    a = np.asarray(a, dtype=float)
    n = n or a.shape[-1]
    r = np.linalg.norm(np.asarray(x, dtype=float) - a, axis=-1)
    return _g0(n) * r ** (2.0 - n)


def harmonic_part_ball(a, x, ball: Domain):
    """Image-charge formula for H on a ball, vectorized over ``x``."""
    if ball.kind != "ball":
        raise DomainError("closed form needs a ball")
    if not ball.signed_distance(a) > 0:
        raise DomainError(f"source {a} is not inside the ball")
    n = ball.n
    c = np.array(ball.center)
    R = ball.radius
    ap = (np.asarray(a, dtype=float) - c) / R
    xp = (np.asarray(x, dtype=float) - c) / R
    # |a'|^2 |x' - a'/|a'|^2|^2 written without the 1/|a'|^2 pole
    q = np.dot(ap, ap) * np.sum(xp * xp, axis=-1) - 2.0 * (xp @ ap) + 1.0
    return _g0(n) * R ** (2.0 - n) * q ** ((2.0 - n) / 2.0)


def harmonic_part_annulus(a, x, annulus: Domain, tol: float = 1e-16, lmax: int = 20_000):
    """Zonal-harmonic series for H on a concentric spherical annulus.

    Expands ``|y - a|^(2-n)`` in Gegenbauer polynomials on each boundary
    sphere and matches the interior/exterior radial solutions degree by
    degree. Every factor is a power of a ratio below one, so the series is
    summed without overflow until the terms drop below ``tol``.
    """
    if annulus.kind != "annulus":
        raise DomainError("series form needs an annulus")
    if not annulus.signed_distance(a) > 0:
        raise DomainError(f"source {a} is not inside the annulus")
    n = annulus.n
    k = n - 2
    c = np.array(annulus.center)
    ri, ro = annulus.r_inner, annulus.radius
    av = np.asarray(a, dtype=float) - c
    rho = float(np.linalg.norm(av))
    xs = np.atleast_2d(np.asarray(x, dtype=float)) - c
    r = np.linalg.norm(xs, axis=1)
    cosg = np.clip(xs @ av / (r * rho), -1.0, 1.0)
    b1 = rho * r / ro ** 2
    b2 = ri ** 2 * r / (rho * ro ** 2)
    b3 = ri ** 2 / (rho * r)
    b4 = ri ** 2 * rho / (ro ** 2 * r)
    w1 = ro ** -k
    w2 = (ri / (rho * ro)) ** k
    w3 = (ri / (rho * r)) ** k
    w4 = (ri / (ro * r)) ** k
    total = np.zeros_like(r)
    small = 0
    for l in range(lmax):
        q = (ri / ro) ** (2 * l + k)
        radial = (w1 * b1 ** l - w2 * b2 ** l + w3 * b3 ** l - w4 * b4 ** l) / (1.0 - q)
        term = radial * special.eval_gegenbauer(l, k / 2.0, cosg)
        total += term
        if np.all(np.abs(term) <= tol * np.abs(total)):
            small += 1
            if small >= 3:
                break
        else:
            small = 0
    out = _g0(n) * total
    return out if np.ndim(x) > 1 else float(out[0])


@dataclass
class HarmonicCorrection:
    """H(a, .) for one source point in one of its representations."""

    a: tuple
    domain: Domain
    kind: str                      # "ball", "annulus", "grid" or "wos"
    field: ScalarField | None = None
    coarse: ScalarField | None = None
    walks: int = 10_000
    shell: float = 0.0
    seed: int = 0
    workers: int = 1

    def __call__(self, x):
        """Return ``(value, error_estimate)`` at a single point."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return float(harmonic_part_ball(self.a, x, self.domain)), 0.0
        if self.kind == "annulus":
            return float(harmonic_part_annulus(self.a, x, self.domain)), 0.0
        if self.kind == "grid":
            v = self.field.grid.interpolate(self.field.values, x)
            err = math.nan
            if self.coarse is not None:
                try:
                    vc = self.coarse.grid.interpolate(self.coarse.values, x)
                    err = abs(v - vc) / 3.0
                except ValueError:
                    pass
            return v, err
        g = lambda y: singular_part(self.a, y, self.domain.n)
        mean, se = walk_on_spheres(x, self.domain, g, self.walks, self.shell, self.seed, self.workers)
        return mean, se

    def value(self, x) -> float:
        return self(x)[0]


def _wos_block(x0, domain, g, nwalks, shell, rng):
    n = len(x0)
    pos = np.tile(x0, (nwalks, 1))
    out = np.empty(nwalks)
    active = np.arange(nwalks)
    for _ in range(WOS_MAX_STEPS):
        if not len(active):
            break
        d = domain.signed_distance(pos[active])
        done = d < shell
        if done.any():
            idx = active[done]
            out[idx] = g(domain.project_to_boundary(pos[idx]))
            active = active[~done]
            d = d[~done]
        if not len(active):
            break
        step = rng.standard_normal((len(active), n))
        step /= np.linalg.norm(step, axis=1, keepdims=True)
        pos[active] += d[:, None] * step
    else:
        raise RuntimeError("walk-on-spheres exceeded its step cap")
    return out


def walk_on_spheres(x, domain: Domain, g, walks: int = 10_000, shell: float | None = None,
                    seed: int = 0, workers: int = 1):
    """Estimate the harmonic extension of boundary data ``g`` at ``x``.

    Walks are processed in fixed blocks; block ``b`` draws from a Philox
    stream keyed by ``(seed, b)``, so the estimate does not depend on
    ``workers``. Returns ``(mean, standard_error)``.
    """
    x = np.asarray(x, dtype=float)
    if walks < 1:
        raise DomainError("need at least one walk")
    if shell is None:
        shell = 1e-4 * domain.diameter
    if not shell > 0:
        raise DomainError("shell width must be positive")
    dist = float(domain.signed_distance(x))
    if not shell < dist:
        raise DomainError(f"shell {shell} is not narrower than d(x, boundary) = {dist}")
    nblocks = -(-walks // WOS_BLOCK)

    def run(b):
        m = min(WOS_BLOCK, walks - b * WOS_BLOCK)
        rng = np.random.Generator(np.random.Philox(key=[seed, b]))
        return _wos_block(x, domain, g, m, shell, rng)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(nblocks)))
    else:
        parts = [run(b) for b in range(nblocks)]
    vals = np.concatenate(parts)
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else math.inf
    return float(vals.mean()), float(se)


def _grid_harmonic(a, grid: Grid) -> ScalarField:
    g = lambda y: singular_part(a, y, grid.n)
    return ScalarField(grid, grid.solve(grid.dirichlet_lift(g)))


def harmonic_part_numeric(a, domain: Domain, method: str = "grid", *, h: float | None = None,
                          walks: int = 10_000, shell: float | None = None, seed: int = 0,
                          workers: int = 1, estimate_error: bool = True) -> HarmonicCorrection:
    """Numeric H(a, .) by a lattice Laplace solve (``grid``) or Walk-on-Spheres (``wos``).

    The grid form also solves on the 2h lattice so every evaluation carries a
    Richardson-style error estimate ``|H_h - H_2h| / 3``.
    """
    a = tuple(float(t) for t in a)
    da = float(domain.signed_distance(a))
    if not da > 0:
        raise DomainError(f"source {a} is not interior")
    if method == "grid":
        if h is None:
            raise DomainError("grid method needs a mesh width h")
        if not h < da:
            raise DomainError(f"h={h} does not resolve d(a, boundary)={da}")
        fine = _grid_harmonic(a, make_grid(domain, h))
        coarse = None
        if estimate_error and 2 * h < da:
            coarse = _grid_harmonic(a, make_grid(domain, 2 * h))
        return HarmonicCorrection(a, domain, "grid", field=fine, coarse=coarse)
    if method == "wos":
        if shell is None:
            shell = 1e-4 * domain.diameter
        if walks < 1 or not shell > 0:
            raise DomainError("wos needs walks >= 1 and shell > 0")
        return HarmonicCorrection(a, domain, "wos", walks=walks, shell=shell, seed=seed, workers=workers)
    if method in ("ball", "annulus", "closed"):
        if domain.kind not in ("ball", "annulus") or method not in ("closed", domain.kind):
            raise DomainError(f"no closed form for H on a {domain.kind}")
        return HarmonicCorrection(a, domain, domain.kind)
    raise ValueError(f"unknown method {method!r}")


def correction_for(a, domain: Domain, method: str = "auto", **kw) -> HarmonicCorrection:
    """Closed form on balls and annuli when ``method='auto'``, else the requested form."""
    if method == "auto":
        method = "closed" if domain.kind in ("ball", "annulus") else "grid"
    return harmonic_part_numeric(a, domain, method, **kw)


def green_eval(a, x, correction: HarmonicCorrection):
    """``G(a, x) = gamma0 |x - a|^(2-n) - H(a, x)``; returns ``(value, error)``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.allclose(a, correction.a) is False:
        raise DomainError("correction was built for a different source point")
    if np.linalg.norm(x - a) == 0.0:
        raise SingularityError("G(a, x) is singular at x = a")
    Hval, err = correction(x)
    return float(singular_part(a, x)) - Hval, err


def robin_function(a, domain: Domain, method: str = "auto", **kw):
    """Robin function ``H(a, a)``; returns ``(value, error)``.

    On grids H is the solved regular field, so this is a plain evaluation
    at the source with no singular subtraction.
    """
    corr = correction_for(a, domain, method, **kw)
    return corr(np.asarray(a, dtype=float))

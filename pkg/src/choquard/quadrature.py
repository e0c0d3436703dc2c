"""Radial and cell quadratures used by the closed-form modules.

Everything here works for radial profiles ``f(|x|)`` on R^n, which is all the
bubble family ever needs. Singular Riesz kernels are reduced to one radial
variable through the spherical mean of ``|x - y|^{-mu}``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import QuadratureError

RTOL = 1e-10


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _quad(f, a, b, rtol, what, limit=400, points=None):
    kw = dict(epsabs=0.0, epsrel=rtol, limit=limit, full_output=1)
    if points is not None and np.isfinite(b):
        kw["points"] = points
    out = integrate.quad(f, a, b, **kw)
    val, err = out[0], out[1]
    if not np.isfinite(val) or err > max(50 * rtol * abs(val), 1e-300):
        raise QuadratureError(f"{what}: estimate {val!r} with error {err!r} misses rtol={rtol}")
    return val, err


def radial_integral(f, n: int, a: float = 0.0, b: float = math.inf, rtol: float = RTOL,
                    what: str = "radial integral") -> float:
    """Integrate ``f(|x|)`` over the shell ``a < |x| < b`` in R^n."""
    if b <= a:
        return 0.0
    if a == 0.0 and math.isinf(b):
        # split at r = 1 so quad sees the core and the power-law tail separately
        v1, _ = _quad(lambda r: f(r) * r ** (n - 1), 0.0, 1.0, rtol, what)
        v2, _ = _quad(lambda r: f(r) * r ** (n - 1), 1.0, math.inf, rtol, what)
        val = v1 + v2
    else:
        val, _ = _quad(lambda r: f(r) * r ** (n - 1), a, b, rtol, what)
    return sphere_area(n) * val


def spherical_mean_riesz(r, s, n: int, mu: float):
    """Average of ``|r e - s theta|^{-mu}`` over theta on the unit sphere.

    Closed form through the Gauss hypergeometric function; elementary in n=3.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    with np.errstate(divide="ignore", invalid="ignore"):
        if n == 3:
            if abs(mu - 2.0) < 1e-14:
                out = np.log((big + small) / (big - small)) / (2.0 * r * s)
            else:
                out = ((r + s) ** (2.0 - mu) - np.abs(r - s) ** (2.0 - mu)) / (2.0 * (2.0 - mu) * r * s)
            # r*s == 0: the mean is just big^{-mu}
            out = np.where(small == 0.0, big ** (-mu), out)
        else:
            x2 = (small / big) ** 2
            out = big ** (-mu) * special.hyp2f1(mu / 2.0, (mu - n + 2.0) / 2.0, n / 2.0, x2)
    return out


def radial_riesz_potential(rho, r: float, n: int, mu: float, rtol: float = 1e-10,
                           r_max: float = math.inf) -> float:
    """``int rho(|y|) |x - y|^{-mu} dy`` at ``|x| = r`` for a radial density."""
    w = sphere_area(n)

    def g(s):
        return rho(s) * s ** (n - 1) * float(spherical_mean_riesz(r, s, n, mu))

    what = "radial Riesz potential"
    if r == 0.0:
        if math.isinf(r_max):
            v = _quad(lambda s: rho(s) * s ** (n - 1 - mu), 0.0, 1.0, rtol, what)[0]
            v += _quad(lambda s: rho(s) * s ** (n - 1 - mu), 1.0, math.inf, rtol, what)[0]
        else:
            v = _quad(lambda s: rho(s) * s ** (n - 1 - mu), 0.0, r_max, rtol, what)[0]
        return w * v
    inner = _quad(g, 0.0, min(r, r_max), rtol, what)[0]
    outer = 0.0
    if r < r_max:
        outer = _quad(g, r, r_max, rtol, what)[0]
    return w * (inner + outer)


def radial_double_integral(rho, n: int, mu: float, rtol: float = 1e-9) -> float:
    """``int int rho(|x|) rho(|y|) |x - y|^{-mu} dx dy`` over R^n x R^n."""
    w = sphere_area(n)
    inner_rtol = rtol * 0.1

    def g(r):
        return rho(r) * r ** (n - 1) * radial_riesz_potential(rho, r, n, mu, inner_rtol)

    v = _quad(g, 0.0, 1.0, rtol, "radial double integral", limit=200)[0]
    v += _quad(g, 1.0, math.inf, rtol, "radial double integral", limit=200)[0]
    return w * v


@lru_cache(maxsize=None)
def cube_kernel_average(n: int, mu: float) -> float:
    """Mean of ``|z|^{-mu}`` over the unit cube ``[-1/2, 1/2]^n``.

    The cube splits into 2n pyramids with apex at the origin; along each ray
    the radial factor integrates to ``1/(n - mu)``, leaving a smooth
    (n-1)-dimensional integral over one face done as iterated 1-D quadrature.
    """
    if not 0.0 < mu < n:
        raise ValueError("mu must lie in (0, n)")
    d = 0.5

    def face(*w):
        return (d * d + sum(t * t for t in w)) ** (-mu / 2.0)

    # one face, reduced by the 2^(n-1) reflections of [-1/2, 1/2]^(n-1)
    ranges = [(0.0, 0.5)] * (n - 1)
    val, err = integrate.nquad(face, ranges, opts={"epsabs": 0.0, "epsrel": 1e-12, "limit": 200})
    face_integral = val * 2 ** (n - 1)
    return 2 * n * d * face_integral / (n - mu)

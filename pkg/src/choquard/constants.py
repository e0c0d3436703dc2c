"""Critical exponents, universal constants, the bubble family and the
whole-space Choquard residual."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import quadrature as quad
from .errors import DomainError, NormalizationError


@dataclass(frozen=True)
class ExponentSet:
    n: int
    mu: float
    two_mu_lower: float
    two_mu_star: float
    two_star: float


def critical_exponents(n: int, mu: float) -> ExponentSet:
    """Lower/upper HLS critical exponents and the Sobolev exponent."""
    if int(n) != n or n < 3:
        raise DomainError(f"dimension must be an integer >= 3, got {n}")
    n = int(n)
    if not 0.0 < mu < n:
        raise DomainError(f"mu must lie in (0, {n}), got {mu}")
    return ExponentSet(
        n=n,
        mu=float(mu),
        two_mu_lower=(2 * n - mu) / n,
        two_mu_star=(2 * n - mu) / (n - 2),
        two_star=2 * n / (n - 2),
    )


@dataclass(frozen=True)
class UniversalConstants:
    n: int
    mu: float
    gamma0: float
    c1: float
    C_n_mu: float
    S: float
    A_HL: float
    S_tilde_HL: float
    S_tilde_HL_direct: float = math.nan
    S_tilde_gap: float = math.nan

    @property
    def S_HL(self) -> float:
        """Best HLS-Sobolev quotient, ``S_tilde_HL^(1 / (2 2*_mu))``."""
        e = critical_exponents(self.n, self.mu)
        return self.S_tilde_HL ** (1.0 / (2.0 * e.two_mu_star))

    @property
    def bubble_lap_coeff(self) -> float:
        """``n(n-2) gamma0^{-4/(n-2)}``: ``-Delta U = coeff * U^(2*-1)``."""
        n = self.n
        return n * (n - 2) * self.gamma0 ** (-4.0 / (n - 2))


@lru_cache(maxsize=None)
def _gamma0(n: int, rtol: float) -> float:
    i = quad.radial_integral(lambda r: (1.0 + r * r) ** (-n), n, rtol=rtol, what="gamma0")
    return (n * (n - 2) * i) ** -0.5


@lru_cache(maxsize=None)
def _c1(n: int, rtol: float) -> float:
    return quad.radial_integral(lambda r: (1.0 + r * r) ** (-(n + 2) / 2.0), n, rtol=rtol, what="c1")


@lru_cache(maxsize=None)
def sobolev_constant(n: int, rtol: float = 1e-10) -> float:
    """Sobolev quotient ``|grad d|_2^2 / |d|_{2*}^2`` of the unit bubble."""
    grad2 = quad.radial_integral(lambda r: (n - 2) ** 2 * r * r * (1.0 + r * r) ** (-n), n,
                                 rtol=rtol, what="Sobolev numerator")
    lp = quad.radial_integral(lambda r: (1.0 + r * r) ** (-n), n, rtol=rtol, what="Sobolev denominator")
    two_star = 2.0 * n / (n - 2)
    return grad2 / lp ** (2.0 / two_star)


def hls_sharp_constant(n: int, mu: float) -> float:
    """Sharp diagonal HLS constant ``C_{n,mu}``."""
    g = math.gamma
    return (math.pi ** (mu / 2.0) * g((n - mu) / 2.0) / g(n - mu / 2.0)
            * (g(n) / g(n / 2.0)) ** ((n - mu) / n))


def hls_double_integral_bubble(n: int, mu: float, gamma0: float, rtol: float = 1e-9) -> float:
    """``int int U^{2*_mu}(x) U^{2*_mu}(y) |x-y|^{-mu}`` for ``U = U_(0,1)`` by radial quadrature."""
    q = critical_exponents(n, mu).two_mu_star

    def rho(r):
        return (gamma0 * (1.0 + r * r) ** (-(n - 2) / 2.0)) ** q

    return quad.radial_double_integral(rho, n, mu, rtol=rtol)


def universal_constants(n: int, mu: float, rtol: float = 1e-10, direct: bool = True) -> UniversalConstants:
    """All closed-form constants for ``(n, mu)``.

    ``S_tilde_HL`` is the identity value ``gamma0^(2 - 2 2*_mu) A_HL``;
    when ``direct`` is set the reciprocal double integral is also computed and
    the relative gap between the two is reported.
    """
    e = critical_exponents(n, mu)
    if rtol <= 0:
        raise DomainError("quadrature tolerance must be positive")
    g0 = _gamma0(e.n, rtol)
    c1 = _c1(e.n, rtol)
    C = hls_sharp_constant(e.n, e.mu)
    S = sobolev_constant(e.n, rtol)
    A = (n * (n - 2)) ** ((n - mu + 2) / 2.0) / C * S ** ((mu - n) / 2.0)
    st = g0 ** (2.0 - 2.0 * e.two_mu_star) * A
    st_direct = math.nan
    gap = math.nan
    if direct:
        st_direct = 1.0 / _direct_cached(e.n, e.mu, g0)
        gap = abs(st - st_direct) / st
    return UniversalConstants(n=e.n, mu=e.mu, gamma0=g0, c1=c1, C_n_mu=C, S=S, A_HL=A,
                              S_tilde_HL=st, S_tilde_HL_direct=st_direct, S_tilde_gap=gap)


@lru_cache(maxsize=None)
def _direct_cached(n, mu, g0):
    return hls_double_integral_bubble(n, mu, g0)


def exact_solution_prefactor(n: int, mu: float, consts: UniversalConstants | None = None) -> float:
    """Amplitude c with ``c * delta_(a,lam)`` solving the whole-space critical equation."""
    if consts is None:
        consts = universal_constants(n, mu, direct=False)
    C, S = consts.C_n_mu, consts.S
    return ((n * (n - 2)) ** ((n - 2) / 4.0) * C ** ((2.0 - n) / (2.0 * (n - mu + 2)))
            * S ** ((n - mu) * (2.0 - n) / (4.0 * (n - mu + 2))))


@dataclass(frozen=True)
class BubbleParams:
    a: tuple
    lam: float
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(t) for t in np.ravel(self.a)))
        if not self.lam > 0:
            raise DomainError(f"bubble scale must be positive, got {self.lam}")
        if self.alpha < 0:
            raise DomainError(f"bubble weight must be nonnegative, got {self.alpha}")

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.a)


def bubble_eval(p: BubbleParams, x, normalized: bool = False, gamma0: float | None = None):
    """``delta_(a,lam)(x)``, or ``U_(a,lam) = gamma0 * delta`` when normalized.

    ``x`` is a point or an array of points with trailing axis n.
    """
    n = p.n
    x = np.asarray(x, dtype=float)
    r2 = np.sum((x - p.center) ** 2, axis=-1)
    val = p.lam ** ((n - 2) / 2.0) * (1.0 + p.lam ** 2 * r2) ** (-(n - 2) / 2.0)
    if normalized:
        if gamma0 is None:
            gamma0 = _gamma0(n, quad.RTOL)
        val = gamma0 * val
    return val


def bubble_gradient(p: BubbleParams, x, normalized: bool = False, gamma0: float | None = None):
    """Analytic gradient of the bubble, shape ``x.shape``."""
    n = p.n
    x = np.asarray(x, dtype=float)
    d = x - p.center
    r2 = np.sum(d * d, axis=-1)
    fac = -(n - 2) * p.lam ** ((n + 2) / 2.0) * (1.0 + p.lam ** 2 * r2) ** (-n / 2.0)
    g = fac[..., None] * d
    if normalized:
        g = g * (gamma0 if gamma0 is not None else _gamma0(n, quad.RTOL))
    return g


def riesz_potential_closed_form(p: BubbleParams, x, exps: ExponentSet, consts: UniversalConstants):
    """Closed form of ``int U^{2*_mu}(y) |x-y|^{-mu} dy``."""
    n = exps.n
    U = bubble_eval(p, x, normalized=True, gamma0=consts.gamma0)
    coeff = n * (n - 2) / (consts.S_tilde_HL * consts.gamma0 ** (4.0 / (n - 2)))
    return coeff * U ** (exps.two_star - exps.two_mu_star)


def riesz_potential_quadrature(p: BubbleParams, x, exps: ExponentSet, consts: UniversalConstants,
                               method: str = "radial", samples: int = 400_000, seed: int = 0,
                               rtol: float = 1e-9):
    """Brute-force ``int U^{2*_mu}(y) |x-y|^{-mu} dy`` with an error estimate.

    ``radial`` reduces the integral to one dimension with the spherical mean
    of the kernel; ``monte_carlo`` samples y exactly from the normalized
    density ``U^{2*_mu}`` (a rescaled multivariate Student t) and averages the
    kernel, returning the statistical standard error.
    """
    n, mu, q = exps.n, exps.mu, exps.two_mu_star
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x - p.center))
    lam, g0 = p.lam, consts.gamma0

    def rho(s):
        return (g0 * lam ** ((n - 2) / 2.0) * (1.0 + (lam * s) ** 2) ** (-(n - 2) / 2.0)) ** q

    if method == "radial":
        val = quad.radial_riesz_potential(rho, r, n, mu, rtol=rtol)
        return val, abs(val) * rtol * 10
    if method != "monte_carlo":
        raise ValueError(f"unknown quadrature method {method!r}")
    # rho(s) ∝ (1 + (lam s)^2)^(-k) with k = q (n-2)/2
    k = q * (n - 2) / 2.0
    nu = 2.0 * k - n
    if nu <= 0:
        raise DomainError("density not normalizable")
    mass = quad.radial_integral(rho, n, what="Riesz mass")
    rng = np.random.default_rng(np.random.Philox(key=[seed, 0]))
    z = rng.standard_normal((samples, n))
    chi = rng.chisquare(nu, samples)
    y = z / np.sqrt(chi)[:, None]  # Student t / sqrt(nu): density ∝ (1+|y|^2)^(-(nu+n)/2)
    y = p.center + y / lam
    kern = np.sum((y - x) ** 2, axis=1) ** (-mu / 2.0)
    mean = kern.mean()
    se = kern.std(ddof=1) / math.sqrt(samples)
    return mass * mean, mass * se


def _laplacian_fd(fun, x, h):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    center = fun(x)
    lap = -2.0 * n * center
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        lap = lap + fun(x + e) + fun(x - e)
    return lap / (h * h)


def choquard_residual(u, x, exps: ExponentSet, consts: UniversalConstants, *,
                      normalization: str = "scaled", normalized: bool = True,
                      amplitude: float = 1.0, h: float = 1e-3):
    """Pointwise residual of the critical Choquard equation in R^n for a bubble.

    ``u`` is a :class:`BubbleParams`; the field is ``amplitude * U`` when
    ``normalized`` (gamma0 scaling) else ``amplitude * delta``. ``normalization``
    selects the form of the equation:

    ``"scaled"``  ``-Lap u - S_tilde (K * u^{2*_mu}) u^{2*_mu - 1}``
    ``"plain"``   ``-Lap u - (K * |u|^{2*_mu}) |u|^{2*_mu - 2} u``

    The Laplacian is the (2n+1)-point stencil with step ``h``; the Riesz
    potential uses the closed form.
    """
    if not isinstance(u, BubbleParams):
        raise TypeError("choquard_residual expects BubbleParams")
    if normalization not in ("scaled", "plain"):
        raise ValueError(f"unknown normalization {normalization!r}")
    if normalization == "plain" and normalized:
        raise NormalizationError("plain normalization applies to amplitude * delta, not the gamma0-scaled U")
    if normalization == "scaled" and not normalized:
        raise NormalizationError("scaled normalization applies to the gamma0-scaled U")
    q = exps.two_mu_star
    g0 = consts.gamma0
    scale = amplitude * (g0 if normalized else 1.0)

    def field(pts):
        return amplitude * bubble_eval(u, pts, normalized=normalized, gamma0=g0)

    x = np.atleast_2d(np.asarray(x, dtype=float))
    lap = _laplacian_fd(field, x, h)
    vals = field(x)
    # closed-form potential of U^q, rescaled to (scale * delta)^q
    pot = riesz_potential_closed_form(u, x, exps, consts) * (scale / g0) ** q
    if normalization == "scaled":
        return -lap - consts.S_tilde_HL * pot * vals ** (q - 1.0)
    return -lap - pot * np.abs(vals) ** (q - 2.0) * vals

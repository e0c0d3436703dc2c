"""Nonlocal HLS energy, the functionals I, J_1, J and the gradient of J.

The double integral ``D(u) = int int |u(x)|^q |u(y)|^q |x-y|^{-mu}`` with
``q = 2*_mu`` is discretized as ``h^{2n} sum_x sum_y rho_x rho_y K_h(x-y)``.
Off-diagonal kernel entries are point values; the diagonal entry is the exact
cell average of ``|z|^{-mu}``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numba
import numpy as np
from scipy import fft as sfft
from scipy import integrate

from . import quadrature as quad
from .constants import (BubbleParams, UniversalConstants, bubble_eval, bubble_gradient,
                        critical_exponents, riesz_potential_closed_form, universal_constants)
from .errors import ChoquardError, GridMismatchError, ZeroFieldError
from .geometry import Grid, ScalarField, dirichlet_inner_product

STATIONARITY_TOL = 1e-8

# skip the TBB probe (an old system TBB only produces a warning)
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def kernel_table(grid: Grid, mu: float) -> np.ndarray:
    """``K_h`` on nonnegative lattice offsets ``[0, shape)``; cached on the grid."""
    key = ("ktab", float(mu))
    tab = grid._cache.get(key)
    if tab is None:
        axes = np.meshgrid(*[np.arange(s, dtype=float) for s in grid.shape], indexing="ij")
        r = grid.h * np.sqrt(sum(a * a for a in axes))
        with np.errstate(divide="ignore"):
            tab = r ** (-mu)
        tab[(0,) * grid.n] = grid.h ** (-mu) * quad.cube_kernel_average(grid.n, float(mu))
        tab.setflags(write=False)
        grid._cache[key] = tab
    return tab


@numba.njit(parallel=True, cache=True)
def _direct_rows(idx, rho, tab_flat, strides):
    N, n = idx.shape
    out = np.empty(N)
    for i in numba.prange(N):
        s = 0.0
        for j in range(N):
            if rho[j] == 0.0:
                continue
            off = 0
            for k in range(n):
                d = idx[i, k] - idx[j, k]
                if d < 0:
                    d = -d
                off += d * strides[k]
            s += tab_flat[off] * rho[j]
        out[i] = s
    return out


def _next_pow2(m: int) -> int:
    return 1 << (int(m) - 1).bit_length()


def _kernel_fft(grid: Grid, mu: float):
    key = ("kfft", float(mu))
    hit = grid._cache.get(key)
    if hit is not None:
        return hit
    tab = kernel_table(grid, mu)
    S = grid.shape
    P = tuple(_next_pow2(2 * s - 1) for s in S)
    full = np.zeros(P)
    # place K(|k|) at every wrapped offset k in (-S, S)
    idx = [np.concatenate([np.arange(s), np.arange(-(s - 1), 0)]) for s in S]
    pos = [np.mod(i, p) for i, p in zip(idx, P)]
    src = [np.abs(i) for i in idx]
    full[np.ix_(*pos)] = tab[np.ix_(*src)]
    kf = sfft.rfftn(full)
    grid._cache[key] = (P, kf)
    return P, kf


def riesz_sum(grid: Grid, rho: np.ndarray, mu: float, method: str = "fft") -> np.ndarray:
    """``sum_y K_h(x - y) rho_y`` at every node (no ``h^n`` factor)."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.size,):
        raise GridMismatchError("density does not match the grid")
    if method == "direct":
        tab = kernel_table(grid, mu)
        strides = np.array([s // tab.itemsize for s in tab.strides], dtype=np.int64)
        return _direct_rows(grid.index.astype(np.int64), rho, np.ascontiguousarray(tab).ravel(), strides)
    if method == "fft":
        if not getattr(grid, "uniform", True):
            raise ChoquardError("the fft path needs a uniform lattice")
        P, kf = _kernel_fft(grid, mu)
        box = np.zeros(P)
        loc = tuple((grid.index - grid.kmin).T)
        box[loc] = rho
        conv = sfft.irfftn(sfft.rfftn(box) * kf, s=P)
        return conv[loc]
    raise ValueError(f"unknown energy method {method!r}")


def _density(u: ScalarField, mu: float):
    e = critical_exponents(u.grid.n, mu)
    return np.abs(u.values) ** e.two_mu_star, e


def riesz_potential(u: ScalarField, mu: float, method: str = "fft") -> np.ndarray:
    """Discrete ``int |u(y)|^{2*_mu} |x-y|^{-mu} dy`` at the nodes."""
    rho, _ = _density(u, mu)
    return u.grid.weight * riesz_sum(u.grid, rho, mu, method)


def hls_energy(u: ScalarField, mu: float, method: str = "fft") -> float:
    """Discrete double integral ``D(u)``.

    Parameters
    ----------
    u : ScalarField
    mu : float
        Riesz exponent in ``(0, n)``.
    method : {"fft", "direct"}
        ``direct`` is the O(N^2) reference sum; ``fft`` convolves on a
        zero-padded power-of-two box.
    """
    rho, _ = _density(u, mu)
    if not np.any(rho):
        return 0.0
    rows = riesz_sum(u.grid, rho, mu, method)
    return float(np.dot(rho, rows)) * u.grid.weight ** 2


def hls_norm(u: ScalarField, mu: float, method: str = "fft") -> float:
    """``||u||_HL = D(u)^(1 / (2 2*_mu))``."""
    e = critical_exponents(u.grid.n, mu)
    return hls_energy(u, mu, method) ** (1.0 / (2.0 * e.two_mu_star))


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energies of the Dirichlet-normalized field ``u / |u|_1``.

    ``scale`` is the Dirichlet norm of the field as given.
    """

    dirichlet: float
    D: float
    hls_norm: float
    I: float
    J1: float
    J: float
    lambda_star: float
    scale: float
    stationarity: float

    def as_dict(self) -> dict:
        return asdict(self)


def _I(lam, dirichlet, D, q):
    return 0.5 * lam ** 2 * dirichlet - lam ** (2 * q) * D / (2.0 * q)


def evaluate_functionals(u: ScalarField, mu: float, method: str = "fft") -> EnergyBreakdown:
    """All functionals of ``u`` after normalizing it to the unit Dirichlet sphere.

    Checks internally that ``f'(lambda*) = 0`` for ``f(t) = I(t u)`` and that
    ``J_1 = I(lambda* u)``.
    """
    scale = u.norm1()
    if scale == 0.0:
        raise ZeroFieldError("functionals need a nonzero field")
    v = u * (1.0 / scale)
    e = critical_exponents(u.grid.n, mu)
    q = e.two_mu_star
    dirichlet = dirichlet_inner_product(v, v)
    D = hls_energy(v, mu, method)
    if D <= 0.0:
        raise ZeroFieldError("nonlocal energy vanishes")
    norm = D ** (1.0 / (2.0 * q))
    lam = norm ** (-q / (q - 1.0))
    fprime = lam * dirichlet - lam ** (2 * q - 1) * D
    stat = abs(fprime) / lam
    J1 = (0.5 - 1.0 / (2.0 * q)) * D ** (-1.0 / (q - 1.0))
    J1_check = _I(lam, dirichlet, D, q)
    if stat > STATIONARITY_TOL or abs(J1 - J1_check) > STATIONARITY_TOL * abs(J1):
        raise ChoquardError(f"lambda* stationarity check failed ({stat:.3e})")
    return EnergyBreakdown(dirichlet=dirichlet, D=D, hls_norm=norm, I=_I(1.0, dirichlet, D, q),
                           J1=J1, J=1.0 / D, lambda_star=lam, scale=scale, stationarity=stat)


def J_value(u: ScalarField, mu: float, method: str = "fft") -> float:
    """``J = 1 / D(u)`` for the field as given (no normalization)."""
    D = hls_energy(u, mu, method)
    if D == 0.0:
        raise ZeroFieldError("J needs a nonzero field")
    return 1.0 / D


def J_normalized(u: ScalarField, mu: float, method: str = "fft") -> float:
    """``J(u / |u|_1) = |u|_1^(2 2*_mu) / D(u)``."""
    e = critical_exponents(u.grid.n, mu)
    s2 = dirichlet_inner_product(u, u)
    D = hls_energy(u, mu, method)
    if D == 0.0 or s2 == 0.0:
        raise ZeroFieldError("J needs a nonzero field")
    return s2 ** e.two_mu_star / D


def grad_J(u: ScalarField, mu: float, tangential: bool = False, method: str = "fft") -> ScalarField:
    """Riesz representative of ``dJ(u)`` in the discrete Dirichlet inner product.

    ``dJ(u)[v] = -(2 2*_mu / D^2) sum_x P(x) |u|^{2*_mu - 2} u(x) v(x) h^n`` with
    ``P`` the discrete Riesz potential; the representative solves
    ``A g = -(2 2*_mu / D^2) P |u|^{2*_mu - 2} u``. With ``tangential`` the
    component along ``u`` is removed.
    """
    rho, e = _density(u, mu)
    if not np.any(rho):
        raise ZeroFieldError("gradient of J needs a nonzero field")
    q = e.two_mu_star
    g = u.grid
    rows = riesz_sum(g, rho, mu, method)
    D = float(np.dot(rho, rows)) * g.weight ** 2
    P = g.weight * rows
    a = np.abs(u.values)
    src = -(2.0 * q / D ** 2) * P * a ** (q - 2.0) * u.values
    vals = g.solve(src)
    out = ScalarField(g, vals)
    if tangential:
        uu = dirichlet_inner_product(u, u)
        out = out - u * (dirichlet_inner_product(out, u) / uu)
    return out


def hls_inequality_margin(u: ScalarField, consts: UniversalConstants, method: str = "fft") -> float:
    """``|u|_1 / ||u||_HL - S_HL``; nonnegative up to discretization error."""
    s = u.norm1()
    if s == 0.0:
        raise ZeroFieldError("margin needs a nonzero field")
    return s / hls_norm(u, consts.mu, method) - consts.S_HL


# -- whole-space truncation ----------------------------------------------

def _face_nodes(n: int, m: int = 24):
    """Gauss-Legendre nodes/weights on [-1, 1]^(n-1)."""
    x, w = np.polynomial.legendre.leggauss(m)
    grids = np.meshgrid(*([x] * (n - 1)), indexing="ij")
    wts = np.meshgrid(*([w] * (n - 1)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    ww = np.prod(np.stack([t.ravel() for t in wts], axis=-1), axis=-1)
    return pts, ww


def outside_box_integral(f, n: int, R: float, m: int = 24, rtol: float = 1e-10) -> float:
    """``int f(|x|) dx`` over ``R^n`` minus the cube ``[-R, R]^n``.

    Each of the 2n pyramids over a cube face is swept by rays ``t (1, w)``;
    along a ray the integral reduces to a radial tail ``int_{R s}^inf f r^{n-1}``
    with ``s = sqrt(1 + |w|^2)``.
    """
    pts, ww = _face_nodes(n, m)
    s = np.sqrt(1.0 + np.sum(pts * pts, axis=1))
    total = 0.0
    for si, wi in zip(s, ww):
        tail, _ = quad._quad(lambda r: f(r) * r ** (n - 1), R * si, math.inf, rtol, "outside-box tail")
        total += wi * si ** (-n) * tail
    return 2 * n * total


def _box_trapezoid(n: int, R: float, h: float):
    m = int(round(R / h))
    if abs(m * h - R) > 1e-9 * R:
        raise ValueError("R must be a multiple of h")
    k = np.arange(-m, m + 1)
    w1 = np.ones(2 * m + 1)
    w1[[0, -1]] = 0.5
    mesh = np.stack(np.meshgrid(*([k] * n), indexing="ij"), axis=-1).reshape(-1, n)
    wt = np.prod(np.stack(np.meshgrid(*([w1] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=1)
    return mesh, wt, (2 * m + 1,) * n


def whole_space_J(p: BubbleParams, mu: float, R: float, h: float,
                  consts: UniversalConstants | None = None) -> dict:
    """``J`` of a whole-space bubble from a truncated lattice plus exact tails.

    The cube ``[a-R, a+R]^n`` is sampled with trapezoid weights. The Dirichlet
    energy integrates the analytic gradient; ``D`` convolves the lattice
    density with ``K_h``. Outside the cube, ``|grad delta|^2`` and
    ``2 rho Phi`` (``Phi`` the closed-form Riesz potential) are integrated
    exactly; the outside-outside part of ``D`` is dropped.
    """
    n = p.n
    e = critical_exponents(n, mu)
    q = e.two_mu_star
    consts = consts or universal_constants(n, mu, direct=False)
    mesh, wt, shape = _box_trapezoid(n, R, h)
    pts = p.center + h * mesh
    unit = BubbleParams(p.a, p.lam)
    grad = bubble_gradient(unit, pts)
    dir_box = float(np.dot(wt, np.sum(grad * grad, axis=1))) * h ** n
    rho = bubble_eval(unit, pts) ** q
    # lattice convolution on the cube (all nodes, trapezoid-weighted sources)
    kmin = mesh.min(axis=0)
    tabgrid = _LatticeStub(shape, h, n)
    tab = kernel_table(tabgrid, mu)
    P = tuple(_next_pow2(2 * s - 1) for s in shape)
    full = np.zeros(P)
    idx = [np.concatenate([np.arange(s), np.arange(-(s - 1), 0)]) for s in shape]
    full[np.ix_(*[np.mod(i, pp) for i, pp in zip(idx, P)])] = tab[np.ix_(*[np.abs(i) for i in idx])]
    box = np.zeros(P)
    loc = tuple((mesh - kmin).T)
    box[loc] = rho * wt
    conv = sfft.irfftn(sfft.rfftn(box) * sfft.rfftn(full), s=P)[loc]
    D_box = float(np.dot(rho * wt, conv)) * h ** (2 * n)

    lam = p.lam
    gfun = lambda r: ((n - 2) * lam ** ((n + 2) / 2.0) * r * (1.0 + lam * lam * r * r) ** (-n / 2.0)) ** 2
    dir_tail = outside_box_integral(gfun, n, R)
    # Phi for delta: closed form for U rescaled by gamma0^(-q)
    g0 = consts.gamma0

    def rho_phi(r):
        x = np.zeros(n)
        x[0] = r
        phi = riesz_potential_closed_form(unit, p.center + x, e, consts) * g0 ** (-q)
        return float(bubble_eval(unit, p.center + x)) ** q * float(phi)

    D_tail = 2.0 * outside_box_integral(rho_phi, n, R)
    dirichlet = dir_box + dir_tail
    D = D_box + D_tail
    return {"dirichlet": dirichlet, "D": D, "J": dirichlet ** q / D,
            "dirichlet_tail": dir_tail, "D_tail": D_tail, "R": R, "h": h, "lam": lam}


class _LatticeStub:
    """Minimal stand-in for ``Grid`` so the kernel table cache works on a bare box."""

    def __init__(self, shape, h, n):
        self.shape = shape
        self.h = h
        self.n = n
        self._cache = {}

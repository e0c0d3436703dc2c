"""Fit a field by a weighted sum of projected bubbles and test V(p, eps) membership.

The objective is ``|u - sum_i alpha_i PU_(a_i, lam_i)|_1^2`` in the discrete
Dirichlet inner product. Weights come from a nonnegative least-squares solve;
centers and ``t_i = log lam_i`` take damped Gauss-Newton steps whose Jacobian
columns are grid solves on the analytic derivatives of ``-Lap U``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .constants import BubbleParams, UniversalConstants, universal_constants
from .errors import DomainError
from .expansion import eps_interaction
from .geometry import Grid, ScalarField

LAMBDA_LATTICE = (4.0, 8.0, 16.0, 32.0)
N_STARTS = 3


@dataclass
class FitResult:
    """Best p-bubble approximation found, in canonical (lexicographic) order."""

    p: int
    alphas: np.ndarray
    centers: np.ndarray
    lams: np.ndarray
    residual: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)

    def bubbles(self):
        return [BubbleParams(tuple(c), float(l), float(a))
                for c, l, a in zip(self.centers, self.lams, self.alphas)]

    def as_dict(self) -> dict:
        return {"p": self.p, "alphas": self.alphas.tolist(), "centers": self.centers.tolist(),
                "lams": self.lams.tolist(), "residual": self.residual, "converged": self.converged,
                "iterations": self.iterations, "trace_length": len(self.trace)}


class _Model:
    """Grid-bound evaluator of projected bubbles and their parameter derivatives."""

    def __init__(self, grid: Grid, consts: UniversalConstants):
        self.grid = grid
        self.n = grid.n
        self.coef = consts.bubble_lap_coeff
        self.g0 = consts.gamma0
        self.pstar = (self.n + 2.0) / (self.n - 2.0)
        self.w = grid.weight

    def source(self, a, lam):
        """``-Lap U`` at the nodes and the pieces needed for its derivatives."""
        n = self.n
        d = self.grid.points - a
        s = 1.0 + lam * lam * np.sum(d * d, axis=1)
        up = self.g0 ** self.pstar * lam ** ((n + 2) / 2.0) * s ** (-(n + 2) / 2.0)
        return self.coef * up, d, s

    def pu(self, a, lam):
        f, _, _ = self.source(a, lam)
        return self.grid.solve(f), f

    def derivs(self, a, lam):
        """Solves for ``dPU/da_k`` (k < n) and ``dPU/dlog(lam)``."""
        n = self.n
        f, d, s = self.source(a, lam)
        cols = [(n + 2.0) * lam * lam * d[:, k] / s * f for k in range(n)]
        cols.append((n + 2.0) / 2.0 * (2.0 - s) / s * f)
        return [self.grid.solve(c) for c in cols]

    def inner(self, x, y):
        return self.w * float(x @ (self.grid.operator @ y))


def _nnls_weights(G, b):
    G = 0.5 * (G + G.T)
    ridge = 1e-14 * max(np.trace(G), 1e-300)
    L = linalg.cholesky(G + ridge * np.eye(len(b)), lower=True)
    rhs = linalg.solve_triangular(L, b, lower=True)
    alpha, _ = optimize.nnls(L.T, rhs)
    return alpha


class _State:
    def __init__(self, model: _Model, u: np.ndarray, a, t):
        self.model = model
        self.a = np.array(a, dtype=float)
        self.t = np.array(t, dtype=float)
        p = len(self.t)
        self.pus, self.srcs = zip(*[model.pu(self.a[i], math.exp(self.t[i])) for i in range(p)])
        w = model.w
        # <PU_i, X> = h^n src_i . X since A PU_i = src_i
        G = np.array([[w * float(self.srcs[i] @ self.pus[j]) for j in range(p)] for i in range(p)])
        b = np.array([w * float(self.srcs[i] @ u) for i in range(p)])
        self.alpha = _nnls_weights(G, b)
        self.r = u - sum(al * pu for al, pu in zip(self.alpha, self.pus))
        self.F = max(model.inner(self.r, self.r), 0.0)


def _interior_ok(domain, a, margin):
    return bool(np.all(domain.signed_distance(a) > margin))


def _refine(model: _Model, u: np.ndarray, a0, t0, maxit: int, margin: float):
    st = _State(model, u, a0, t0)
    trace = [st.F]
    nu = 1e-3
    converged = False
    it = 0
    dom = model.grid.domain
    n = model.n
    for it in range(1, maxit + 1):
        p = len(st.t)
        cols = []
        for i in range(p):
            for c in model.derivs(st.a[i], math.exp(st.t[i])):
                cols.append(st.alpha[i] * c)
        Aop = model.grid.operator
        Acols = [Aop @ c for c in cols]
        M = np.array([[model.w * float(ci @ Acj) for Acj in Acols] for ci in cols])
        g = np.array([model.w * float(Aci @ st.r) for Aci in Acols])
        M = 0.5 * (M + M.T)
        diag = np.maximum(np.diag(M), 1e-30 * max(np.max(np.diag(M)), 1e-300))
        accepted = False
        for _ in range(12):
            try:
                with warnings.catch_warnings():
                    # a collapsed weight zeroes its columns; damping keeps the solve defined
                    warnings.simplefilter("ignore", linalg.LinAlgWarning)
                    step = linalg.solve(M + nu * np.diag(diag), g, assume_a="pos")
            except linalg.LinAlgError:
                nu *= 4.0
                continue
            step = step.reshape(p, n + 1)
            da, dt = step[:, :n], np.clip(step[:, n], -0.5, 0.5)
            a_new = st.a + da
            if not _interior_ok(dom, a_new, margin):
                nu *= 4.0
                continue
            trial = _State(model, u, a_new, st.t + dt)
            if trial.F < st.F:
                accepted = True
                break
            nu *= 4.0
        if not accepted:
            converged = True  # no descent direction left at this damping range
            break
        dec = st.F - trial.F
        st = trial
        trace.append(st.F)
        nu = max(nu / 3.0, 1e-12)
        if st.F <= 1e-26 or dec <= 1e-12 * st.F:
            converged = True
            break
    return st, trace, converged, it


def _canonical(alpha, a, lam):
    order = sorted(range(len(lam)), key=lambda i: (tuple(a[i]), lam[i], alpha[i]))
    return alpha[order], a[order], lam[order]


def _lattice(grid: Grid, margin: float):
    dom = grid.domain
    step = 4.0 * grid.h
    blo, bhi = dom.bounding_box()
    anchor = dom.anchor()
    axes = [anchor[k] + step * np.arange(math.ceil((blo[k] - anchor[k]) / step),
                                         math.floor((bhi[k] - anchor[k]) / step) + 1)
            for k in range(grid.n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.n)
    return pts[dom.signed_distance(pts) > margin]


def _greedy_starts(model: _Model, u: np.ndarray, p: int, margin: float):
    """Matching-pursuit initial guesses; one per top-scoring first pick."""
    grid = model.grid
    cands = [(tuple(x), lam) for lam in LAMBDA_LATTICE for x in _lattice(grid, margin)]
    if not cands:
        raise DomainError("no interior lattice point for the multistart")
    srcs = []
    for x, lam in cands:
        f, _, _ = model.source(np.array(x), lam)
        srcs.append(f)
    S = np.array(srcs)
    U = np.array([f ** (1.0 / model.pstar) for f in S]) * (1.0 / model.coef) ** (1.0 / model.pstar)
    norm2 = model.w * np.einsum("ij,ij->i", S, U)

    def scores(r):
        c = model.w * (S @ r)
        return np.where(c > 0, c * c / norm2, 0.0)

    first = np.argsort(-scores(u), kind="stable")[:N_STARTS]
    starts = []
    for f0 in first:
        chosen = [int(f0)]
        while len(chosen) < p:
            st = _State(model, u, [cands[i][0] for i in chosen], [math.log(cands[i][1]) for i in chosen])
            sc = scores(st.r)
            sc[chosen] = -1.0
            chosen.append(int(np.argmax(sc)))
        starts.append(([cands[i][0] for i in chosen], [math.log(cands[i][1]) for i in chosen]))
    return starts


def bubble_fit(u: ScalarField, p: int, init=None, consts: UniversalConstants | None = None,
               maxit: int = 60, margin: float | None = None) -> FitResult:
    """Locally best ``sum_i alpha_i PU_(a_i, lam_i)`` approximation of ``u``.

    Parameters
    ----------
    u : ScalarField
        Field to fit (normally on the unit Dirichlet sphere).
    p : int
        Number of bubbles.
    init : sequence of BubbleParams, optional
        Starting configuration; without it a deterministic multistart over a
        lattice of centers (spacing 4h) and ``lam in {4, 8, 16, 32}`` is run
        and the lowest residual wins (ties broken lexicographically).
    """
    if p < 1:
        raise DomainError("p must be at least 1")
    grid = u.grid
    consts = consts or universal_constants(grid.n, 1.0, direct=False)
    model = _Model(grid, consts)
    margin = grid.h if margin is None else margin
    if init is not None:
        init = list(init)
        if len(init) != p:
            raise DomainError("init must list p bubbles")
        starts = [([b.a for b in init], [math.log(b.lam) for b in init])]
    else:
        starts = _greedy_starts(model, u.values, p, margin)
    best = None
    for a0, t0 in starts:
        st, trace, conv, it = _refine(model, u.values, a0, t0, maxit, margin)
        alpha, a, lam = _canonical(st.alpha.copy(), st.a.copy(), np.exp(st.t))
        res = FitResult(p, alpha, a, lam, math.sqrt(st.F), conv, it, trace)
        key = (res.residual, tuple(a.ravel()), tuple(lam))
        if best is None or key < best[0]:
            best = (key, res)
    return best[1]


@dataclass
class Membership:
    """Outcome of a V(p, eps) test; ``status`` is member, non-member or indeterminate."""

    status: str
    p: int
    eps: float
    margins: dict
    fit: FitResult

    @property
    def member(self) -> bool:
        return self.status == "member"


def v_membership(u: ScalarField, p: int, eps: float, fit: FitResult | None = None,
                 variant: str = "as-written", alpha_floor: bool = True, **fit_kw) -> Membership:
    """Check the V(p, eps) conditions on the best p-bubble fit.

    Margins are positive when a condition holds: ``eps - residual``,
    ``lam_i - 1/eps``, ``lam_i d(a_i) - 1/eps``, ``eps - eps_ij`` and, with
    ``alpha_floor``, ``alpha_i - eps * max(alpha)`` (a weight that has
    collapsed means fewer than p bubbles are present).
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    fit = fit or bubble_fit(u, p, **fit_kw)
    dom = u.grid.domain
    inv = 1.0 / eps
    m = {"residual": eps - fit.residual}
    d = np.asarray(dom.signed_distance(fit.centers), dtype=float)
    m["lambda"] = float(np.min(fit.lams) - inv)
    m["boundary"] = float(np.min(fit.lams * d) - inv)
    bs = fit.bubbles()
    eij = [eps_interaction(bs[i], bs[j], variant) for i in range(p) for j in range(p) if i != j]
    m["interaction"] = eps - max(eij) if eij else math.inf
    if alpha_floor:
        m["alpha"] = float(np.min(fit.alphas) - eps * np.max(fit.alphas))
    ok = all(v > 0 for v in m.values())
    status = "member" if ok else "non-member"
    if not fit.converged:
        status = "indeterminate"
    return Membership(status, p, eps, m, fit)

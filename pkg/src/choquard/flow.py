"""Normalized gradient flow of J on the nonnegative part of the Dirichlet sphere.

Each step moves against the tangential gradient, clamps negative nodes to
zero, renormalizes, and is accepted only when J does not increase. Rejected
steps halve ``dt``; accepted ones let it grow by 1.25 up to a cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import BubbleParams, UniversalConstants, critical_exponents, universal_constants
from .energy import J_normalized, grad_J
from .errors import DomainError, ZeroFieldError
from .expansion import BubbleConfiguration
from .fitting import bubble_fit, v_membership
from .geometry import Domain, Grid, ScalarField
from .projection import project_bubble

DT_GROWTH = 1.25
ALARM_FACTOR = 0.5


@dataclass
class FlowState:
    """Point on the flow line with its accepted-step history.

    ``J_history`` holds ``(time, J, tangential gradient norm)`` per accepted step,
    starting with the seed.
    """

    u: ScalarField
    mu: float
    time: float = 0.0
    dt: float = math.nan
    J: float = math.nan
    gnorm: float = math.nan
    J_history: list = field(default_factory=list)
    steps: int = 0
    status: str = "running"
    grad: ScalarField | None = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.u.grid


def _normalize(values, grid: Grid) -> ScalarField:
    f = ScalarField(grid, np.maximum(values, 0.0))
    s = f.norm1()
    if s == 0.0:
        raise ZeroFieldError("field vanishes after clamping")
    return f * (1.0 / s)


def _tangent(u: ScalarField, mu: float):
    g = grad_J(u, mu, tangential=True)
    return g, g.norm1()


def seed_field(kind: str, domain: Domain, grid: Grid, mu: float = 1.0, *, a=None, lam: float = 8.0,
               config: BubbleConfiguration | None = None, seed: int = 0,
               consts: UniversalConstants | None = None, dt: float | None = None) -> FlowState:
    """Initial flow state.

    Parameters
    ----------
    kind : {"single-bubble", "multi-bubble", "random-bump"}
    a, lam : center and concentration for ``single-bubble``.
    config : BubbleConfiguration for ``multi-bubble``.
    seed : RNG seed for ``random-bump`` (a few positive Gaussian bumps).
    dt : float, optional
        First step size; defaults to ``0.02 / |grad J|_1`` so the first move
        is a few percent of the unit sphere.
    """
    if grid.domain != domain:
        raise DomainError("grid was built on a different domain")
    consts = consts or universal_constants(domain.n, mu, direct=False)
    if kind == "single-bubble":
        a = domain.anchor() if a is None else a
        pb = project_bubble(BubbleParams(tuple(np.asarray(a, float)), lam), domain, "solve", grid,
                            consts=consts, regime_floor=0.0)
        vals = pb.values
    elif kind == "multi-bubble":
        if config is None:
            raise DomainError("multi-bubble seed needs a configuration")
        vals = config.field(grid, consts).values
    elif kind == "random-bump":
        rng = np.random.default_rng(seed)
        blo, bhi = domain.bounding_box()
        vals = np.zeros(grid.size)
        placed = 0
        while placed < 4:
            c = rng.uniform(blo, bhi)
            d = float(domain.signed_distance(c))
            if d <= 0:
                continue
            w = rng.uniform(0.3, 1.0) * d
            amp = rng.uniform(0.5, 1.5)
            vals += amp * np.exp(-np.sum((grid.points - c) ** 2, axis=1) / (2 * w * w))
            placed += 1
    else:
        raise ValueError(f"unknown seed kind {kind!r}")
    if not np.any(vals > 0):
        raise ZeroFieldError("degenerate seed")
    u = _normalize(vals, grid)
    J = J_normalized(u, mu)
    g, gn = _tangent(u, mu)
    if dt is None:
        dt = 0.02 / gn if gn > 0 else 1.0
    return FlowState(u=u, mu=mu, dt=dt, J=J, gnorm=gn, J_history=[(0.0, J, gn)], grad=g)


def flow_step(state: FlowState, dt: float | None = None, dt_floor: float | None = None,
              dt_cap: float | None = None) -> FlowState:
    """One accepted step (with backtracking) of ``u' = -grad J``.

    Returns a new state; on failure to decrease J before ``dt`` falls below
    ``dt_floor`` the returned state carries ``status='stagnation'``.
    """
    dt = state.dt if dt is None else dt
    dt_floor = 1e-10 * dt if dt_floor is None else dt_floor
    dt_cap = math.inf if dt_cap is None else dt_cap
    u = state.u
    g = state.grad if state.grad is not None else _tangent(u, state.mu)[0]
    while dt >= dt_floor:
        trial = _normalize(u.values - dt * g.values, u.grid)
        J = J_normalized(trial, state.mu)
        if J <= state.J:
            gt, gn = _tangent(trial, state.mu)
            t = state.time + dt
            hist = state.J_history + [(t, J, gn)]
            return FlowState(u=trial, mu=state.mu, time=t, dt=min(dt * DT_GROWTH, dt_cap), J=J,
                             gnorm=gn, J_history=hist, steps=state.steps + 1, status="running",
                             grad=gt)
        dt *= 0.5
    return replace(state, dt=dt, status="stagnation", grad=g)


def alarm_threshold(grid: Grid) -> float:
    """Largest nodal value a resolvable bubble can reach: ``0.5 h^(-(n-2)/2)``."""
    return ALARM_FACTOR * grid.h ** (-(grid.n - 2) / 2.0)


def level_classification(J: float, consts: UniversalConstants, p_max: int = 8) -> int:
    """``p`` minimizing ``|J - p^(q-1) S~|``."""
    q = critical_exponents(consts.n, consts.mu).two_mu_star
    levels = [abs(J - p ** (q - 1.0) * consts.S_tilde_HL) for p in range(1, p_max + 1)]
    return int(np.argmin(levels)) + 1


@dataclass
class FlowSummary:
    state: FlowState
    status: str
    snapshots: list
    J_limit: float
    level: int


def run_flow(state: FlowState, horizon: float = math.inf, max_steps: int = 1000,
             snapshot_every: int = 100, dt_cap: float | None = None,
             consts: UniversalConstants | None = None, callback=None) -> FlowSummary:
    """Advance the flow until the horizon, ``max_steps`` accepted steps, stagnation
    or the concentration alarm.

    Snapshots ``(step, time, J, field)`` are kept every ``snapshot_every``
    accepted steps and at the end; ``callback(state)`` runs after each step.
    """
    if not horizon >= 0:
        raise DomainError("horizon must be nonnegative")
    consts = consts or universal_constants(state.grid.n, state.mu, direct=False)
    alarm = alarm_threshold(state.grid)
    snaps = [(state.steps, state.time, state.J, state.u)]
    status = "horizon"
    dt_cap = 50.0 * state.dt if dt_cap is None else dt_cap
    while state.steps < max_steps and state.time < horizon:
        dt = min(state.dt, horizon - state.time)
        nxt = flow_step(state, dt, dt_floor=1e-10 * state.dt, dt_cap=dt_cap)
        if nxt.status == "stagnation":
            state = nxt
            status = "stagnation"
            break
        state = nxt
        if callback is not None:
            callback(state)
        if snapshot_every and state.steps % snapshot_every == 0:
            snaps.append((state.steps, state.time, state.J, state.u))
        if float(np.max(state.u.values)) > alarm:
            status = "alarm"
            break
    else:
        status = "horizon" if state.time >= horizon else "max-steps"
    if snaps[-1][0] != state.steps:
        snaps.append((state.steps, state.time, state.J, state.u))
    state = replace(state, status=status)
    return FlowSummary(state, status, snaps, state.J, level_classification(state.J, consts))


def concentration_diagnostics(state: FlowState, p_max: int, eps: float,
                              consts: UniversalConstants | None = None, **fit_kw) -> dict:
    """V(p, eps) memberships for ``p = 1..p_max`` plus the energy level.

    All holding memberships are reported; no uniqueness is claimed.
    """
    if p_max < 1:
        raise DomainError("p_max must be at least 1")
    consts = consts or universal_constants(state.grid.n, state.mu, direct=False)
    out = {"J": state.J, "level": level_classification(state.J, consts), "memberships": {}}
    for p in range(1, p_max + 1):
        fit = bubble_fit(state.u, p, consts=consts, **fit_kw)
        m = v_membership(state.u, p, eps, fit=fit)
        out["memberships"][p] = {"status": m.status, "margins": m.margins, "fit": fit.as_dict()}
    out["members"] = [p for p, m in out["memberships"].items() if m["status"] == "member"]
    return out

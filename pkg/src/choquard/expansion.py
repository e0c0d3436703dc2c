"""Multi-bubble energy expansion, the interaction parameter eps_ij and level bounds.

For ``u = sum_i alpha_i PU_(a_i, lam)`` normalized to the Dirichlet sphere,

    J(u) ~ S~ (sum a^2)^q / sum a^{2q}
           * [1 - q n(n-2) gamma0 c1 / lam^(n-2) * (H/G interaction sum)]

with ``q = 2*_mu``. ``expansion_J`` evaluates this closed form and, on
request, compares it to ``J`` of the gridded bubble sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import BubbleParams, UniversalConstants, critical_exponents
from .energy import J_normalized
from .errors import DomainError
from .geometry import Domain, Grid, ScalarField, make_grid
from .green import correction_for, green_eval
from .projection import REGIME_FLOOR, project_bubble, richardson


@dataclass(frozen=True)
class BubbleConfiguration:
    """Bubbles with weights on a domain, kept in canonical (lexicographic) order."""

    bubbles: tuple
    domain: Domain

    def __post_init__(self):
        bs = tuple(self.bubbles)
        if not bs:
            raise DomainError("configuration needs at least one bubble")
        for b in bs:
            if b.n != self.domain.n:
                raise DomainError("bubble and domain dimensions differ")
            if not self.domain.signed_distance(b.center) > 0:
                raise DomainError(f"bubble center {b.a} is not interior")
        bs = tuple(sorted(bs, key=lambda b: (tuple(b.a), b.lam, b.alpha)))
        object.__setattr__(self, "bubbles", bs)

    @classmethod
    def from_arrays(cls, centers, lams, alphas, domain: Domain, normalize_weights: bool = False):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        p = len(centers)
        lams = np.broadcast_to(np.asarray(lams, dtype=float), (p,))
        alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (p,))
        if normalize_weights:
            alphas = alphas / alphas.sum()
        bs = [BubbleParams(tuple(c), float(l), float(a)) for c, l, a in zip(centers, lams, alphas)]
        return cls(tuple(bs), domain)

    @property
    def p(self) -> int:
        return len(self.bubbles)

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.a for b in self.bubbles])

    @property
    def lams(self) -> np.ndarray:
        return np.array([b.lam for b in self.bubbles])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([b.alpha for b in self.bubbles])

    @property
    def d_a(self) -> float:
        """Smallest pairwise center distance (inf for one bubble)."""
        c = self.centers
        if len(c) < 2:
            return math.inf
        d = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
        return float(d[~np.eye(len(c), dtype=bool)].min())

    @property
    def boundary_distances(self) -> np.ndarray:
        return np.asarray(self.domain.signed_distance(self.centers), dtype=float)

    def common_lambda(self) -> float:
        lams = self.lams
        if not np.all(lams == lams[0]):
            raise DomainError("the expansion needs one common lambda")
        return float(lams[0])

    def field(self, grid: Grid, consts: UniversalConstants) -> ScalarField:
        """``sum_i alpha_i PU_i`` by grid solves."""
        total = np.zeros(grid.size)
        for b in self.bubbles:
            pb = project_bubble(b, self.domain, "solve", grid, consts=consts, regime_floor=0.0)
            total += b.alpha * pb.values
        return ScalarField(grid, total)


@dataclass
class ExpansionReport:
    p: int
    lam: float
    d_a: float
    leading: float
    correction: float
    predicted_J: float
    direct_J: float = math.nan
    gap: float = math.nan
    lam_d_a: float = math.inf
    lam_d_boundary: float = math.inf
    regime_ok: bool = True
    green_source: str = ""
    H: list = field(default_factory=list)
    G: list = field(default_factory=list)
    direct_detail: dict = field(default_factory=dict)

    @property
    def relative_gap(self) -> float:
        """``gap / |correction|``."""
        return self.gap / abs(self.correction)


def leading_term(alphas, S_tilde: float, q: float) -> float:
    a = np.asarray(alphas, dtype=float)
    return S_tilde * np.sum(a * a) ** q / np.sum(a ** (2 * q))


def interaction_bracket(alphas, H, G, q: float) -> float:
    """The H/G weighted sum inside the expansion."""
    a = np.asarray(alphas, dtype=float)
    s2 = np.sum(a * a)
    s2q = np.sum(a ** (2 * q))
    out = float(np.sum((a * a / s2 - 2.0 * a ** (2 * q) / s2q) * np.asarray(H)))
    p = len(a)
    for i in range(p):
        for k in range(p):
            if i != k:
                out += (2.0 * a[i] ** (2 * q - 1) * a[k] / s2q - a[i] * a[k] / s2) * G[i][k]
    return out


def green_table(config: BubbleConfiguration, method: str = "auto", **kw):
    """``H(a_i, a_i)`` and ``G(a_i, a_k)`` for a configuration; also the source label."""
    p = config.p
    H = [0.0] * p
    G = [[0.0] * p for _ in range(p)]
    source = ""
    for i, b in enumerate(config.bubbles):
        corr = correction_for(b.a, config.domain, method, **kw)
        source = corr.kind
        H[i] = corr.value(b.center)
        for k, c in enumerate(config.bubbles):
            if k != i:
                G[i][k] = green_eval(b.a, c.center, corr)[0]
    return H, G, source


def expansion_J(config: BubbleConfiguration, consts: UniversalConstants, *, green_method: str = "auto",
                green_kw: dict | None = None, direct: bool = False, h: float | None = None,
                extrapolate: bool = False, regime_floor: float = REGIME_FLOOR) -> ExpansionReport:
    """Closed-form J of a common-lambda configuration and optional grid comparison.

    Parameters
    ----------
    direct : bool
        Also evaluate ``J`` of the normalized gridded bubble sum at mesh ``h``.
    extrapolate : bool
        With ``direct``, evaluate at ``h`` and ``h/2`` and Richardson-extrapolate.
    """
    lam = config.common_lambda()
    if config.p > 1 and not config.d_a > 0:
        raise DomainError("bubble centers must be distinct")
    n = consts.n
    q = critical_exponents(n, consts.mu).two_mu_star
    H, G, source = green_table(config, green_method, **(green_kw or {}))
    alphas = config.alphas
    lead = leading_term(alphas, consts.S_tilde_HL, q)
    bracket = interaction_bracket(alphas, H, G, q)
    pred = lead * (1.0 - q * n * (n - 2) * consts.gamma0 * consts.c1 / lam ** (n - 2) * bracket)
    lam_d_a = lam * config.d_a
    lam_db = lam * float(config.boundary_distances.min())
    rep = ExpansionReport(p=config.p, lam=lam, d_a=config.d_a, leading=lead, correction=pred - lead,
                          predicted_J=pred, lam_d_a=lam_d_a, lam_d_boundary=lam_db,
                          regime_ok=min(lam_d_a, lam_db) >= regime_floor, green_source=source,
                          H=list(H), G=[list(r) for r in G])
    if direct:
        if h is None:
            raise DomainError("direct evaluation needs a mesh width")
        vals = {}
        for hh in ((h, h / 2.0) if extrapolate else (h,)):
            grid = make_grid(config.domain, hh)
            vals[hh] = J_normalized(config.field(grid, consts), consts.mu)
        dj = richardson(vals[h], vals[h / 2.0]) if extrapolate else vals[h]
        rep.direct_J = dj
        rep.gap = abs(pred - dj)
        rep.direct_detail = {str(k): v for k, v in vals.items()}
    return rep


def eps_interaction(bi: BubbleParams, bj: BubbleParams, variant: str = "as-written") -> float:
    """Interaction parameter ``eps_ij``.

    ``as-written`` uses ``lam_i |a_i - a_j|^2`` in the bracket; ``symmetric``
    uses ``lam_i lam_j |a_i - a_j|^2``.
    """
    if not (bi.lam > 0 and bj.lam > 0):
        raise DomainError("concentrations must be positive")
    n = bi.n
    d2 = float(np.sum((bi.center - bj.center) ** 2))
    if variant == "as-written":
        cross = bi.lam * d2
    elif variant == "symmetric":
        cross = bi.lam * bj.lam * d2
    else:
        raise ValueError(f"unknown eps variant {variant!r}")
    return (bi.lam / bj.lam + bj.lam / bi.lam + cross) ** ((2.0 - n) / 2.0)


def lambda_bar(eps: float, H_aa: float, consts: UniversalConstants) -> float:
    """Smallest lam where the one-bubble expansion meets ``(1 + eps)^(q-1) S~``."""
    n = consts.n
    q = critical_exponents(n, consts.mu).two_mu_star
    excess = (1.0 + eps) ** (q - 1.0) - 1.0
    return (q * n * (n - 2) * consts.gamma0 * consts.c1 * H_aa / excess) ** (1.0 / (n - 2))


@dataclass
class BoundReport:
    J: float
    upper_generic: float
    margin_generic: float
    holds_generic: bool
    upper_degenerate: float
    margin_degenerate: float
    holds_degenerate: bool
    degenerate: bool


def bound_checks(config: BubbleConfiguration, consts: UniversalConstants, eps: float, h: float,
                 slack: float = 0.05, energy=None, degenerate_alpha: float = 0.01,
                 degenerate_distance: float | None = None) -> BoundReport:
    """Evaluate the two upper level bounds on the normalized gridded bubble sum.

    ``J <= (p + eps)^(q-1) S~`` is the generic bound; ``J <= p^(q-1) S~ (1 + slack)``
    is the near-degenerate bound. A configuration counts as near-degenerate when
    some weight falls below ``degenerate_alpha * max alpha`` or ``d_a`` is at most
    ``degenerate_distance`` (default ``2 h``). Both margins are always returned.
    """
    q = critical_exponents(consts.n, consts.mu).two_mu_star
    grid = make_grid(config.domain, h)
    u = config.field(grid, consts)
    J = energy(u) if energy is not None else J_normalized(u, consts.mu)
    p = config.p
    up_gen = (p + eps) ** (q - 1.0) * consts.S_tilde_HL
    up_deg = p ** (q - 1.0) * consts.S_tilde_HL * (1.0 + slack)
    dd = 2.0 * h if degenerate_distance is None else degenerate_distance
    a = config.alphas
    degenerate = bool(a.min() < degenerate_alpha * a.max() or config.d_a <= dd * (1 + 1e-12))
    return BoundReport(J=J, upper_generic=up_gen, margin_generic=up_gen - J, holds_generic=J < up_gen,
                       upper_degenerate=up_deg, margin_degenerate=up_deg - J, holds_degenerate=J <= up_deg, degenerate=degenerate)

"""Bounded domains, interior lattices and the discrete Dirichlet calculus.

A :class:`Grid` holds the lattice nodes strictly inside a domain. Lattice
edges leaving the domain are cut at the boundary crossing (distance
``theta * h`` from the node), which gives the symmetric Shortley-Weller-type
operator

    (A u)_i = h^-2 [ sum_{j ~ i inside} (u_i - u_j) + sum_{cut arms} u_i / theta ]

``A`` is symmetric positive definite, the Dirichlet form is
``<u, v> = h^n u^T A v`` and ``poisson_solve`` inverts ``A``, so the discrete
Green identity ``<solve(f), v> = sum f v h^n`` holds to solver tolerance.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EmptyGridError, GridMismatchError, SolverError

THETA_MIN = 1e-6
DIRECT_SOLVE_MAX_NODES = 3_000
SOLVER_RTOL = 1e-10
MAGIC = b"CHQF"


@dataclass(frozen=True)
class Domain:
    """Ball, spherical annulus or axis-aligned box in R^n."""

    kind: str
    center: tuple = ()
    radius: float = 0.0
    r_inner: float = 0.0
    lo: tuple = ()
    hi: tuple = ()

    @classmethod
    def ball(cls, center=(0.0, 0.0, 0.0), radius=1.0):
        if not radius > 0:
            raise ValueError("ball radius must be positive")
        return cls("ball", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def annulus(cls, r_inner, r_outer, center=(0.0, 0.0, 0.0)):
        if not 0 < r_inner < r_outer:
            raise ValueError("annulus needs 0 < r_inner < r_outer")
        return cls("annulus", center=tuple(map(float, center)), radius=float(r_outer), r_inner=float(r_inner))

    @classmethod
    def box(cls, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
        lo, hi = tuple(map(float, lo)), tuple(map(float, hi))
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("box needs lo < hi componentwise")
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def parse(cls, spec: str, n: int = 3):
        """Parse ``ball:R``, ``annulus:r_in,r_out`` or ``box:lo,hi`` (cube)."""
        kind, _, args = spec.partition(":")
        vals = [float(t) for t in args.split(",") if t.strip()] if args else []
        zero = (0.0,) * n
        if kind == "ball":
            return cls.ball(zero, vals[0] if vals else 1.0)
        if kind == "annulus":
            if len(vals) != 2:
                raise ValueError("annulus spec is annulus:r_inner,r_outer")
            return cls.annulus(vals[0], vals[1], zero)
        if kind == "box":
            lo, hi = (vals if len(vals) == 2 else (0.0, 1.0))
            return cls.box((lo,) * n, (hi,) * n)
        raise ValueError(f"unknown domain kind {kind!r}")

    def spec(self) -> str:
        if self.kind == "ball":
            return f"ball:{self.radius!r}@" + ",".join(map(repr, self.center))
        if self.kind == "annulus":
            return f"annulus:{self.r_inner!r},{self.radius!r}@" + ",".join(map(repr, self.center))
        return "box:" + ",".join(map(repr, self.lo)) + ";" + ",".join(map(repr, self.hi))

    @classmethod
    def from_spec(cls, s: str):
        """Inverse of :meth:`spec`."""
        kind, _, rest = s.partition(":")
        if kind == "box":
            lo, hi = rest.split(";")
            return cls.box([float(t) for t in lo.split(",")], [float(t) for t in hi.split(",")])
        body, _, c = rest.partition("@")
        center = [float(t) for t in c.split(",")]
        vals = [float(t) for t in body.split(",")]
        if kind == "ball":
            return cls.ball(center, vals[0])
        return cls.annulus(vals[0], vals[1], center)

    @property
    def n(self) -> int:
        return len(self.center) if self.kind != "box" else len(self.lo)

    @property
    def inradius(self) -> float:
        if self.kind == "ball":
            return self.radius
        if self.kind == "annulus":
            return 0.5 * (self.radius - self.r_inner)
        return 0.5 * min(b - a for a, b in zip(self.lo, self.hi))

    @property
    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(np.subtract(self.hi, self.lo)))
        return 2.0 * self.radius

    def bounding_box(self):
        if self.kind == "box":
            return np.array(self.lo), np.array(self.hi)
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def anchor(self) -> np.ndarray:
        """Lattice origin: the center for round domains, the low corner for boxes."""
        return np.array(self.lo if self.kind == "box" else self.center)

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            lo, hi = np.array(self.lo), np.array(self.hi)
            inside = np.min(np.minimum(x - lo, hi - x), axis=-1)
            outside = np.linalg.norm(np.maximum(0.0, np.maximum(lo - x, x - hi)), axis=-1)
            return np.where(outside > 0.0, -outside, inside)
        r = np.linalg.norm(x - np.array(self.center), axis=-1)
        if self.kind == "ball":
            return self.radius - r
        return np.minimum(r - self.r_inner, self.radius - r)

    def project_to_boundary(self, x):
        """Closest boundary point (for points near the boundary)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            lo, hi = np.array(self.lo), np.array(self.hi)
            y = np.clip(x, lo, hi)
            dlo, dhi = y - lo, hi - y
            d = np.minimum(dlo, dhi)
            k = np.argmin(d, axis=-1)
            rows = np.arange(y.shape[0]) if y.ndim == 2 else ()
            if y.ndim == 1:
                y = y.copy()
                y[k] = lo[k] if dlo[k] <= dhi[k] else hi[k]
                return y
            y = y.copy()
            use_lo = dlo[rows, k] <= dhi[rows, k]
            y[rows, k] = np.where(use_lo, lo[k], hi[k])
            return y
        c = np.array(self.center)
        d = x - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        unit = d / np.where(r > 0, r, 1.0)
        if self.kind == "ball":
            return c + self.radius * unit
        target = np.where(r - self.r_inner < self.radius - r, self.r_inner, self.radius)
        return c + target * unit


def boundary_distance(domain: Domain, x):
    """Signed distance to the boundary: positive inside, zero on it."""
    return domain.signed_distance(x)


class Grid:
    """Interior lattice nodes of a domain with cut-edge boundary arms.

    Nodes are stored in lexicographic order of their integer coordinates.
    """

    def __init__(self, domain: Domain, h: float):
        if not h > 0:
            raise ValueError("mesh width must be positive")
        if h > 2.0 * domain.inradius:
            raise EmptyGridError(f"h={h} exceeds twice the inradius {domain.inradius}")
        self.domain = domain
        self.h = float(h)
        self.n = domain.n
        anchor = domain.anchor()
        blo, bhi = domain.bounding_box()
        kmin = np.ceil((blo - anchor) / h - 1e-9).astype(int)
        kmax = np.floor((bhi - anchor) / h + 1e-9).astype(int)
        self.kmin = kmin
        self.shape = tuple(int(t) for t in kmax - kmin + 1)
        axes = [np.arange(a, b + 1) for a, b in zip(kmin, kmax)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        pts = anchor + h * mesh
        sd = domain.signed_distance(pts)
        inside = sd > 1e-9 * h
        if not inside.any():
            raise EmptyGridError(f"no interior lattice node at h={h}")
        self.index = mesh[inside]                    # integer coords, lexicographic
        self.points = anchor + h * self.index
        self.size = len(self.index)
        lookup = -np.ones(self.shape, dtype=np.int64)
        lookup[tuple((self.index - kmin).T)] = np.arange(self.size)
        self.lookup = lookup
        self._cache = {}
        self._build_topology()

    # -- topology -------------------------------------------------------
    def _neighbor(self, axis, sign):
        nb = self.index - self.kmin
        nb = nb.copy()
        nb[:, axis] += sign
        ok = (nb[:, axis] >= 0) & (nb[:, axis] < self.shape[axis])
        j = -np.ones(self.size, dtype=np.int64)
        j[ok] = self.lookup[tuple(nb[ok].T)]
        return j

    def _build_topology(self):
        h, dom = self.h, self.domain
        ei, ej = [], []
        arm_node, arm_theta, arm_point, arm_axis, arm_sign = [], [], [], [], []
        for axis in range(self.n):
            for sign in (1, -1):
                j = self._neighbor(axis, sign)
                if sign == 1:
                    mask = j >= 0
                    ei.append(np.nonzero(mask)[0])
                    ej.append(j[mask])
                cut = np.nonzero(j < 0)[0]
                if len(cut):
                    step = np.zeros(self.n)
                    step[axis] = sign * h
                    theta = _crossing(dom, self.points[cut], step)
                    arm_node.append(cut)
                    arm_theta.append(theta)
                    arm_point.append(self.points[cut] + theta[:, None] * step)
                    arm_axis.append(np.full(len(cut), axis))
                    arm_sign.append(np.full(len(cut), sign))
        self.edges = (np.concatenate(ei), np.concatenate(ej))
        cat = (lambda xs, d=np.float64: np.concatenate(xs) if xs else np.zeros(0, d))
        self.arm_node = cat(arm_node, np.int64).astype(np.int64)
        self.arm_theta = np.maximum(cat(arm_theta), THETA_MIN)
        self.arm_point = np.concatenate(arm_point) if arm_point else np.zeros((0, self.n))
        self.arm_axis = cat(arm_axis, np.int64).astype(np.int64)
        self.arm_sign = cat(arm_sign, np.int64).astype(np.int64)

    @cached_property
    def operator(self) -> sp.csr_matrix:
        """The SPD matrix ``A`` (discrete ``-Laplacian``, zero Dirichlet data)."""
        N = self.size
        i, j = self.edges
        diag = np.zeros(N)
        np.add.at(diag, i, 1.0)
        np.add.at(diag, j, 1.0)
        np.add.at(diag, self.arm_node, 1.0 / self.arm_theta)
        rows = np.concatenate([i, j, np.arange(N)])
        cols = np.concatenate([j, i, np.arange(N)])
        vals = np.concatenate([-np.ones(len(i)), -np.ones(len(i)), diag])
        A = sp.csr_matrix((vals, (rows, cols)), shape=(N, N)) / self.h ** 2
        A.sort_indices()
        return A

    @property
    def weight(self) -> float:
        return self.h ** self.n

    def boundary_adjacent(self) -> np.ndarray:
        """Boolean mask of nodes with at least one cut arm."""
        m = np.zeros(self.size, dtype=bool)
        m[self.arm_node] = True
        return m

    def dirichlet_lift(self, g) -> np.ndarray:
        """Right-hand-side contribution of boundary data ``g`` (callable on points)."""
        b = np.zeros(self.size)
        if len(self.arm_node):
            vals = np.asarray(g(self.arm_point), dtype=float)
            np.add.at(b, self.arm_node, vals / self.arm_theta / self.h ** 2)
        return b

    # -- solves ---------------------------------------------------------
    def solve(self, rhs: np.ndarray, rtol: float = SOLVER_RTOL) -> np.ndarray:
        """Solve ``A w = rhs``; deterministic, residual checked."""
        rhs = np.asarray(rhs, dtype=float)
        A = self.operator
        nrm = np.linalg.norm(rhs)
        if nrm == 0.0:
            return np.zeros_like(rhs)
        if self.size <= DIRECT_SOLVE_MAX_NODES:
            lu = self._cache.get("lu")
            if lu is None:
                lu = spla.splu(A.tocsc())
                self._cache["lu"] = lu
            w = lu.solve(rhs)
        else:
            M = self._cache.get("amg")
            if M is None:
                import pyamg
                M = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric").aspreconditioner(cycle="V")
                self._cache["amg"] = M
            w, info = spla.cg(A, rhs, rtol=rtol * 0.1, atol=0.0, maxiter=2000, M=M)
        res = np.linalg.norm(rhs - A @ w) / nrm
        if not res <= max(rtol, 1e-8):
            raise SolverError(f"Poisson solve stalled at relative residual {res:.3e}", residual=res)
        return w

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def sample(self, fun) -> "ScalarField":
        """Field of ``fun(points)`` on the nodes."""
        return ScalarField(self, fun(self.points))

    def locate(self, x, tol: float = 1e-9):
        """Node index of the lattice point at x, or -1."""
        k = (np.asarray(x, dtype=float) - self.domain.anchor()) / self.h
        kr = np.rint(k)
        if np.max(np.abs(k - kr)) > tol:
            return -1
        loc = kr.astype(int) - self.kmin
        if np.any(loc < 0) or np.any(loc >= np.array(self.shape)):
            return -1
        return int(self.lookup[tuple(loc)])

    def interpolate(self, values, x):
        """Multilinear interpolation at x; all 2^n surrounding nodes must be interior."""
        i = self.locate(x)
        if i >= 0:
            return float(values[i])
        k = (np.asarray(x, dtype=float) - self.domain.anchor()) / self.h
        k0 = np.floor(k).astype(int)
        t = k - k0
        total = 0.0
        for corner in np.ndindex(*(2,) * self.n):
            c = np.array(corner)
            loc = k0 + c - self.kmin
            if np.any(loc < 0) or np.any(loc >= np.array(self.shape)):
                raise ValueError(f"interpolation stencil at {x} leaves the grid")
            j = self.lookup[tuple(loc)]
            if j < 0:
                raise ValueError(f"interpolation stencil at {x} leaves the domain")
            w = np.prod(np.where(c == 1, t, 1.0 - t))
            total += w * values[j]
        return float(total)

    def same_as(self, other: "Grid") -> bool:
        return self is other or (self.domain == other.domain and self.h == other.h)

    def __repr__(self):
        return f"Grid({self.domain.kind}, h={self.h}, nodes={self.size})"


def _crossing(domain: Domain, x, step, iters: int = 60):
    """Fraction theta in (0, 1] of ``step`` at which ``x + theta*step`` meets the boundary.

    Bisection on the exact signed distance; the segment starts inside and its
    far end lies outside.
    """
    lo = np.zeros(len(x))
    hi = np.ones(len(x))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = domain.signed_distance(x + mid[:, None] * step) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def make_grid(domain: Domain, h: float) -> Grid:
    """Interior lattice of ``domain`` with mesh width ``h``."""
    return Grid(domain, h)


class ScalarField:
    """Values on the interior nodes of a grid; zero on and outside the boundary."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        v = np.array(values, dtype=float).reshape(-1)
        if v.shape != (grid.size,):
            raise ValueError(f"expected {grid.size} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        self.grid = grid
        self.values = v

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other):
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def norm1(self) -> float:
        """Discrete Dirichlet norm ``|u|_{1,Omega}``."""
        return math.sqrt(max(dirichlet_inner_product(self, self), 0.0))

    def laplacian(self) -> np.ndarray:
        """``A u``: the discrete ``-Laplacian`` with zero boundary data."""
        return self.grid.operator @ self.values

    # -- serialization ---------------------------------------------------
    def to_bytes(self) -> bytes:
        g = self.grid
        blo, bhi = g.domain.bounding_box()
        spec = g.domain.spec().encode()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<IId", 1, g.n, g.h))
        buf.write(np.asarray(blo, "<f8").tobytes())
        buf.write(np.asarray(bhi, "<f8").tobytes())
        buf.write(struct.pack("<QI", g.size, len(spec)))
        buf.write(spec)
        buf.write(np.asarray(g.points, "<f8").tobytes())
        buf.write(np.asarray(self.values, "<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ScalarField":
        if data[:4] != MAGIC:
            raise ValueError("not a field file")
        off = 4
        version, n, h = struct.unpack_from("<IId", data, off)
        off += 16
        off += 16 * n  # bounding box, recomputed from the domain
        size, slen = struct.unpack_from("<QI", data, off)
        off += 12
        domain = Domain.from_spec(data[off:off + slen].decode())
        off += slen
        pts = np.frombuffer(data, "<f8", size * n, off).reshape(size, n)
        off += 8 * size * n
        vals = np.frombuffer(data, "<f8", size, off)
        grid = make_grid(domain, h)
        if grid.size != size or not np.allclose(grid.points, pts, rtol=0, atol=1e-9 * h):
            raise ValueError("stored node layout does not match the rebuilt grid")
        return cls(grid, vals)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_csv(self, path):
        names = ["x", "y", "z", "w"][: self.grid.n] + ["value"]
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for p, v in zip(self.grid.points, self.values):
                fh.write(",".join(f"{t:.17g}" for t in (*p, v)) + "\n")


def _check_same(u: ScalarField, v: ScalarField):
    if not u.grid.same_as(v.grid):
        raise GridMismatchError("fields live on different grids")


def dirichlet_inner_product(u: ScalarField, v: ScalarField) -> float:
    """Discrete ``int grad u . grad v`` from edge difference quotients.

    Cut arms carry the quotient ``u_i / (theta h)`` against the zero boundary
    value. Products are formed elementwise so the result is exactly symmetric.
    """
    _check_same(u, v)
    g = u.grid
    i, j = g.edges
    du = u.values[i] - u.values[j]
    dv = v.values[i] - v.values[j]
    a = g.arm_node
    s = np.sum(du * dv) + np.sum(u.values[a] * v.values[a] / g.arm_theta)
    return float(s * g.h ** (g.n - 2))


def poisson_solve(rhs: ScalarField, domain: Domain | None = None, grid: Grid | None = None) -> ScalarField:
    """Solve ``-Lap_h w = rhs`` in the domain with ``w = 0`` on the boundary."""
    grid = grid or rhs.grid
    if not grid.same_as(rhs.grid) or (domain is not None and domain != grid.domain):
        raise GridMismatchError("right-hand side is not on the requested grid")
    return ScalarField(grid, grid.solve(rhs.values))

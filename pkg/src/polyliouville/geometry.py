"""Planar domains and the boundary-fitted 5-point Laplacian on uniform grids.

Nodes sit at integer multiples of the spacing. A grid arm that leaves the
domain is shortened to the boundary crossing (Shortley-Weller), which keeps
the scheme second order on curved boundaries.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import GridField
from .errors import ConfigError, DomainError, ResolutionError, SolveError

_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class PlanarDomain:
    """Interface: ``contains``, ``crossing``, ``ray_exit``, ``dist_to_boundary``."""

    kind = "abstract"

    def bbox(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def contains(self, x, y, tol: float = 1e-12) -> np.ndarray:
        raise NotImplementedError

    def dist_to_boundary(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def ray_exit(self, px: float, py: float, dx, dy) -> np.ndarray:
        """Distance from an interior point to the boundary along unit directions."""
        raise NotImplementedError

    def scaled(self, s: float) -> "PlanarDomain":
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def diam(self) -> float:
        x0, x1, y0, y1 = self.bbox()
        return math.hypot(x1 - x0, y1 - y0)

    @property
    def shortest_side(self) -> float:
        x0, x1, y0, y1 = self.bbox()
        return min(x1 - x0, y1 - y0)

    def crossing(self, x, y, dx: int, dy: int, h: float) -> np.ndarray:
        """Fraction of an axis arm of length h (from interior nodes) inside the domain."""
        t = self.ray_exit_many(x, y, float(dx), float(dy))
        return np.clip(t / h, 0.0, 1.0)

    def ray_exit_many(self, x, y, dx: float, dy: float) -> np.ndarray:
        x = np.atleast_1d(x)
        y = np.atleast_1d(y)
        return np.array([self.ray_exit(a, b, np.array([dx]), np.array([dy]))[0] for a, b in zip(x, y)])


@dataclass(frozen=True)
class Disc(PlanarDomain):
    cx: float = 0.0
    cy: float = 0.0
    radius: float = 1.0
    kind = "disc"

    def bbox(self):
        r = self.radius
        return (self.cx - r, self.cx + r, self.cy - r, self.cy + r)

    def contains(self, x, y, tol=1e-12):
        return (np.asarray(x) - self.cx) ** 2 + (np.asarray(y) - self.cy) ** 2 < (self.radius * (1 - tol)) ** 2

    def dist_to_boundary(self, x, y):
        return self.radius - np.hypot(np.asarray(x) - self.cx, np.asarray(y) - self.cy)

    def ray_exit(self, px, py, dx, dy):
        ax, ay = px - self.cx, py - self.cy
        b = ax * dx + ay * dy
        c = ax * ax + ay * ay - self.radius**2
        return -b + np.sqrt(np.maximum(b * b - c, 0.0))

    def ray_exit_many(self, x, y, dx, dy):
        return self.ray_exit(np.asarray(x, float), np.asarray(y, float), dx, dy)

    def scaled(self, s):
        return Disc(self.cx * s, self.cy * s, self.radius * s)

    def to_dict(self):
        return {"kind": "disc", "center": [self.cx, self.cy], "radius": self.radius}


@dataclass(frozen=True)
class Rectangle(PlanarDomain):
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    kind = "rectangle"

    def bbox(self):
        return (self.x0, self.x1, self.y0, self.y1)

    def contains(self, x, y, tol=1e-12):
        e = tol * self.diam
        x = np.asarray(x)
        y = np.asarray(y)
        return (x > self.x0 + e) & (x < self.x1 - e) & (y > self.y0 + e) & (y < self.y1 - e)

    def dist_to_boundary(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return np.minimum.reduce([x - self.x0, self.x1 - x, y - self.y0, self.y1 - y])

    def ray_exit(self, px, py, dx, dy):
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(dx > 0, (self.x1 - px) / dx, np.where(dx < 0, (self.x0 - px) / dx, np.inf))
            ty = np.where(dy > 0, (self.y1 - py) / dy, np.where(dy < 0, (self.y0 - py) / dy, np.inf))
        return np.minimum(tx, ty)

    def ray_exit_many(self, x, y, dx, dy):
        return self.ray_exit(np.asarray(x, float), np.asarray(y, float), dx, dy)

    def scaled(self, s):
        return Rectangle(self.x0 * s, self.x1 * s, self.y0 * s, self.y1 * s)

    def to_dict(self):
        return {"kind": "rectangle", "bounds": [self.x0, self.x1, self.y0, self.y1]}


@dataclass(frozen=True)
class Polygon(PlanarDomain):
    """Simple polygon given by counter-clockwise vertices."""

    vertices: tuple = ()
    kind = "polygon"

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise ConfigError("polygon needs at least three 2-D vertices")
        object.__setattr__(self, "vertices", tuple(map(tuple, v)))

    @property
    def _v(self):
        return np.asarray(self.vertices)

    def bbox(self):
        v = self._v
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    def contains(self, x, y, tol=1e-12):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        v = self._v
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        n = len(v)
        for k in range(n):
            (xa, ya), (xb, yb) = v[k], v[(k + 1) % n]
            cond = (ya > y) != (yb > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = xa + (y - ya) * (xb - xa) / (yb - ya)
            inside ^= cond & (x < xint)
        return inside & (self.dist_to_boundary(x, y) > tol * self.diam)

    def dist_to_boundary(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        v = self._v
        d = np.full(np.broadcast(x, y).shape, np.inf)
        n = len(v)
        for k in range(n):
            a, b = v[k], v[(k + 1) % n]
            e = b - a
            t = np.clip(((x - a[0]) * e[0] + (y - a[1]) * e[1]) / (e @ e), 0.0, 1.0)
            d = np.minimum(d, np.hypot(x - a[0] - t * e[0], y - a[1] - t * e[1]))
        return d

    def ray_exit(self, px, py, dx, dy):
        v = self._v
        dx = np.atleast_1d(dx)
        dy = np.atleast_1d(dy)
        best = np.full(dx.shape, np.inf)
        n = len(v)
        for k in range(n):
            a, b = v[k], v[(k + 1) % n]
            e = b - a
            den = dx * (-e[1]) - dy * (-e[0])
            rx, ry = a[0] - px, a[1] - py
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (rx * (-e[1]) - ry * (-e[0])) / den
                s = (dx * ry - dy * rx) / den
            ok = (np.abs(den) > 1e-15) & (t > 0) & (s >= 0) & (s <= 1)
            best = np.where(ok, np.minimum(best, t), best)
        return best

    def scaled(self, s):
        return Polygon(tuple((a * s, b * s) for a, b in self.vertices))

    def to_dict(self):
        return {"kind": "polygon", "vertices": [list(p) for p in self.vertices]}


@dataclass(frozen=True)
class Annulus(PlanarDomain):
    r_in: float = 0.5
    r_out: float = 1.0
    kind = "annulus"

    def bbox(self):
        r = self.r_out
        return (-r, r, -r, r)

    def contains(self, x, y, tol=1e-12):
        r = np.hypot(x, y)
        return (r > self.r_in * (1 + tol)) & (r < self.r_out * (1 - tol))

    def dist_to_boundary(self, x, y):
        r = np.hypot(x, y)
        return np.minimum(r - self.r_in, self.r_out - r)

    def ray_exit(self, px, py, dx, dy):
        b = px * dx + py * dy
        c_out = px * px + py * py - self.r_out**2
        t_out = -b + np.sqrt(np.maximum(b * b - c_out, 0.0))
        c_in = px * px + py * py - self.r_in**2
        disc = b * b - c_in
        with np.errstate(invalid="ignore"):
            t_in = -b - np.sqrt(np.where(disc > 0, disc, np.nan))
        hit = (disc > 0) & (t_in > 0)
        return np.where(hit, np.minimum(t_in, t_out), t_out)

    def ray_exit_many(self, x, y, dx, dy):
        return self.ray_exit(np.asarray(x, float), np.asarray(y, float), dx, dy)

    def scaled(self, s):
        return Annulus(self.r_in * s, self.r_out * s)

    def to_dict(self):
        return {"kind": "annulus", "radii": [self.r_in, self.r_out]}


def domain_from_dict(d: dict) -> PlanarDomain:
    kind = d.get("kind")
    try:
        if kind == "disc":
            c = d.get("center", [0.0, 0.0])
            return Disc(float(c[0]), float(c[1]), float(d.get("radius", 1.0)))
        if kind in ("rectangle", "square"):
            b = d.get("bounds", [0.0, 1.0, 0.0, 1.0])
            return Rectangle(*map(float, b))
        if kind == "polygon":
            return Polygon(tuple(map(tuple, d["vertices"])))
        if kind == "annulus":
            r = d.get("radii", [0.5, 1.0])
            return Annulus(float(r[0]), float(r[1]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad planar domain description: {exc}") from exc
    raise ConfigError(f"unknown planar domain kind {kind!r}")


# ---------------------------------------------------------------------------
# grid operator


@dataclass
class PlanarGrid:
    """Uniform node grid over a planar domain with the Shortley-Weller -Laplacian.

    ``A`` acts on interior unknowns (ordered as ``np.flatnonzero(mask)``).
    For a function u with boundary values g at the crossing points,
    ``(-Lap_h u)_int = A @ u_int - boundary_rhs(g)``.
    """

    domain: PlanarDomain
    h: float
    frame: str = "physical"
    min_points: int = 32
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ConfigError("grid spacing must be positive")
        x0, x1, y0, y1 = self.domain.bbox()
        if self.min_points and (self.domain.shortest_side / self.h) < self.min_points:
            raise ResolutionError(
                f"spacing {self.h} gives fewer than {self.min_points} points per shortest side"
            )
        i0 = math.floor(x0 / self.h + 1e-9) - 1
        i1 = math.ceil(x1 / self.h - 1e-9) + 1
        j0 = math.floor(y0 / self.h + 1e-9) - 1
        j1 = math.ceil(y1 / self.h - 1e-9) + 1
        self.index_origin = (i0, j0)
        self.shape = (i1 - i0 + 1, j1 - j0 + 1)
        self.origin = (i0 * self.h, j0 * self.h)
        X, Y = self.coords()
        self.mask = self.domain.contains(X, Y)
        if not self.mask.any():
            raise ResolutionError("no interior grid nodes")
        self.interior = np.flatnonzero(self.mask.ravel())
        self._assemble()
        self._lu = None

    def coords(self):
        nx, ny = self.shape
        x = self.origin[0] + self.h * np.arange(nx)
        y = self.origin[1] + self.h * np.arange(ny)
        return np.meshgrid(x, y, indexing="ij")

    @property
    def n(self) -> int:
        return self.interior.size

    def interior_points(self) -> np.ndarray:
        X, Y = self.coords()
        return np.column_stack([X.ravel()[self.interior], Y.ravel()[self.interior]])

    def _assemble(self):
        nx, ny = self.shape
        h = self.h
        lin = -np.ones(nx * ny, dtype=np.int64)
        lin[self.interior] = np.arange(self.n)
        ii, jj = np.unravel_index(self.interior, self.shape)
        X, Y = self.coords()
        px = X.ravel()[self.interior]
        py = Y.ravel()[self.interior]
        arms = {}
        for dx, dy in _DIRS:
            ni, nj = ii + dx, jj + dy
            nb = lin[ni * ny + nj]
            theta = np.ones(self.n)
            out = nb < 0
            if out.any():
                theta[out] = self.domain.crossing(px[out], py[out], dx, dy, h)
                if np.any(theta[out] <= 0):
                    raise DomainError("degenerate boundary crossing on grid")
            arms[(dx, dy)] = (nb, theta * h)
        rows, cols, vals = [], [], []
        b_rows, b_coef, b_x, b_y = [], [], [], []
        diag = np.zeros(self.n)
        idx = np.arange(self.n)
        for (dpos, dneg) in (((1, 0), (-1, 0)), ((0, 1), (0, -1))):
            nb_p, a = arms[dpos]
            nb_m, b = arms[dneg]
            cp = 2.0 / ((a + b) * a)
            cm = 2.0 / ((a + b) * b)
            diag += cp + cm
            for nb, c, d, arm in ((nb_p, cp, dpos, a), (nb_m, cm, dneg, b)):
                inside = nb >= 0
                rows.append(idx[inside])
                cols.append(nb[inside])
                vals.append(-c[inside])
                outside = ~inside
                b_rows.append(idx[outside])
                b_coef.append(c[outside])
                b_x.append(px[outside] + d[0] * arm[outside])
                b_y.append(py[outside] + d[1] * arm[outside])
        rows.append(idx)
        cols.append(idx)
        vals.append(diag)
        self.A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
        )
        self.bnd_rows = np.concatenate(b_rows)
        self.bnd_coef = np.concatenate(b_coef)
        self.bnd_points = np.column_stack([np.concatenate(b_x), np.concatenate(b_y)])

    # -- boundary data helpers ---------------------------------------------
    def boundary_rhs(self, g_values) -> np.ndarray:
        g = np.broadcast_to(np.asarray(g_values, dtype=float), self.bnd_rows.shape)
        return np.bincount(self.bnd_rows, weights=self.bnd_coef * g, minlength=self.n)

    def neg_laplacian(self, u_int, g_values=0.0) -> np.ndarray:
        return self.A @ u_int - self.boundary_rhs(g_values)

    @property
    def lu(self):
        with self._lock:
            if self._lu is None:
                try:
                    self._lu = spla.splu(self.A.tocsc())
                except RuntimeError as exc:
                    raise SolveError(f"factorization of grid Laplacian failed: {exc}") from exc
            return self._lu

    def solve_dirichlet(self, f_int, g_values) -> np.ndarray:
        """Solve -Lap_h u = f with u = g on the boundary crossings."""
        rhs = np.asarray(f_int, dtype=float) + self.boundary_rhs(g_values)
        u = self.lu.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise SolveError("grid Poisson solve produced non-finite values")
        return u

    def harmonic_extension(self, g_func) -> np.ndarray:
        """Discrete harmonic function with boundary values g_func(x, y)."""
        g = g_func(self.bnd_points[:, 0], self.bnd_points[:, 1])
        return self.solve_dirichlet(np.zeros(self.n), g)

    # -- field conversion --------------------------------------------------
    def to_full(self, u_int, fill=0.0) -> np.ndarray:
        full = np.full(self.shape[0] * self.shape[1], 0.0)
        if callable(fill):
            X, Y = self.coords()
            full[:] = fill(X.ravel(), Y.ravel())
        else:
            full[:] = fill
        full[self.interior] = u_int
        return full.reshape(self.shape)

    def field(self, u_int, fill=0.0) -> GridField:
        return GridField(self.to_full(u_int, fill), self.h, self.origin, self.frame, self.mask)

    def rescaled(self, s: float, frame: str) -> "PlanarGrid":
        """The same nodes in coordinates multiplied by ``s`` (no reassembly of topology)."""
        g = object.__new__(PlanarGrid)
        g.domain = self.domain.scaled(s)
        g.h = self.h * s
        g.frame = frame
        g.min_points = 0
        g._lock = threading.Lock()
        g.index_origin = self.index_origin
        g.shape = self.shape
        g.origin = (self.origin[0] * s, self.origin[1] * s)
        g.mask = self.mask
        g.interior = self.interior
        g.A = (self.A / s**2).tocsr()
        g.bnd_rows = self.bnd_rows
        g.bnd_coef = self.bnd_coef / s**2
        g.bnd_points = self.bnd_points * s
        g._lu = None
        return g

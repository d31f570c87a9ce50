"""Standard bubbles, bubble heights, polyharmonic corrections and the ansatz.

The scaled bubble used throughout is

    e^{u_i} = mu_i^{2m} (1+eps^2)^{2m} / ((mu_i^2 eps^2 + |x - xi_i|^2)^{2m} V(xi_i)),

so that (-Lap)^m u_i = rho^{2m} V(xi_i) e^{u_i} exactly. The correction H_i is
polyharmonic with the boundary traces of -u_i, hence U = sum (u_i + H_i)
satisfies the homogeneous boundary conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import RectBivariateSpline

from .core import GridField, constants_for, rho_from_eps, star_norm
from .errors import ConfigError, NoStandardSolutionError, SignError
from .geometry import PlanarGrid
from .greens import BoggioBall, DiscImages, GreenModel, Grid2D, NavierBallIterated, singular_part
from .potentials import Potential


# ---------------------------------------------------------------------------
# standard bubbles and the limit problem


def standard_bubble(m: int, Q: float, delta: float, xi, x) -> np.ndarray:
    """log(alpha Q delta^{2m} / (delta^2 + |x - xi|^2)^{2m}) at points x (..., 2m)."""
    if Q <= 0:
        raise NoStandardSolutionError("standard solutions require Q > 0")
    if delta <= 0:
        raise ConfigError("delta must be positive")
    c = constants_for(m)
    r2 = np.sum((np.asarray(x, float) - np.asarray(xi, float)) ** 2, axis=-1)
    return math.log(c.alpha2m * Q) + 2 * m * math.log(delta) - 2 * m * np.log(delta**2 + r2)


def geometric_profile(m: int, Q: float, delta: float, xi, x) -> np.ndarray:
    """The rescaled bubble w = U/(2m) + const solving (-Lap)^m w = Q e^{2m w}.

    The bubble U itself solves (-Lap)^m U = ((2m-1)!/Q) e^U.
    """
    shift = math.log(math.factorial(2 * m - 1) / (2 * m * Q * Q)) / (2 * m)
    return standard_bubble(m, Q, delta, xi, x) / (2 * m) + shift


def bubble_mass(m: int, Q: float, delta: float) -> tuple[float, float]:
    """int_{R^{2m}} e^{U} by radial quadrature; equals Lambda_{2m} Q/(2m-1)!."""
    if Q <= 0:
        raise NoStandardSolutionError("standard solutions require Q > 0")
    c = constants_for(m)
    a = c.alpha2m * Q

    def f(t):
        # r = delta tan t
        s, co = math.sin(t), math.cos(t)
        return (s * co) ** (2 * m - 1)

    val, err = integrate.quad(f, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-13)
    return c.omega2m * a * val, c.omega2m * a * err


@lru_cache(maxsize=None)
def nested_laplacian_stencil(dim: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of h^{2m} (-Lap_h)^m with the (2 dim + 1)-point Laplacian."""
    st = {(0,) * dim: 1.0}
    for _ in range(m):
        nxt: dict = {}
        for off, w in st.items():
            nxt[off] = nxt.get(off, 0.0) + 2.0 * dim * w
            for d in range(dim):
                for sgn in (1, -1):
                    o = list(off)
                    o[d] += sgn
                    o = tuple(o)
                    nxt[o] = nxt.get(o, 0.0) - w
        st = nxt
    offs = np.array(list(st.keys()), dtype=float)
    wts = np.array(list(st.values()))
    keep = wts != 0
    return offs[keep], wts[keep]


def fd_polyharmonic(f, pts, h: float, m: int) -> np.ndarray:
    """(-Lap_h)^m f at points ``pts`` (n, dim) by nested centered stencils."""
    pts = np.atleast_2d(np.asarray(pts, float))
    offs, wts = nested_laplacian_stencil(pts.shape[1], m)
    vals = f(pts[:, None, :] + h * offs[None, :, :])
    return vals @ wts / h ** (2 * m)


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class BubbleConfig:
    m: int
    xi: np.ndarray
    mu: np.ndarray
    eps: float
    delta0: float

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, float))
        mu = np.atleast_1d(np.asarray(self.mu, float))
        if xi.shape[1] != 2 * self.m:
            raise ConfigError(f"points must have {2 * self.m} coordinates")
        if mu.shape != (xi.shape[0],):
            raise ConfigError("need one height per point")
        if np.any(mu <= 0):
            raise ConfigError("heights must be positive")
        if self.eps <= 0 or self.delta0 <= 0:
            raise ConfigError("eps and delta0 must be positive")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "mu", mu)

    @property
    def k(self) -> int:
        return self.xi.shape[0]

    @property
    def rho(self) -> float:
        return rho_from_eps(self.m, self.eps)

    @property
    def xi_prime(self) -> np.ndarray:
        return self.xi / self.eps

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "xi": self.xi.tolist(),
            "mu": self.mu.tolist(),
            "eps": self.eps,
            "rho": self.rho,
            "delta0": self.delta0,
        }


def in_M(green: GreenModel, xi, delta0: float) -> bool:
    xi = np.atleast_2d(np.asarray(xi, float))
    for i, p in enumerate(xi):
        if not green.contains(p) or green.dist_to_boundary(p) < 2 * delta0:
            return False
        for q in xi[i + 1 :]:
            if np.linalg.norm(p - q) < 2 * delta0:
                return False
    return True


def select_mu(green: GreenModel, V: Potential, xi, delta0: float | None = None) -> np.ndarray:
    """Heights with 2m log mu_i = H(xi_i,xi_i) + log V(xi_i) + sum_{j!=i} G(xi_j, xi_i)."""
    xi = np.atleast_2d(np.asarray(xi, float))
    if delta0 is not None and not in_M(green, xi, delta0):
        raise ConfigError("configuration is not in the admissible set M")
    v = V(xi)
    if np.any(v <= 0):
        raise SignError("potential must be positive at the concentration points")
    m = green.m
    out = np.empty(len(xi))
    for i, p in enumerate(xi):
        s = green.robin(p) + math.log(v[i])
        for j, q in enumerate(xi):
            if j != i:
                s += green.G(q, p)
        out[i] = math.exp(s / (2 * m))
    return out


def make_config(green: GreenModel, V: Potential, xi, eps: float, delta0: float) -> BubbleConfig:
    xi = np.atleast_2d(np.asarray(xi, float))
    return BubbleConfig(green.m, xi, select_mu(green, V, xi, delta0), eps, delta0)


# ---------------------------------------------------------------------------
# corrections


def scaled_bubble(m: int, mu: float, eps: float, v_xi: float, xi, x) -> np.ndarray:
    r2 = np.sum((np.asarray(x, float) - np.asarray(xi, float)) ** 2, axis=-1)
    return 2 * m * math.log(mu * (1 + eps**2)) - math.log(v_xi) - 2 * m * np.log((mu * eps) ** 2 + r2)


class Correction:
    """Polyharmonic H_i; callable on points of shape (..., 2m)."""

    kind = "abstract"

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def nodal(self, grid: PlanarGrid) -> np.ndarray:
        return self(grid.interior_points())


@dataclass
class DiscCorrection(Correction):
    """m = 1 on the unit disc, exact harmonic extension of -u_i.

    The boundary data log(a^2 + |x - xi|^2), a = mu eps, extends harmonically
    as log s + log|1 - x w|^2 with complex w = 2 conj(xi)/(A + sqrt(A^2 - 4|xi|^2)),
    A = 1 + |xi|^2 + a^2 and s = (A + sqrt(A^2 - 4|xi|^2))/2.
    """

    mu: float
    eps: float
    xi: np.ndarray
    v_xi: float
    kind = "disc_exact"

    def __post_init__(self):
        a2 = (self.mu * self.eps) ** 2
        r2 = float(self.xi @ self.xi)
        A = 1.0 + r2 + a2
        root = math.sqrt(A * A - 4.0 * r2)
        self._s = 0.5 * (A + root)
        self._w = 2.0 * complex(self.xi[0], -self.xi[1]) / (A + root)
        self._const = -2.0 * math.log(self.mu * (1 + self.eps**2)) + math.log(self.v_xi) + 2.0 * math.log(self._s)

    def __call__(self, x):
        x = np.asarray(x, float)
        z = x[..., 0] + 1j * x[..., 1]
        return self._const + 4.0 * np.log(np.abs(1.0 - z * self._w))


@dataclass
class RadialBallCorrection(Correction):
    """Centered bubble on the unit ball of R^{2m}: H = sum_j a_j r^{2j}, j < m."""

    coeffs: np.ndarray
    kind = "ball_radial"

    def __call__(self, x):
        r2 = np.sum(np.asarray(x, float) ** 2, axis=-1)
        return np.polynomial.polynomial.polyval(r2, self.coeffs)

    def laplacian(self, x, dim: int):
        r2 = np.sum(np.asarray(x, float) ** 2, axis=-1)
        out = np.zeros_like(r2)
        for j, a in enumerate(self.coeffs):
            if j:
                out = out + a * 2 * j * (2 * j + dim - 2) * r2 ** (j - 1)
        return out


def _radial_ball_coeffs(m: int, bc: str, mu: float, eps: float, v_xi: float) -> np.ndarray:
    """Match the boundary traces of -u on r = 1 by a radial polyharmonic polynomial."""
    d2 = (mu * eps) ** 2
    n = 2 * m
    c0 = 2 * m * math.log(mu * (1 + eps**2)) - math.log(v_xi)
    # u(r) = c0 - 2m f(r), f = log(d2 + r^2)
    f = [math.log(d2 + 1.0), 2.0 / (d2 + 1.0), 2.0 * (d2 - 1.0) / (d2 + 1.0) ** 2]
    rows, rhs = [], []
    if bc == "dirichlet":
        if m > 3:
            raise ConfigError("radial Dirichlet correction implemented for m <= 3")
        for q in range(m):
            # q-th r-derivative of r^{2j} at r=1
            rows.append([math.perm(2 * j, q) for j in range(m)])
            uq = (c0 if q == 0 else 0.0) - 2 * m * f[q]
            rhs.append(-uq)
    elif bc == "navier":
        if m != 2:
            raise ConfigError("radial Navier correction implemented for m = 2")
        lap_f = (4 * m * d2 + (4 * m - 4)) / (d2 + 1.0) ** 2
        # U(1) = 0 and Lap U(1) = 0, with Lap r^2 = 2n
        rows = [[1.0, 1.0], [0.0, 2.0 * n]]
        rhs = [-(c0 - 2 * m * f[0]), 2 * m * lap_f]
    else:
        raise ConfigError(f"unknown boundary condition {bc!r}")
    return np.linalg.solve(np.array(rows, float), np.array(rhs, float))


@dataclass
class GridCorrection(Correction):
    """Discrete harmonic extension of -u_i on a planar grid (m = 1)."""

    grid: PlanarGrid
    values: np.ndarray
    fill: object = None
    kind = "grid"

    def __post_init__(self):
        full = self.grid.to_full(self.values, fill=self.fill)
        nx, ny = self.grid.shape
        xs = self.grid.origin[0] + self.grid.h * np.arange(nx)
        ys = self.grid.origin[1] + self.grid.h * np.arange(ny)
        self._spline = RectBivariateSpline(xs, ys, full, kx=3, ky=3)

    def __call__(self, x):
        x = np.asarray(x, float)
        return self._spline.ev(x[..., 0], x[..., 1])

    def nodal(self, grid):
        if grid is self.grid:
            return self.values
        return self(grid.interior_points())


def correction_field(green: GreenModel, config: BubbleConfig, i: int, V: Potential, grid: PlanarGrid | None = None):
    """Polyharmonic H_i whose boundary traces are those of -u_i."""
    m = config.m
    xi = config.xi[i]
    mu = float(config.mu[i])
    v_xi = float(V(xi[None])[0])
    if v_xi <= 0:
        raise SignError("potential must be positive at the concentration points")
    if isinstance(green, DiscImages):
        return DiscCorrection(mu, config.eps, xi, v_xi)
    if isinstance(green, (BoggioBall, NavierBallIterated)):
        if m == 1:
            return DiscCorrection(mu, config.eps, xi, v_xi)
        if np.linalg.norm(xi) > 0:
            raise ConfigError("ball corrections for m >= 2 need a centered bubble")
        return RadialBallCorrection(_radial_ball_coeffs(m, green.bc, mu, config.eps, v_xi))
    if isinstance(green, Grid2D):
        g = grid if grid is not None else green.grid

        def data(px, py):
            pts = np.stack([px, py], axis=-1)
            return -scaled_bubble(1, mu, config.eps, v_xi, xi, pts)

        vals = g.harmonic_extension(data)
        return GridCorrection(g, vals, fill=data)
    raise ConfigError(f"no correction available for {green.method}")


# ---------------------------------------------------------------------------
# the ansatz


@dataclass
class Ansatz:
    config: BubbleConfig
    green: GreenModel
    V: Potential
    corrections: list
    v_xi: np.ndarray = field(init=False)

    def __post_init__(self):
        self.v_xi = np.asarray(self.V(self.config.xi), float)

    @property
    def m(self) -> int:
        return self.config.m

    def u(self, i: int, x) -> np.ndarray:
        c = self.config
        return scaled_bubble(c.m, c.mu[i], c.eps, self.v_xi[i], c.xi[i], x)

    def H(self, i: int, x) -> np.ndarray:
        return self.corrections[i](x)

    def U_i(self, i: int, x) -> np.ndarray:
        return self.u(i, x) + self.H(i, x)

    def U(self, x) -> np.ndarray:
        return sum(self.U_i(i, x) for i in range(self.config.k))

    def bubble_density(self, i: int, x) -> np.ndarray:
        """rho^{2m} V(xi_i) e^{u_i(x)}, which equals (-Lap)^m u_i."""
        c = self.config
        r2 = np.sum((np.asarray(x, float) - c.xi[i]) ** 2, axis=-1)
        t = constants_for(c.m).alpha2m * math.factorial(2 * c.m - 1) * (c.eps**2 * c.mu[i] ** 2) ** c.m
        return t / ((c.mu[i] * c.eps) ** 2 + r2) ** (2 * c.m)

    def polyharmonic_U(self, x) -> np.ndarray:
        """(-Lap)^m U evaluated analytically (corrections are polyharmonic)."""
        return sum(self.bubble_density(i, x) for i in range(self.config.k))

    def nodal_U(self, grid: PlanarGrid) -> np.ndarray:
        P = grid.interior_points()
        total = np.zeros(len(P))
        for i in range(self.config.k):
            total += self.u(i, P) + self.corrections[i].nodal(grid)
        return total

    def manifest(self) -> dict:
        d = self.config.to_dict()
        d["green"] = self.green.describe()
        d["V_at_xi"] = self.v_xi.tolist()
        d["corrections"] = [c.kind for c in self.corrections]
        return d


def build_ansatz(config: BubbleConfig, green: GreenModel, V: Potential, grid: PlanarGrid | None = None) -> Ansatz:
    corr = [correction_field(green, config, i, V, grid) for i in range(config.k)]
    return Ansatz(config, green, V, corr)


# ---------------------------------------------------------------------------
# expanded frame: T, R, N


@dataclass
class Operators:
    """Fields of the expanded-frame problem on one grid (m = 1).

    ``R`` uses the discrete Laplacian of W (consistent with the linear solver);
    ``R_exact`` uses the analytic (-Lap) U and differs by discretization error.
    """

    grid: PlanarGrid
    W: np.ndarray
    W_boundary: float
    T: np.ndarray
    R: np.ndarray
    R_exact: np.ndarray
    xi_prime: np.ndarray
    eps: float
    m: int

    def field(self, values) -> GridField:
        return self.grid.field(values)

    def N(self, phi) -> np.ndarray:
        phi = np.asarray(phi, float)
        return self.T * (np.expm1(phi) - phi)

    def star(self, values) -> float:
        return star_norm(self.field(values), self.xi_prime, self.m, self.eps)

    def mass(self, phi=None) -> float:
        e = self.T if phi is None else self.T * np.exp(phi)
        return float(e.sum() * self.grid.h**2)


def expanded_grid(grid: PlanarGrid, eps: float) -> PlanarGrid:
    return grid.rescaled(1.0 / eps, "expanded")


def residual_and_operators(ansatz: Ansatz, grid: PlanarGrid) -> Operators:
    """T, R and N on the expanded frame; ``grid`` lives in the physical frame."""
    c = ansatz.config
    if c.m != 1:
        raise ConfigError("grid residuals are implemented for m = 1")
    eps, rho = c.eps, c.rho
    shift = 2 * c.m * math.log(rho * eps)
    U = ansatz.nodal_U(grid)
    W = U + shift
    P = grid.interior_points()
    T = ansatz.V(P) * np.exp(W)
    gy = expanded_grid(grid, eps)
    lap_W = gy.neg_laplacian(W, shift)
    R = lap_W - T
    R_exact = eps ** (2 * c.m) * ansatz.polyharmonic_U(P) - T
    return Operators(gy, W, shift, T, R, R_exact, c.xi_prime, eps, c.m)


def default_cutoff_radius(green: GreenModel, xi, eps: float, cap: float = 10.0) -> float:
    """Largest R0 <= cap whose cutoff support fits inside the expanded domain
    and keeps different bubbles' supports disjoint."""
    xi = np.atleast_2d(xi)
    d = min(green.dist_to_boundary(p) for p in xi)
    for i in range(len(xi)):
        for j in range(i + 1, len(xi)):
            d = min(d, 0.5 * float(np.linalg.norm(xi[i] - xi[j])))
    return float(min(cap, 0.9 * d / eps - 1.0))


# ---------------------------------------------------------------------------
# correction remainders


def sample_points(green: GreenModel, spacing: float = 0.02) -> np.ndarray:
    """Nodes of a square lattice in the (x1, x2) plane that lie in the domain; other coordinates 0."""
    dom = getattr(green, "domain", None)
    if dom is not None:
        x0, x1, y0, y1 = dom.bbox()
    else:
        x0, x1, y0, y1 = -1.0, 1.0, -1.0, 1.0
    xs = np.arange(x0 + spacing / 2, x1, spacing)
    ys = np.arange(y0 + spacing / 2, y1, spacing)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.zeros((X.size, 2 * green.m))
    P[:, 0], P[:, 1] = X.ravel(), Y.ravel()
    keep = np.array([green.contains(p) for p in P])
    return P[keep]


def correction_remainders(ans: Ansatz, points, far_radius: float = 0.25) -> list[tuple[float, float]]:
    """Per bubble: sup of H_i - [H(., xi_i) - 2m log(mu_i (1 + eps^2)) + log V(xi_i)]
    over ``points``, and sup of U_i - G(., xi_i) over points at distance >= far_radius."""
    c = ans.config
    green = ans.green
    P = np.asarray(points, float)
    out = []
    for i in range(c.k):
        xi = c.xi[i]
        Hreg = np.array([green.H(p, xi) for p in P])
        shift = -2 * c.m * math.log(c.mu[i] * (1 + c.eps**2)) + math.log(ans.v_xi[i])
        near = float(np.max(np.abs(ans.H(i, P) - (Hreg + shift))))
        d = np.linalg.norm(P - xi, axis=1)
        far = d >= far_radius
        G = Hreg[far] + singular_part(c.m, P[far], xi)
        far_sup = float(np.max(np.abs(ans.U_i(i, P[far]) - G)))
        out.append((near, far_sup))
    return out

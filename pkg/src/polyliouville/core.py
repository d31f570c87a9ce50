"""Dimensional constants, bubble integrals, grid fields and weighted norms.

Constants are stored as exact ``(rational, power of pi)`` pairs and turned
into floats only at the API boundary, so integer identities (for example the
spectral constant) can be tested exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import ConfigError, InvalidOrderError, ResolutionError, ToleranceError


# ---------------------------------------------------------------------------
# exact constants


@dataclass(frozen=True)
class PiMonomial:
    """The exact number ``coef * pi**power``."""

    coef: Fraction
    power: int = 0

    def __float__(self) -> float:
        return float(self.coef) * math.pi**self.power

    def __mul__(self, other: "PiMonomial") -> "PiMonomial":
        return PiMonomial(self.coef * other.coef, self.power + other.power)

    def __str__(self) -> str:
        c = str(self.coef)
        if self.power == 0:
            return c
        return f"{c}*pi^{self.power}"


def _harmonic(n: int) -> Fraction:
    return sum((Fraction(1, j) for j in range(1, n + 1)), Fraction(0))


@dataclass(frozen=True)
class Constants:
    """Closed-form constants for operator order ``m`` (dimension ``2m``).

    ``alpha2m`` is the bubble amplitude for which the standard bubble with
    ``Q = (2m-1)!`` carries mass ``Lambda2m``; ``c1`` uses harmonic numbers
    (see ``appendix_integral_oracle`` for the quadrature cross-check).
    Float fields mirror the exact values in ``exact``.
    """

    m: int
    omega2m: float
    Lambda2m: float
    alpha2m: float
    bm: float
    c0: float
    c1: float
    tm: float
    exact: dict = field(repr=False, compare=False)

    @property
    def c1_over_c0(self) -> Fraction:
        return _harmonic(2 * self.m - 1) - _harmonic(self.m - 1)

    @property
    def tm_int(self) -> int:
        t = self.exact["tm"]
        assert t.power == 0 and t.coef.denominator == 1
        return int(t.coef)

    @property
    def energy_offset_per_bubble(self) -> float:
        """Constant term per bubble in the energy expansion, -2 b_m (1 + m c1/c0)."""
        return -2.0 * self.bm * (1.0 + self.m * float(self.c1_over_c0))

    def as_dict(self) -> dict:
        out = {"m": self.m}
        for k, v in self.exact.items():
            out[k] = float(v)
            out[k + "_exact"] = str(v)
        return out


def constants_for(m: int) -> Constants:
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise InvalidOrderError(f"operator order must be a positive integer, got {m!r}")
    m = int(m)
    fm1 = math.factorial(m - 1)
    f2m1 = math.factorial(2 * m - 1)
    omega = PiMonomial(Fraction(2, fm1), m)
    lam = PiMonomial(Fraction(2 ** (2 * m) * math.factorial(m) * fm1), 0) * omega
    alpha = PiMonomial(Fraction(2 ** (2 * m + 1) * m))
    bm = PiMonomial(Fraction(1, 2) * alpha.coef * fm1, m)
    c0 = PiMonomial(Fraction(fm1, f2m1), m)
    c1 = PiMonomial(c0.coef * (_harmonic(2 * m - 1) - _harmonic(m - 1)), m)
    tm = PiMonomial(alpha.coef * f2m1 / 2 ** (2 * m))
    exact = {
        "omega2m": omega,
        "Lambda2m": lam,
        "alpha2m": alpha,
        "bm": bm,
        "c0": c0,
        "c1": c1,
        "tm": tm,
    }
    return Constants(m, **{k: float(v) for k, v in exact.items()}, exact=exact)


def printed_constants(m: int) -> dict:
    """The alternative literal amplitude and c1 formulas, kept for comparison only.

    They agree with ``constants_for`` at m = 1 (both) and m = 2 (amplitude)
    and differ elsewhere; tests document the disagreement against quadrature.
    """
    fm1 = math.factorial(m - 1)
    return {
        "alpha2m": float(2 ** (2 * m + 1) * m * fm1),
        "c1": math.pi**m * fm1 / (m * math.factorial(2 * m - 1)),
    }


def appendix_integral_oracle(m: int, which: str, tol: float = 1e-11) -> tuple[float, float]:
    """Radial quadrature of the bubble integrals c0, c1 over R^{2m}.

    ``which="c0"`` integrates (1+r^2)^{-2m}, ``which="c1"`` adds the factor
    log(1+r^2). The substitution r = tan t maps the half line to [0, pi/2].
    Returns ``(value, error_estimate)``.
    """
    if m < 1:
        raise InvalidOrderError(f"m must be >= 1, got {m}")
    if m > 4:
        raise ConfigError("integral oracle limited to m <= 4")
    if which not in ("c0", "c1"):
        raise ConfigError(f"unknown integral {which!r}")
    omega = 2 * math.pi**m / math.factorial(m - 1)
    p = 2 * m - 1

    def integrand(t):
        s, c = math.sin(t), math.cos(t)
        base = (s * c) ** p
        if which == "c1":
            if c <= 0.0:
                return 0.0
            return base * (-2.0 * math.log(c))
        return base

    val, err = integrate.quad(integrand, 0.0, math.pi / 2, epsabs=0.0, epsrel=1e-13, limit=200)
    val *= omega
    err *= omega
    if err > tol * max(1.0, abs(val)):
        raise ToleranceError(f"radial quadrature for {which} did not converge", achieved=err)
    return val, err


def rho_from_eps(m: int, eps: float) -> float:
    """rho with rho^{2m} = alpha (2m-1)! eps^{2m} / (1+eps^2)^{2m}."""
    c = constants_for(m)
    r2m = c.alpha2m * math.factorial(2 * m - 1) * eps ** (2 * m) / (1 + eps**2) ** (2 * m)
    return r2m ** (1.0 / (2 * m))


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def abs_log(eps: float) -> float:
    return math.log(1.0 / eps)


# ---------------------------------------------------------------------------
# grid fields


FRAMES = ("physical", "expanded")


@dataclass(frozen=True)
class GridField:
    """Samples on a uniform 2-D grid; node (i, j) sits at origin + h*(i, j).

    ``mask`` marks nodes inside the open domain. Values outside the mask are
    kept finite (boundary data or zero) but ignored by the norms.
    """

    values: np.ndarray
    spacing: float
    origin: tuple = (0.0, 0.0)
    frame: str = "physical"
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.frame not in FRAMES:
            raise ConfigError(f"unknown frame {self.frame!r}")
        if self.spacing <= 0:
            raise ConfigError("grid spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise ConfigError("grid field contains non-finite values")
        if self.mask is None:
            object.__setattr__(self, "mask", np.ones(v.shape, dtype=bool))
        else:
            mk = np.asarray(self.mask, dtype=bool)
            if mk.shape != v.shape:
                raise ConfigError("mask shape differs from values shape")
            object.__setattr__(self, "mask", mk)

    @property
    def shape(self):
        return self.values.shape

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        x = self.origin[0] + self.spacing * np.arange(nx)
        y = self.origin[1] + self.spacing * np.arange(ny)
        return np.meshgrid(x, y, indexing="ij")

    def with_values(self, values) -> "GridField":
        return replace(self, values=np.asarray(values, dtype=float))

    def __add__(self, other: "GridField") -> "GridField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        return self.with_values(self.values - other.values)

    def scale(self, lam: float) -> "GridField":
        return self.with_values(lam * self.values)

    def rescaled(self, factor: float, frame: str) -> "GridField":
        """Same samples on coordinates multiplied by ``factor``."""
        return replace(
            self,
            spacing=self.spacing * factor,
            origin=(self.origin[0] * factor, self.origin[1] * factor),
            frame=frame,
        )

    def sup(self) -> float:
        return float(np.max(np.abs(self.values[self.mask]))) if self.mask.any() else 0.0

    def integral(self) -> float:
        """Node-sum quadrature over masked nodes."""
        return float(self.values[self.mask].sum() * self.spacing**2)

    # -- finite differences ------------------------------------------------
    def derivative(self, alpha: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        """Centered second-order difference D^alpha and the mask where it is valid.

        Even orders use repeated three-point second differences, an odd order
        adds one centered first difference. Each application shrinks the
        validity mask by one node.
        """
        f = self.values
        valid = self.mask.copy()
        h = self.spacing
        for axis, order in enumerate(alpha):
            for _ in range(order // 2):
                f, valid = _second_diff(f, valid, axis, h)
            if order % 2:
                f, valid = _first_diff(f, valid, axis, h)
        return f, valid

    # -- serialization -----------------------------------------------------
    def header(self) -> dict:
        nx, ny = self.shape
        return {
            "nx": nx,
            "ny": ny,
            "h": self.spacing,
            "x0": self.origin[0],
            "y0": self.origin[1],
            "frame": self.frame,
        }

    def to_csv(self, path) -> None:
        hd = self.header()
        nx, ny = self.shape
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        with open(path, "w", newline="") as fh:
            fh.write(",".join(hd) + "\n")
            fh.write(",".join(_fmt(v) for v in hd.values()) + "\n")
            fh.write("i,j,value,inside\n")
            for i, j, v, mk in zip(ii.ravel(), jj.ravel(), self.values.ravel(), self.mask.ravel()):
                fh.write(f"{i},{j},{_fmt(v)},{int(mk)}\n")

    @classmethod
    def from_csv(cls, path) -> "GridField":
        with open(path) as fh:
            keys = fh.readline().strip().split(",")
            vals = fh.readline().strip().split(",")
            fh.readline()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        hd = dict(zip(keys, vals))
        nx, ny = int(hd["nx"]), int(hd["ny"])
        values = np.zeros((nx, ny))
        mask = np.zeros((nx, ny), dtype=bool)
        ii = data[:, 0].astype(int)
        jj = data[:, 1].astype(int)
        values[ii, jj] = data[:, 2]
        mask[ii, jj] = data[:, 3] > 0
        return cls(values, float(hd["h"]), (float(hd["x0"]), float(hd["y0"])), hd["frame"], mask)

    def to_binary(self, path) -> None:
        hd = json.dumps(self.header(), sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(hd + b"\n")
            fh.write(self.values.astype("<f8").tobytes(order="C"))
            fh.write(self.mask.astype(np.uint8).tobytes(order="C"))

    @classmethod
    def from_binary(cls, path) -> "GridField":
        raw = Path(path).read_bytes()
        nl = raw.index(b"\n")
        hd = json.loads(raw[:nl])
        nx, ny = hd["nx"], hd["ny"]
        n = nx * ny
        body = raw[nl + 1 :]
        values = np.frombuffer(body[: 8 * n], dtype="<f8").reshape(nx, ny).copy()
        mask = np.frombuffer(body[8 * n : 9 * n], dtype=np.uint8).reshape(nx, ny).astype(bool)
        return cls(values, hd["h"], (hd["x0"], hd["y0"]), hd["frame"], mask)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def round_sig(x: float, digits: int = 12) -> float:
    """Round to ``digits`` significant digits (used for deterministic outputs)."""
    if x == 0 or not math.isfinite(x):
        return float(x)
    return float(f"{x:.{digits}g}")


def _shift_valid(valid, axis):
    out = np.zeros_like(valid)
    sl_c = [slice(None)] * 2
    sl_p = [slice(None)] * 2
    sl_m = [slice(None)] * 2
    sl_c[axis] = slice(1, -1)
    sl_p[axis] = slice(2, None)
    sl_m[axis] = slice(None, -2)
    out[tuple(sl_c)] = valid[tuple(sl_c)] & valid[tuple(sl_p)] & valid[tuple(sl_m)]
    return out, tuple(sl_c), tuple(sl_p), tuple(sl_m)


def _second_diff(f, valid, axis, h):
    out_valid, c, p, m = _shift_valid(valid, axis)
    g = np.zeros_like(f)
    g[c] = (f[p] - 2.0 * f[c] + f[m]) / h**2
    return g, out_valid


def _first_diff(f, valid, axis, h):
    out_valid, c, p, m = _shift_valid(valid, axis)
    g = np.zeros_like(f)
    g[c] = (f[p] - f[m]) / (2.0 * h)
    return g, out_valid


def five_point_laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """Interior 5-point Laplacian; the outer ring of the result is zero."""
    g = np.zeros_like(f)
    g[1:-1, 1:-1] = (
        f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2] - 4.0 * f[1:-1, 1:-1]
    ) / h**2
    return g


# ---------------------------------------------------------------------------
# weighted norms


def _distances(f: GridField, xi_prime) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(xi_prime, dtype=float))
    if pts.size == 0:
        raise ConfigError("weighted norms need at least one concentration point")
    X, Y = f.coords()
    return np.sqrt((X[None] - pts[:, 0, None, None]) ** 2 + (Y[None] - pts[:, 1, None, None]) ** 2)


def star_weight(f: GridField, xi_prime, m: int, eps: float) -> np.ndarray:
    r = _distances(f, xi_prime)
    return np.sum((1.0 + r) ** (-(4 * m - 1)), axis=0) + eps ** (2 * m)


def star_norm(f: GridField, xi_prime, m: int, eps: float) -> float:
    """sup |f| / (sum_i (1+|y-xi'_i|)^{-(4m-1)} + eps^{2m}) over masked nodes."""
    if len(np.atleast_2d(xi_prime)) == 0 or np.asarray(xi_prime).size == 0:
        raise ConfigError("weighted norms need at least one concentration point")
    w = star_weight(f, xi_prime, m, eps)
    q = np.abs(f.values) / w
    return float(np.max(q[f.mask])) if f.mask.any() else 0.0


def _multi_indices(order: int):
    return [(a, order - a) for a in range(order + 1)]


def starstar_norm(f: GridField, xi_prime, m: int) -> float:
    """Discrete surrogate of the double-star norm.

    Interior part: max over |alpha| <= 2m of sup |D^alpha f| on r_i < 2.
    Exterior part: sum over |alpha| <= 2m-1 of sup r_i^{|alpha|} |D^alpha f|
    on r_i >= 2. Both parts are summed over bubbles. The alpha = 0 exterior
    term is included, so f == 1 has norm 2k.
    """
    r = _distances(f, xi_prime)
    derivs = {}
    for order in range(2 * m + 1):
        for alpha in _multi_indices(order):
            derivs[alpha] = f.derivative(alpha)
    total = 0.0
    for ri in r:
        inner = ri < 2.0
        inner_sup = 0.0
        seen = False
        for alpha, (d, valid) in derivs.items():
            sel = inner & valid
            if sel.any():
                seen = True
                inner_sup = max(inner_sup, float(np.max(np.abs(d[sel]))))
        if not seen:
            raise ResolutionError("grid too coarse for difference stencils near a bubble")
        outer = ~inner
        outer_sum = 0.0
        for alpha, (d, valid) in derivs.items():
            if sum(alpha) > 2 * m - 1:
                continue
            sel = outer & valid
            if sel.any():
                outer_sum += float(np.max(ri[sel] ** sum(alpha) * np.abs(d[sel])))
        total += inner_sup + outer_sum
    return total


def discrete_flux(func, center, h: float, half_cells: int) -> float:
    """Outward flux of -grad(func) through a square of nodes around ``center``.

    Uses one-sided node differences across the square's boundary edges, which
    is the exact summation-by-parts counterpart of the 5-point Laplacian.
    """
    cx, cy = center
    n = half_cells
    idx = np.arange(-n, n + 1)
    total = 0.0
    for side in (-1, 1):
        # edges crossing x = const
        xin = cx + side * n * h
        xout = cx + side * (n + 1) * h
        ys = cy + idx * h
        total -= np.sum(func(np.full_like(ys, xout), ys) - func(np.full_like(ys, xin), ys))
        # edges crossing y = const
        yin = cy + side * n * h
        yout = cy + side * (n + 1) * h
        xs = cx + idx * h
        total -= np.sum(func(xs, np.full_like(xs, yout)) - func(xs, np.full_like(xs, yin)))
    return float(total)

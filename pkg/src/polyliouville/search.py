"""Critical points of phi_k on the admissible set and linking-level checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BoundaryProximityError, ConfigError
from .greens import GreenModel, Grid2D
from .potentials import Potential
from .reduced import PHI_SENTINEL, grad_phi_k, phi_k


class SearchRegion:
    """Configurations of k points with boundary distance and pairwise separation >= 2 delta0.

    A barrier stiffness * (log s)^2 acts in a collar where the slack s of a
    constraint, measured in units of ``collar``, lies in (0, 1). It vanishes
    identically deeper inside, so interior critical points are not moved.
    """

    def __init__(self, green: GreenModel, k: int, delta0: float = 0.05, stiffness: float = 1.0, collar: float | None = None):
        if k < 1:
            raise ConfigError("need at least one point")
        if delta0 <= 0 or stiffness <= 0:
            raise ConfigError("delta0 and stiffness must be positive")
        self.green = green
        self.k = k
        self.dim = 2 * green.m
        self.delta0 = delta0
        self.stiffness = stiffness
        self.collar = collar if collar is not None else 2 * delta0

    @property
    def n(self) -> int:
        return self.k * self.dim

    def points(self, x) -> np.ndarray:
        return np.asarray(x, float).reshape(self.k, self.dim)

    def slacks(self, x) -> np.ndarray:
        p = self.points(x)
        out = []
        for i in range(self.k):
            if not self.green.contains(p[i]):
                out.append(-1.0)
            else:
                out.append((self.green.dist_to_boundary(p[i]) - 2 * self.delta0) / self.collar)
            for j in range(i + 1, self.k):
                out.append((float(np.linalg.norm(p[i] - p[j])) - 2 * self.delta0) / self.collar)
        return np.array(out)

    def inside(self, x) -> bool:
        return bool(np.all(self.slacks(x) > 0))

    def in_collar(self, x) -> bool:
        s = self.slacks(x)
        return bool(np.any(s < 1.0))

    def barrier(self, x) -> float:
        s = self.slacks(x)
        if np.any(s <= 0):
            return math.inf
        act = s[s < 1.0]
        return float(self.stiffness * np.sum(np.log(act) ** 2))

    def barrier_grad(self, x) -> np.ndarray:
        x = np.asarray(x, float).ravel()
        if not self.in_collar(x):
            return np.zeros_like(x)
        step = 1e-7 * self.green.diam
        g = np.zeros_like(x)
        for a in range(x.size):
            e = np.zeros_like(x)
            e[a] = step
            g[a] = (self.barrier(x + e) - self.barrier(x - e)) / (2 * step)
        return g

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        dom = getattr(self.green, "domain", None)
        if dom is not None and hasattr(dom, "bbox"):
            x0, x1, y0, y1 = dom.bbox()
            lo, hi = np.array([x0, y0]), np.array([x1, y1])
        else:
            lo, hi = -np.ones(self.dim), np.ones(self.dim)
        return np.tile(lo, self.k), np.tile(hi, self.k)

    def sample(self, rng: np.random.Generator, max_tries: int = 100000) -> np.ndarray:
        """Uniform sample of the region away from the collar."""
        lo, hi = self.bbox()
        for _ in range(max_tries):
            x = rng.uniform(lo, hi)
            if self.inside(x) and not self.in_collar(x):
                return x
        raise ConfigError("could not sample the admissible region; delta0 too large?")

    def boundary_samples(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Points on the boundary of the region, by bisection along random rays."""
        out = []
        lo, hi = self.bbox()
        span = float(np.max(hi - lo)) * 2
        while len(out) < n:
            x = self.sample(rng)
            d = rng.normal(size=x.size)
            d /= np.linalg.norm(d)
            a, b = 0.0, span
            if self.inside(x + b * d):
                continue
            for _ in range(60):
                mid = 0.5 * (a + b)
                if self.inside(x + mid * d):
                    a = mid
                else:
                    b = mid
            out.append(x + a * d)
        return np.array(out)

    def to_dict(self) -> dict:
        return {"k": self.k, "delta0": self.delta0, "stiffness": self.stiffness, "collar": self.collar}


@dataclass
class CriticalPoint:
    xi: np.ndarray
    value: float
    grad_norm: float
    type: str
    hessian_eigs: list = field(default_factory=list)
    degenerate: bool = False
    index: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xi"] = np.asarray(self.xi).tolist()
        return d


class Evaluator:
    """phi_k, its gradient and an FD Hessian on a region, with barrier terms."""

    def __init__(self, region: SearchRegion, V: Potential):
        self.region = region
        self.V = V
        self.green = region.green

    def phi(self, x) -> float:
        return phi_k(self.green, self.V, self.region.points(x))

    def f(self, x) -> float:
        b = self.region.barrier(x)
        if not math.isfinite(b):
            return math.inf
        v = self.phi(x)
        if abs(v) >= PHI_SENTINEL:
            return math.inf
        return v + b

    def grad_phi(self, x) -> np.ndarray:
        return grad_phi_k(self.green, self.V, self.region.points(x))

    def grad(self, x) -> np.ndarray:
        return self.grad_phi(x) + self.region.barrier_grad(x)

    def hessian(self, x, step: float | None = None) -> np.ndarray:
        x = np.asarray(x, float).ravel()
        s = step if step is not None else hessian_step(self.green)
        Hm = np.empty((x.size, x.size))
        for a in range(x.size):
            e = np.zeros_like(x)
            e[a] = s
            Hm[:, a] = (self.grad_phi(x + e) - self.grad_phi(x - e)) / (2 * s)
        return 0.5 * (Hm + Hm.T)


def hessian_step(green: GreenModel) -> float:
    return (1e-3 if isinstance(green, Grid2D) else 1e-4) * green.diam


def grad_tolerance(green: GreenModel) -> float:
    return 1e-5 if isinstance(green, Grid2D) else 1e-8


def canonical(xi: np.ndarray) -> np.ndarray:
    """Sort the points lexicographically so relabelings compare equal."""
    xi = np.atleast_2d(xi)
    order = np.lexsort(xi.T[::-1])
    return xi[order]


def _descend(ev: Evaluator, x0: np.ndarray, max_iter: int = 400, gtol_descent: float = 1e-4) -> np.ndarray:
    """Gradient descent with Barzilai-Borwein steps and Armijo backtracking; infeasible trials are rejected."""
    x = np.asarray(x0, float).copy()
    fx = ev.f(x)
    g = ev.grad(x)
    t = 1e-2
    x_prev = g_prev = None
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn < gtol_descent:
            break
        if x_prev is not None:
            dx, dg = x - x_prev, g - g_prev
            denom = float(dx @ dg)
            if denom > 0:
                t = float(dx @ dx) / denom
        t = min(max(t, 1e-8), 1.0)
        while True:
            cand = x - t * g
            fc = ev.f(cand)
            if fc <= fx - 1e-4 * t * gn * gn:
                break
            t *= 0.5
            if t < 1e-14:
                return x
        x_prev, g_prev = x, g
        x, fx = cand, fc
        try:
            g = ev.grad(x)
        except BoundaryProximityError:
            return x
    return x


def _newton_critical(ev: Evaluator, x0, gtol: float, max_iter: int = 30, minimize: bool = True) -> tuple[np.ndarray, float]:
    """Newton on grad phi = 0 with backtracking on |grad|.

    With ``minimize`` the Hessian is replaced by |H| (absolute eigenvalues)
    so steps descend; otherwise plain Newton, which also converges to saddles.
    """
    x = np.asarray(x0, float).copy()
    g = ev.grad(x)
    gn = float(np.linalg.norm(g))
    for _ in range(max_iter):
        if gn < gtol:
            break
        H = ev.hessian(x)
        lam, Q = np.linalg.eigh(H)
        scale = max(float(np.max(np.abs(lam))), 1e-300)
        # pseudo-inverse: directions with negligible curvature are left alone
        keep = np.abs(lam) > 1e-8 * scale
        lam_use = np.abs(lam) if minimize else lam
        coef = np.zeros_like(lam)
        coef[keep] = (Q.T @ g)[keep] / lam_use[keep]
        dx = -Q @ coef
        t = 1.0
        improved = False
        while t > 1e-6:
            cand = x + t * dx
            if ev.region.inside(cand):
                try:
                    gc = ev.grad(cand)
                except BoundaryProximityError:
                    gc = None
                if gc is not None and float(np.linalg.norm(gc)) < gn:
                    x, g, gn = cand, gc, float(np.linalg.norm(gc))
                    improved = True
                    break
            t *= 0.5
        if not improved:
            break
    return x, gn


def classify(ev: Evaluator, x, grad_norm: float | None = None, rel_zero: float = 1e-6) -> CriticalPoint:
    """Signature of the FD Hessian; degenerate when some |eigenvalue| < rel_zero * max|eigenvalue|."""
    x = np.asarray(x, float).ravel()
    if grad_norm is None:
        grad_norm = float(np.linalg.norm(ev.grad_phi(x)))
    lam = np.linalg.eigvalsh(ev.hessian(x))
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    zero = np.abs(lam) < rel_zero * scale
    neg = int(np.sum((lam < 0) & ~zero))
    pos = int(np.sum((lam > 0) & ~zero))
    if neg == 0:
        kind = "min"
    elif pos == 0:
        kind = "max"
    else:
        kind = "saddle"
    return CriticalPoint(
        xi=canonical(ev.region.points(x)),
        value=ev.phi(x),
        grad_norm=grad_norm,
        type=kind,
        hessian_eigs=lam.tolist(),
        degenerate=bool(zero.any()),
        index=neg,
        converged=grad_norm < grad_tolerance(ev.green),
    )


def find_minimum(
    region: SearchRegion,
    V: Potential,
    seeds=None,
    n_starts: int = 32,
    seed: int = 0,
    gtol: float | None = None,
) -> CriticalPoint:
    """Multistart descent plus Newton polish; best interior result by value, then lexicographic xi.

    If every run ends in the barrier collar the result has type
    ``boundary-rejected`` and carries the lowest value seen.
    """
    ev = Evaluator(region, V)
    gtol = gtol if gtol is not None else grad_tolerance(region.green)
    rng = np.random.default_rng(seed)
    starts = [np.asarray(s, float).ravel() for s in (seeds or [])]
    for s in starts:
        if not region.inside(s):
            raise ConfigError("seed outside the admissible region")
    while len(starts) < max(n_starts, 1):
        starts.append(region.sample(rng))
    accepted = []
    rejected = []
    for x0 in starts:
        x = _descend(ev, x0)
        if region.in_collar(x):
            rejected.append(x)
            continue
        x, gn = _newton_critical(ev, x, gtol, minimize=True)
        if region.in_collar(x) or gn >= gtol:
            rejected.append(x)
            continue
        accepted.append((ev.phi(x), canonical(region.points(x)), x, gn))
    if not accepted:
        best = min(rejected, key=lambda z: ev.phi(z))
        try:
            gn = float(np.linalg.norm(ev.grad_phi(best)))
        except (BoundaryProximityError, ConfigError):
            gn = math.nan
        return CriticalPoint(canonical(region.points(best)), ev.phi(best), gn, "boundary-rejected", converged=False)
    accepted.sort(key=lambda t: (round(t[0], 10), tuple(t[1].ravel())))
    val, xi, x, gn = accepted[0]
    cp = classify(ev, x, gn)
    return cp


def find_critical(region: SearchRegion, V: Potential, x0, gtol: float | None = None) -> CriticalPoint:
    """Newton on grad phi_k from ``x0`` without a descent bias (finds saddles)."""
    ev = Evaluator(region, V)
    gtol = gtol if gtol is not None else grad_tolerance(region.green)
    x, gn = _newton_critical(ev, np.asarray(x0, float).ravel(), gtol, minimize=False)
    if region.in_collar(x):
        return CriticalPoint(canonical(region.points(x)), ev.phi(x), gn, "boundary-rejected", converged=False)
    return classify(ev, x, gn)


# ---------------------------------------------------------------------------
# linking levels


@dataclass
class LinkingReport:
    status: str
    level: float
    sup_B0: float
    inf_boundary: float
    iterations: int
    gap: float
    path: list = field(default_factory=list)
    saddle: dict | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _reparametrize(path: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return path
    target = np.linspace(0.0, s[-1], len(path))
    return np.column_stack([np.interp(target, s, path[:, a]) for a in range(path.shape[1])])


def string_relaxation(ev: Evaluator, path, max_iter: int = 2000, dt: float | None = None, tol: float = 1e-9):
    """Simplified string method: move interior images down the gradient, then redistribute by arc length.

    Returns (path, levels, iterations, converged, hit_collar). The maximum of
    the relaxed string is an upper bound for the min-max level over paths
    homotopic to the initial one.
    """
    path = np.array(path, float)
    if dt is None:
        dt = 1e-3 * ev.green.diam**2
    hit = False
    level_prev = math.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        new = path.copy()
        for i in range(1, len(path) - 1):
            g = ev.grad(path[i])
            step = dt * g
            nrm = float(np.linalg.norm(step))
            cap = 0.02 * ev.green.diam
            if nrm > cap:
                step *= cap / nrm
            cand = path[i] - step
            if ev.region.inside(cand):
                new[i] = cand
            if ev.region.in_collar(new[i]):
                hit = True
        path = _reparametrize(new)
        levels = np.array([ev.phi(p) for p in path])
        level = float(np.max(levels))
        if abs(level_prev - level) < tol * max(1.0, abs(level)):
            converged = True
            break
        level_prev = level
    levels = np.array([ev.phi(p) for p in path])
    return path, levels, it, converged, hit


def straight_path(a, b, n: int = 33) -> np.ndarray:
    a, b = np.asarray(a, float).ravel(), np.asarray(b, float).ravel()
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) * a + t * b


def check_linking_level(
    region: SearchRegion,
    V: Potential,
    B=None,
    mode: str = "mountain-pass",
    n_boundary: int = 64,
    seed: int = 0,
    tol: float = 1e-6,
    max_iter: int = 2000,
) -> LinkingReport:
    """Estimate the critical level C and check sup_{B0} phi < C plus the boundary condition.

    ``mode='min'``: B = B0 = boundary of the region, C = the interior minimum;
    holds when C < inf over boundary samples.
    ``mode='mountain-pass'``: B is a path (array of configurations) whose end
    points form B0; C is the maximum along the relaxed string.
    """
    ev = Evaluator(region, V)
    rng = np.random.default_rng(seed)
    bsamples = region.boundary_samples(n_boundary, rng)
    bvals = np.array([ev.phi(p) for p in bsamples])
    inf_b = float(np.min(bvals))
    notes = ["boundary condition checked on samples only; no certified transversality"]
    if mode == "min":
        cp = find_minimum(region, V, seed=seed, n_starts=8)
        if cp.type == "boundary-rejected":
            return LinkingReport("boundary-hit", cp.value, inf_b, inf_b, 0, math.nan, notes=notes, saddle=cp.to_dict())
        C = cp.value
        status = "holds" if C < inf_b - tol else "fails"
        return LinkingReport(status, C, inf_b, inf_b, 0, inf_b - C, saddle=cp.to_dict(), notes=notes)
    if mode != "mountain-pass":
        raise ConfigError(f"unknown linking mode {mode!r}")
    if B is None:
        raise ConfigError("mountain-pass mode needs an initial path B")
    path, levels, its, conv, hit = string_relaxation(ev, B, max_iter=max_iter)
    C = float(np.max(levels))
    sup_B0 = float(max(levels[0], levels[-1]))
    imax = int(np.argmax(levels))
    saddle = None
    if 0 < imax < len(path) - 1:
        cp = find_critical(region, V, path[imax])
        saddle = cp.to_dict()
    # boundary surrogate: boundary samples at level C must have a tangential gradient
    near = np.abs(bvals - C) < 10 * tol
    for p in bsamples[near]:
        if float(np.linalg.norm(ev.grad_phi(p))) < tol:
            notes.append("boundary sample at the critical level with vanishing gradient")
            return LinkingReport("fails", C, sup_B0, inf_b, its, C - sup_B0, path.tolist(), saddle, notes)
    if hit:
        status = "boundary-hit"
    elif not conv:
        status = "inconclusive"
    elif sup_B0 < C - tol:
        status = "holds"
    else:
        status = "fails"
    return LinkingReport(status, C, sup_B0, inf_b, its, C - sup_B0, path.tolist(), saddle, notes)


# ---------------------------------------------------------------------------
# reports


def write_critical_json(points, path) -> None:
    with open(path, "w") as fh:
        json.dump([p.to_dict() for p in points], fh, indent=2, sort_keys=True)


def write_path_csv(path_points, values, path, digits: int = 12) -> None:
    path_points = np.asarray(path_points, float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["index"] + [f"x{a}" for a in range(path_points.shape[1])] + ["phi"])
        for i, (p, v) in enumerate(zip(path_points, values)):
            w.writerow([i] + [f"{c:.{digits}g}" for c in p] + [f"{v:.{digits}g}"])

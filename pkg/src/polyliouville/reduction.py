"""Intermediate nonlinear problem, the reduced energy F_eps and the full construction.

Everything numeric here is planar (m = 1). The physical grid has nodes at
integer multiples of h = eps * h_y; the expanded frame is the same grid
rescaled by 1/eps, so moving between frames involves no interpolation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bubbles import (
    Ansatz,
    Operators,
    build_ansatz,
    default_cutoff_radius,
    make_config,
    residual_and_operators,
)
from .core import GridField, abs_log, constants_for, fit_loglog_slope, star_norm, starstar_norm
from .errors import (
    ConfigError,
    ContractionError,
    MultiplierError,
    NoCriticalPointError,
)
from .geometry import Disc, PlanarGrid
from .greens import GreenModel, Grid2D
from .linearized import KernelBasis, ProjectedSolver, assemble_linearized
from .potentials import Potential
from .reduced import energy

log = logging.getLogger(__name__)


@dataclass
class IntermediateSolution:
    phi: np.ndarray
    c: np.ndarray
    iterations: int
    history: list
    linear_residual: float


@dataclass
class ReductionResult:
    xi: np.ndarray
    eps: float
    phi: GridField
    c: np.ndarray
    iterations: int
    phi_norms: tuple
    u_final: GridField
    mass: float
    F_eps: float | None
    theta: float | None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        d = {
            "xi": self.xi.tolist(),
            "eps": self.eps,
            "c": self.c.tolist(),
            "max_abs_c": float(np.max(np.abs(self.c))),
            "iterations": self.iterations,
            "phi_sup": self.phi_norms[0],
            "phi_starstar": self.phi_norms[1],
            "mass": self.mass,
            "F_eps": self.F_eps,
            "theta": self.theta,
        }
        d.update(self.diagnostics)
        return d


# ---------------------------------------------------------------------------
# problem setup


def physical_domain(green: GreenModel):
    if green.m != 1:
        raise ConfigError("numeric reduction is implemented for m = 1")
    dom = getattr(green, "domain", None)
    return Disc() if dom is None else dom


H_Y_REF = 0.125
EPS_REF = 0.05


def default_h_y(eps: float) -> float:
    """Expanded-frame spacing h_y = 0.125 sqrt(eps / 0.05).

    The five-point error on the bubble core is about 0.35 h_y^2 |log eps| in
    sup norm, so this keeps it proportional to eps |log eps|.
    """
    return H_Y_REF * math.sqrt(eps / EPS_REF)


@dataclass
class ReductionProblem:
    """Ansatz, expanded-frame operators and the factored projected solver at one (xi, eps)."""

    green: GreenModel
    V: Potential
    xi: np.ndarray
    eps: float
    h_y: float | None = None
    delta0: float = 0.05
    R0: float | None = None

    def __post_init__(self):
        self.xi = np.atleast_2d(np.asarray(self.xi, float))
        if self.h_y is None:
            self.h_y = default_h_y(self.eps)
        if self.green.m != 1:
            raise ConfigError("numeric reduction is implemented for m = 1")
        self.grid = PlanarGrid(physical_domain(self.green), self.eps * self.h_y)
        self.config = make_config(self.green, self.V, self.xi, self.eps, self.delta0)
        self.ansatz: Ansatz = build_ansatz(self.config, self.green, self.V, self.grid)
        self.ops: Operators = residual_and_operators(self.ansatz, self.grid)
        R0 = self.R0 if self.R0 is not None else default_cutoff_radius(self.green, self.xi, self.eps)
        if R0 <= 1.0:
            raise ConfigError(f"eps too large for the cutoff to fit (R0 = {R0:.3g})")
        self.basis = KernelBasis(self.config.xi_prime, self.config.mu, 1, R0)
        self.L = assemble_linearized(self.ops)
        self.solver = ProjectedSolver(self.L, self.ops.grid, self.basis, self.eps)


@dataclass
class ResidualRow:
    eps: float
    R_star: float
    R_exact_star: float
    mass_ratio: float
    h: float


def residual_sweep(green: GreenModel, V: Potential, xi, eps_list, h_y: float | None = None, delta0: float = 0.05):
    """Weighted norm of the ansatz error R over an eps sweep, and the log-log slope of the analytic one.

    ``R_star`` uses the grid Laplacian of W, ``R_exact_star`` the analytic
    (-Lap) U; the latter is free of discretization error and carries the slope.
    """
    xi = np.atleast_2d(np.asarray(xi, float))
    rows = []
    for eps in eps_list:
        hy = default_h_y(eps) if h_y is None else h_y
        grid = PlanarGrid(physical_domain(green), eps * hy)
        cfg = make_config(green, V, xi, eps, delta0)
        ops = residual_and_operators(build_ansatz(cfg, green, V, grid), grid)
        lam = constants_for(1).Lambda2m
        rows.append(ResidualRow(eps, ops.star(ops.R), ops.star(ops.R_exact), ops.mass() / (len(xi) * lam), grid.h))
    slope = None
    vals = [r.R_exact_star for r in rows]
    if len(rows) >= 2 and all(v > 0 for v in vals):
        slope = fit_loglog_slope([r.eps for r in rows], vals)
    return rows, slope


def solve_intermediate(
    problem: ReductionProblem,
    R=None,
    rtol: float = 1e-10,
    max_iter: int = 50,
    ball_const: float = 10.0,
    max_polish: int = 6,
) -> IntermediateSolution:
    """Fixed point phi <- Q(N(phi) - R), Q the projected inverse of L.

    Converged when the step is below ``rtol`` relative to the iterate. The
    iteration then continues while the step keeps shrinking (at most
    ``max_polish`` extra steps) so the returned phi sits at round-off level;
    ``iterations`` counts only the steps needed to reach ``rtol``.

    The first iterate must satisfy ||phi||_** <= ball_const * eps |log eps|,
    otherwise eps is too large for the contraction argument to apply. Three
    consecutive growing steps raise ContractionError.
    """
    ops = problem.ops
    R = ops.R if R is None else np.asarray(R, float)
    eps = problem.eps
    phi = np.zeros_like(R)
    history = []
    grow = 0
    prev_change = None
    sol = None
    converged_at = None
    for it in range(1, max_iter + max_polish + 1):
        sol = problem.solver.solve(ops.N(phi) - R)
        new = _interior(sol.phi, ops.grid)
        nrm = float(np.max(np.abs(new)))
        if it == 1:
            bound = ball_const * eps * abs_log(eps)
            if sol.starstar_norm > bound:
                raise ContractionError(
                    f"first iterate ||phi||_** = {sol.starstar_norm:.3e} exceeds {bound:.3e}; eps too large"
                )
        change = float(np.max(np.abs(new - phi)))
        history.append({"iteration": it, "sup": nrm, "change": change})
        if converged_at is not None:
            if change >= 0.5 * prev_change or it - converged_at > max_polish:
                break
            phi = new
            prev_change = change
            continue
        if prev_change is not None and change > prev_change:
            grow += 1
            if grow >= 3:
                raise ContractionError("fixed-point steps grew for 3 consecutive iterations")
        else:
            grow = 0
        prev_change = change
        phi = new
        if change <= rtol * max(nrm, 1e-300) or nrm == 0.0:
            converged_at = it
            if nrm == 0.0:
                break
        elif it >= max_iter:
            raise ContractionError(f"no convergence in {max_iter} iterations (last step {change:.3e})")
    return IntermediateSolution(phi, sol.c, converged_at, history, sol.linear_residual)


def _interior(f: GridField, grid: PlanarGrid) -> np.ndarray:
    return f.values.ravel()[grid.interior]


def theta_correction(ops: Operators, phi) -> float:
    """J[U + phi] - J[U] on the grid: sum h^2 [R phi + phi(-Lap_h phi)/2 - T(e^phi - 1 - phi)]."""
    phi = np.asarray(phi, float)
    A = ops.grid.A
    h2 = ops.grid.h**2
    return float(h2 * np.sum(ops.R * phi + 0.5 * phi * (A @ phi) - ops.N(phi)))


def reduced_energy_F(problem: ReductionProblem, phi=None, **kw) -> tuple[float, float]:
    """F_eps = J[U] + theta; returns (F_eps, theta)."""
    if phi is None:
        phi = solve_intermediate(problem, **kw).phi
    th = theta_correction(problem.ops, phi)
    return energy(problem.ansatz).value + th, th


# ---------------------------------------------------------------------------
# diagnostics and the full pipeline


def finalize(problem: ReductionProblem, inter: IntermediateSolution, delta: float = 0.25, with_energy: bool = True) -> ReductionResult:
    ops = problem.ops
    grid = ops.grid
    eps = problem.eps
    w = ops.W + inter.phi
    shift = ops.W_boundary
    # physical u = W + phi - 2m log(rho eps), on the physical grid
    u_int = w - shift
    u_field = problem.grid.field(u_int)
    eV = ops.T * np.exp(inter.phi)
    mass = float(eV.sum() * grid.h**2)
    xi_p = problem.config.xi_prime
    # residual of the discrete equation in the unknown phi: R + L phi - N(phi);
    # algebraically equal to -Lap_h(W + phi) - T e^phi
    algebraic = ops.R + problem.L @ inter.phi - ops.N(inter.phi)
    pde_star = star_norm(grid.field(algebraic), xi_p, 1, eps)
    # direct evaluation on W + phi; limited by round-off since |W| ~ 4|log eps|
    direct = grid.neg_laplacian(w, shift) - eV
    direct_star = star_norm(grid.field(direct), xi_p, 1, eps)
    phi_field = grid.field(inter.phi)
    P = problem.grid.interior_points()
    near = np.zeros(len(P), bool)
    for p in problem.xi:
        near |= np.linalg.norm(P - p, axis=1) < delta
    sup_near = float(np.max(u_int[near])) if near.any() else float("nan")
    sup_far = float(np.max(u_int[~near])) if (~near).any() else float("nan")
    lam = constants_for(1).Lambda2m
    k = len(problem.xi)
    F = th = None
    if with_energy:
        th = theta_correction(ops, inter.phi)
        F = energy(problem.ansatz).value + th
    diag = {
        "pde_residual_star": pde_star,
        "pde_residual_direct_star": direct_star,
        "linear_residual_star": inter.linear_residual,
        "mass_ratio": mass / (k * lam),
        "sup_near": sup_near,
        "sup_far": sup_far,
        "contrast_delta": delta,
        "history": inter.history,
        "h": problem.grid.h,
        "R0": problem.basis.R0,
        "mu": problem.config.mu.tolist(),
        "rho": problem.config.rho,
    }
    return ReductionResult(
        xi=problem.xi.copy(),
        eps=eps,
        phi=phi_field,
        c=inter.c,
        iterations=inter.iterations,
        phi_norms=(float(np.max(np.abs(inter.phi))), starstar_norm(phi_field, xi_p, 1)),
        u_final=u_field,
        mass=mass,
        F_eps=F,
        theta=th,
        diagnostics=diag,
    )


def multipliers(green, V, xi, eps, h_y=None, delta0=0.05, R0=None, **kw) -> np.ndarray:
    prob = ReductionProblem(green, V, xi, eps, h_y, delta0, R0)
    return solve_intermediate(prob, **kw).c.ravel()


def solve_multipliers_zero(
    green: GreenModel,
    V: Potential,
    xi0,
    eps: float,
    h_y: float | None = None,
    delta0: float = 0.05,
    R0: float | None = None,
    c_tol: float = 1e-6,
    max_newton: int = 10,
    fd_step: float | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Newton iteration on c(xi) = 0 with a central-difference Jacobian.

    c(xi) vanishing is equivalent to xi being critical for F_eps, so this
    locates the critical point of F_eps near the warm start ``xi0``. Once
    below ``c_tol`` the iteration continues while |c| still drops by half,
    so the multipliers end at round-off level.
    """
    xi = np.atleast_2d(np.asarray(xi0, float)).copy()
    shape = xi.shape
    step = fd_step if fd_step is not None else 1e-4 * green.diam
    if R0 is None:
        R0 = default_cutoff_radius(green, xi, eps)

    def cfun(z):
        return multipliers(green, V, z, eps, h_y, delta0, R0)

    c = cfun(xi)
    it = 0
    for it in range(1, max_newton + 1):
        cmax = float(np.max(np.abs(c)))
        if cmax < 1e-13:
            break
        J = np.empty((c.size, xi.size))
        for q in range(xi.size):
            e = np.zeros(xi.size)
            e[q] = step
            J[:, q] = (cfun((xi.ravel() + e).reshape(shape)) - cfun((xi.ravel() - e).reshape(shape))) / (2 * step)
        dx = np.linalg.lstsq(J, -c, rcond=None)[0]
        t = 1.0
        cand, c_new = xi, c
        while t > 1e-3:
            cand = (xi.ravel() + t * dx).reshape(shape)
            try:
                c_new = cfun(cand)
            except ConfigError:
                t *= 0.5
                continue
            if np.max(np.abs(c_new)) < cmax:
                break
            t *= 0.5
        new_max = float(np.max(np.abs(c_new)))
        log.info("newton %d: max|c| = %.3e", it, new_max)
        if new_max >= cmax:
            break
        xi, c = cand, c_new
        if new_max < c_tol and new_max > 0.5 * cmax:
            break
    if np.max(np.abs(c)) >= c_tol:
        raise MultiplierError(f"multipliers did not vanish (max |c| = {np.max(np.abs(c)):.3e})", c=c)
    return xi, c, it


def construct_solution(
    green: GreenModel,
    V: Potential,
    k: int,
    eps: float,
    seed_xi=None,
    seed: int = 0,
    h_y: float | None = None,
    delta0: float = 0.05,
    c_tol: float | None = None,
    n_starts: int = 32,
    delta: float = 0.25,
) -> ReductionResult:
    """Locate xi*, solve the intermediate problem there and check the multipliers vanish."""
    from .search import SearchRegion, find_minimum

    if green.m != 1:
        raise ConfigError("numeric construction is implemented for m = 1")
    region = SearchRegion(green, k, delta0)
    seeds = None if seed_xi is None else [np.atleast_2d(np.asarray(seed_xi, float))]
    cp = find_minimum(region, V, seeds=seeds, n_starts=n_starts, seed=seed)
    if cp.type == "boundary-rejected":
        raise NoCriticalPointError(
            f"no interior critical point of phi_{k} found (descent left the admissible set; best value {cp.value:.6g})"
        )
    xi0 = cp.xi
    R0 = default_cutoff_radius(green, xi0, eps)
    prob0 = ReductionProblem(green, V, xi0, eps, h_y, delta0, R0)
    inter0 = solve_intermediate(prob0)
    lin = inter0.linear_residual
    tol = c_tol if c_tol is not None else max(1e-6, 10 * lin)
    newton_steps = 0
    if np.max(np.abs(inter0.c)) < 1e-13:
        xi, prob, inter = xi0, prob0, inter0
    else:
        xi, _, newton_steps = solve_multipliers_zero(green, V, xi0, eps, h_y, delta0, R0, c_tol=tol)
        prob = ReductionProblem(green, V, xi, eps, h_y, delta0, R0)
        inter = solve_intermediate(prob)
    if np.max(np.abs(inter.c)) >= tol:
        raise MultiplierError(f"multipliers did not vanish (max |c| = {np.max(np.abs(inter.c)):.3e})", c=inter.c)
    res = finalize(prob, inter, delta)
    res.diagnostics["phi_k_critical_point"] = cp.xi.tolist()
    res.diagnostics["phi_k_value"] = cp.value
    res.diagnostics["c_tolerance"] = tol
    res.diagnostics["newton_steps"] = newton_steps
    return res

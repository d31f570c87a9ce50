"""The reduced functional phi_k, the energy J_rho and its expansion in eps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .bubbles import Ansatz, RadialBallCorrection, build_ansatz, make_config
from .core import abs_log, constants_for, fit_loglog_slope
from .errors import BoundaryProximityError, ConfigError, SignError, ToleranceError
from .geometry import Disc
from .greens import GreenModel, Grid2D
from .potentials import Potential

PHI_SENTINEL = 1e12


def _points(xi, green: GreenModel) -> np.ndarray:
    xi = np.atleast_2d(np.asarray(xi, float))
    if xi.shape[1] != 2 * green.m:
        raise ConfigError(f"points must have {2 * green.m} coordinates")
    return xi


def phi_k_flagged(green: GreenModel, V: Potential, xi) -> tuple[float, bool]:
    """phi_k and a validity flag; invalid values are saturated at +-PHI_SENTINEL.

    Coinciding points give -PHI_SENTINEL (the functional tends to -infinity on
    the diagonal); points outside the domain give +PHI_SENTINEL.
    """
    xi = _points(xi, green)
    k = len(xi)
    for p in xi:
        if not green.contains(p):
            return PHI_SENTINEL, False
    for i in range(k):
        for j in range(i + 1, k):
            if np.linalg.norm(xi[i] - xi[j]) == 0.0:
                return -PHI_SENTINEL, False
    v = V(xi)
    if np.any(v <= 0):
        raise SignError("potential must be positive at the concentration points")
    total = 0.0
    for i in range(k):
        total -= 2.0 * math.log(v[i]) + green.robin(xi[i])
        for j in range(k):
            if j != i:
                total -= green.G(xi[i], xi[j])
    if not math.isfinite(total):
        return (-PHI_SENTINEL if total < 0 else PHI_SENTINEL), False
    return float(np.clip(total, -PHI_SENTINEL, PHI_SENTINEL)), True


def phi_k(green: GreenModel, V: Potential, xi) -> float:
    """-sum_i [2 log V(xi_i) + H(xi_i,xi_i)] - sum_{i != j} G(xi_i, xi_j)."""
    return phi_k_flagged(green, V, xi)[0]


def grad_phi_k(green: GreenModel, V: Potential, xi, margin: float | None = None) -> np.ndarray:
    """Gradient of phi_k, flattened as (xi_1, ..., xi_k)."""
    xi = _points(xi, green)
    k = len(xi)
    margin = (2 * green.grid.h if isinstance(green, Grid2D) else 0.0) if margin is None else margin
    for i in range(k):
        if green.dist_to_boundary(xi[i]) <= margin:
            raise BoundaryProximityError("point too close to the boundary")
        for j in range(i + 1, k):
            if np.linalg.norm(xi[i] - xi[j]) <= max(margin, 1e-12):
                raise BoundaryProximityError("points too close to each other")
    v = V(xi)
    if np.any(v <= 0):
        raise SignError("potential must be positive at the concentration points")
    glogv = V.grad(xi) / v[:, None]
    out = np.zeros_like(xi)
    for i in range(k):
        out[i] = -2.0 * glogv[i] - green.robin_gradient(xi[i])
        for j in range(k):
            if j != i:
                out[i] -= green.grad_x_G(xi[i], xi[j]) + green.grad_xi_G(xi[j], xi[i])
    return out.ravel()


# ---------------------------------------------------------------------------
# energy


@dataclass
class EnergyResult:
    value: float
    error: float
    dirichlet_part: float
    potential_part: float


def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _planar_domain(green: GreenModel):
    dom = getattr(green, "domain", None)
    if dom is None and green.m == 1:
        dom = Disc()
    if dom is None:
        raise ConfigError("energy quadrature needs a planar domain for m = 1")
    return dom


def _energy_planar(ans: Ansatz, n_theta: int, n_v: int) -> tuple[float, float]:
    """m = 1: polar quadrature around each bubble with a smooth partition of unity.

    The Dirichlet term uses (1/2) int U (-Lap U), valid because U vanishes on
    the boundary and (-Lap U) is known in closed form.
    """
    c = ans.config
    dom = _planar_domain(ans.green)
    rho2m = c.rho ** (2 * c.m)
    deltas = c.mu * c.eps
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    gx, gw = _gauss(n_v)
    dir_part = 0.0
    pot_part = 0.0
    for l in range(c.k):
        p = c.xi[l]
        d = deltas[l]
        R = dom.ray_exit(p[0], p[1], dirs[:, 0], dirs[:, 1])
        vmax = np.log1p(R / d)
        v = 0.5 * (gx[None, :] + 1.0) * vmax[:, None]
        wv = 0.5 * gw[None, :] * vmax[:, None]
        r = d * np.expm1(v)
        jac = d * np.exp(v) * r * wv * (2 * np.pi / n_theta)
        X = p[None, None, :] + r[:, :, None] * dirs[:, None, :]
        b = np.stack([1.0 / (deltas[j] ** 2 + np.sum((X - c.xi[j]) ** 2, axis=-1)) ** 2 for j in range(c.k)])
        w = b[l] / b.sum(axis=0)
        U = ans.U(X)
        dir_part += float(np.sum(0.5 * ans.polyharmonic_U(X) * U * w * jac))
        pot_part += float(np.sum(rho2m * ans.V(X) * np.exp(U) * w * jac))
    return dir_part, pot_part


def _energy_radial(ans: Ansatz, n_v: int) -> tuple[float, float]:
    """k = 1 centered bubble on the unit ball of R^{2m}, m even or m = 1."""
    c = ans.config
    m = c.m
    n = 2 * m
    if m % 2 and m > 1:
        raise ConfigError("radial energy implemented for m = 1 and even m")
    corr = ans.corrections[0]
    omega = constants_for(m).omega2m
    d = float(c.mu[0] * c.eps)
    gx, gw = _gauss(n_v)
    vmax = math.log1p(1.0 / d)
    v = 0.5 * (gx + 1.0) * vmax
    r = d * np.expm1(v)
    w = 0.5 * gw * vmax * d * np.exp(v) * r ** (n - 1) * omega
    X = np.zeros((len(r), n))
    X[:, 0] = r
    U = ans.U(X)
    rho2m = c.rho ** (2 * m)
    pot = float(np.sum(rho2m * ans.V(X) * np.exp(U) * w))
    if m == 1:
        # |grad U|^2 with U = u + const
        du = -2.0 * 2 * r / (d * d + r * r)
        dirichlet = 0.5 * float(np.sum(du * du * w))
        return dirichlet, pot
    # |(-Lap)^{m/2} U|^2 for even m: apply the radial Laplacian m/2 times symbolically
    if m != 2:
        raise ConfigError("radial energy implemented up to m = 2")
    lap_u = -2 * m * (2 * n * d * d + (2 * n - 4) * r * r) / (d * d + r * r) ** 2
    if not isinstance(corr, RadialBallCorrection):
        raise ConfigError("radial energy needs the radial ball correction")
    lap_U = lap_u + corr.laplacian(X, n)
    dirichlet = 0.5 * float(np.sum(lap_U**2 * w))
    return dirichlet, pot


def energy(ans: Ansatz, n_theta: int = 96, n_v: int = 96, tol: float = 1e-6) -> EnergyResult:
    """J_rho(U) = 1/2 int |(-Lap)^{m/2} U|^2 - rho^{2m} int V e^U.

    The error estimate is the change under doubling both quadrature sizes.
    """
    c = ans.config
    if c.m == 1:
        coarse = _energy_planar(ans, n_theta, n_v)
        fine = _energy_planar(ans, 2 * n_theta, 2 * n_v)
    else:
        if c.k != 1 or np.any(c.xi != 0):
            raise ConfigError("energy for m >= 2 is limited to one centered bubble")
        coarse = _energy_radial(ans, n_v)
        fine = _energy_radial(ans, 2 * n_v)
    val = fine[0] - fine[1]
    err = abs(val - (coarse[0] - coarse[1]))
    if err > tol * max(1.0, abs(val)):
        raise ToleranceError("energy quadrature did not converge", achieved=err)
    return EnergyResult(val, err, fine[0], fine[1])


# ---------------------------------------------------------------------------
# expansion check


@dataclass
class ReducedReport:
    eps: float
    phi_k: float
    grad_phi_k: list
    J_rho: float
    expansion_residual: float
    expansion_residual_printed: float
    quadrature_error: float


def expansion_prediction(m: int, k: int, phi: float, eps: float, printed: bool = False) -> float:
    """b_m phi_k + 4m b_m k |log eps| + k * offset.

    The offset is -2 b_m (1 + m c1/c0); ``printed=True`` uses -4 b_m instead,
    which coincides for m = 1.
    """
    c = constants_for(m)
    off = -4.0 * c.bm if printed else c.energy_offset_per_bubble
    return c.bm * phi + 4 * m * c.bm * k * abs_log(eps) + k * off


def expansion_check(green: GreenModel, V: Potential, xi, eps_list, delta0: float = 0.05, **quad):
    """Energy of the ansatz against its predicted expansion over an eps sweep."""
    xi = _points(xi, green)
    ph = phi_k(green, V, xi)
    try:
        gph = grad_phi_k(green, V, xi).tolist()
    except (BoundaryProximityError, ConfigError):
        gph = []
    reports = []
    for eps in eps_list:
        cfg = make_config(green, V, xi, eps, delta0)
        ans = build_ansatz(cfg, green, V)
        e = energy(ans, **quad)
        pred = expansion_prediction(green.m, len(xi), ph, eps)
        pred_p = expansion_prediction(green.m, len(xi), ph, eps, printed=True)
        reports.append(ReducedReport(eps, ph, gph, e.value, e.value - pred, e.value - pred_p, e.error))
    slope = None
    if len(reports) >= 2:
        res = [abs(r.expansion_residual) for r in reports]
        if all(x > 0 for x in res):
            slope = fit_loglog_slope([r.eps for r in reports], res)
    return reports, slope


def write_reports(reports, slope, csv_path, json_path, digits: int = 12) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["eps", "J", "phi_k", "residual", "residual_printed", "quad_err", "slope"])
        for r in reports:
            w.writerow(
                [
                    f"{r.eps:.{digits}g}",
                    f"{r.J_rho:.{digits}g}",
                    f"{r.phi_k:.{digits}g}",
                    f"{r.expansion_residual:.{digits}g}",
                    f"{r.expansion_residual_printed:.{digits}g}",
                    f"{r.quadrature_error:.{digits}g}",
                    "" if slope is None else f"{slope:.{digits}g}",
                ]
            )
    with open(json_path, "w") as fh:
        json.dump({"reports": [asdict(r) for r in reports], "slope": slope}, fh, indent=2, sort_keys=True)

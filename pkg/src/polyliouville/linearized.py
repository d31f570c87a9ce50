"""Kernel of the linearized bubble operator, the projected linear solve and
spectral checks on the sphere."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bubbles import Operators
from .core import GridField, constants_for, star_norm, starstar_norm
from .errors import ConfigError, ConditioningError, RankDeficiencyError, SolveError
from .geometry import PlanarGrid


def quintic_ramp(t) -> np.ndarray:
    """1 for t <= 0, 0 for t >= 1, C^2 in between."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass
class KernelBasis:
    """Dilation mode Y_0 and translation modes Y_j for each bubble, in the expanded frame."""

    centers: np.ndarray
    mu: np.ndarray
    m: int = 1
    R0: float = 10.0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, float))
        self.mu = np.atleast_1d(np.asarray(self.mu, float))
        if self.centers.shape[1] != 2 * self.m or len(self.mu) != len(self.centers):
            raise ConfigError("kernel basis needs one height per 2m-dimensional center")
        if self.R0 <= 0:
            raise ConfigError("cutoff radius must be positive")

    @property
    def k(self) -> int:
        return len(self.centers)

    def _check(self, i: int, j: int) -> None:
        if not 0 <= i < self.k:
            raise IndexError(f"bubble index {i} out of range")
        if not 0 <= j <= 2 * self.m:
            raise IndexError(f"mode index {j} out of range 0..{2 * self.m}")

    def local(self, i: int, j: int, z) -> np.ndarray:
        """Mode j of bubble i at offsets z from its center."""
        self._check(i, j)
        z = np.asarray(z, float)
        mu2 = self.mu[i] ** 2
        r2 = np.sum(z * z, axis=-1)
        if j == 0:
            return (r2 - mu2) / (mu2 + r2)
        return 4 * self.m * z[..., j - 1] / (mu2 + r2)

    def Z(self, i: int, j: int, y) -> np.ndarray:
        return self.local(i, j, np.asarray(y, float) - self.centers[i])

    def chi(self, i: int, y) -> np.ndarray:
        r = np.linalg.norm(np.asarray(y, float) - self.centers[i], axis=-1)
        return quintic_ramp(r - self.R0)

    def translation_columns(self, points) -> np.ndarray:
        """chi_i Z_ij at ``points`` for j = 1..2m, ordered (i, j)."""
        cols = []
        for i in range(self.k):
            c = self.chi(i, points)
            for j in range(1, 2 * self.m + 1):
                cols.append(c * self.Z(i, j, points))
        return np.column_stack(cols)


def kernel_eval(basis: KernelBasis, i: int, j: int, z) -> float:
    return float(basis.local(i, j, np.asarray(z, float)))


def assemble_linearized(ops: Operators) -> sp.csr_matrix:
    """L = -Lap_h - T on interior unknowns of the expanded grid (Dirichlet rows eliminated)."""
    if ops.m != 1:
        raise ConfigError("linearized assembly is implemented for m = 1")
    return (ops.grid.A - sp.diags(ops.T)).tocsr()


@dataclass
class ProjectedSolveResult:
    phi: GridField
    c: np.ndarray
    starstar_norm: float
    linear_residual: float
    orthogonality: float


class ProjectedSolver:
    """Factors [L, -B; B^T, 0] once, B = columns chi_i Z_ij, and solves for many right sides.

    Solutions satisfy L phi = h + sum c_ij chi_i Z_ij with sum chi_i Z_ij phi = 0.
    """

    def __init__(self, L, grid: PlanarGrid, basis: KernelBasis, eps: float, cond_limit: float = 1e12):
        self.L = sp.csr_matrix(L)
        self.grid = grid
        self.basis = basis
        self.eps = eps
        n = L.shape[0]
        pts = grid.interior_points()
        B = basis.translation_columns(pts)
        gram = B.T @ B
        ev = np.linalg.eigvalsh(gram)
        if ev[0] <= 0 or ev[-1] / ev[0] > cond_limit:
            raise RankDeficiencyError(
                f"constraint columns are nearly dependent (eigenvalues {ev[0]:.3e}..{ev[-1]:.3e})"
            )
        # scale constraint rows so all blocks are O(1)
        self._scale = 1.0 / np.sqrt(np.diag(gram))
        Bs = B * self._scale
        self.B = B
        Bsp = sp.csr_matrix(Bs)
        K = sp.bmat([[self.L, -Bsp], [Bsp.T, None]], format="csc")
        try:
            self._lu = spla.splu(K)
        except RuntimeError as exc:
            raise ConditioningError(f"augmented system is singular: {exc}") from exc
        self.n = n

    def solve(self, h_vals) -> ProjectedSolveResult:
        h_vals = np.asarray(h_vals, float)
        if h_vals.shape != (self.n,) or not np.all(np.isfinite(h_vals)):
            raise SolveError("right-hand side must be finite and match the grid")
        rhs = np.concatenate([h_vals, np.zeros(self.B.shape[1])])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolveError("augmented solve produced non-finite values")
        phi = sol[: self.n]
        c = sol[self.n :] * self._scale
        resid_vec = self.L @ phi - h_vals - self.B @ c
        centers = self.basis.centers
        m = self.basis.m
        f_phi = self.grid.field(phi)
        f_res = self.grid.field(resid_vec)
        scale = max(float(np.max(np.abs(phi))), 1e-300)
        ortho = float(np.max(np.abs(self.B.T @ phi)) * self.grid.h**2 / scale) if np.any(phi) else 0.0
        return ProjectedSolveResult(
            phi=f_phi,
            c=c.reshape(self.basis.k, 2 * m),
            starstar_norm=starstar_norm(f_phi, centers, m),
            linear_residual=star_norm(f_res, centers, m, self.eps),
            orthogonality=ortho,
        )


def projected_solve(L, h_vals, basis: KernelBasis, grid: PlanarGrid, eps: float) -> ProjectedSolveResult:
    return ProjectedSolver(L, grid, basis, eps).solve(h_vals)


# ---------------------------------------------------------------------------
# sphere spectra


@dataclass
class SpectralCheck:
    m: int
    k_index: int
    eigenvalue: int
    product: int
    t_m: int
    match: bool


def sphere_spectral_check(m: int, k_index: int) -> SpectralCheck:
    """Eigenvalue of the conformally covariant operator of order 2m on S^{2m} at degree k_index.

    lambda_k = k(k + 2m - 1) and the operator acts by prod_{j<m} (lambda_k + j(2m-j-1)).
    """
    if not (isinstance(m, int) and 1 <= m <= 6):
        raise ConfigError("m must be an integer in 1..6")
    if not (isinstance(k_index, int) and 0 <= k_index <= 10):
        raise ConfigError("k_index must be an integer in 0..10")
    lam = k_index * (k_index + 2 * m - 1)
    prod = 1
    for j in range(m):
        prod *= lam + j * (2 * m - j - 1)
    tm = constants_for(m).tm_int
    return SpectralCheck(m, k_index, lam, prod, tm, prod == tm)


def spectral_table(m_max: int = 6, k_max: int = 10) -> list[SpectralCheck]:
    return [sphere_spectral_check(m, k) for m in range(1, m_max + 1) for k in range(0, k_max + 1)]


def write_spectral_json(rows, path) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in rows], fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# kernel-count evidence


@dataclass
class KernelCount:
    half_width: float
    h: float
    eigenvalues: list
    near_one: int
    gap: float


def _path_laplacian(n: int) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    return sp.diags([main, -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1], format="csr")


def bubble_weighted_spectrum(half_width: float, h: float, n_eigs: int = 8, mu: float = 1.0) -> np.ndarray:
    """Eigenvalues nu of -Lap_h psi = nu T psi on a square, T = 8 mu^2/(mu^2+|y|^2)^2.

    Under stereographic projection this is -Lap_{S^2} psi = 2 nu psi, so the kernel
    of -Lap - T appears as nu = 1 with multiplicity 3 and the remaining nu sit
    near 0, 3, 6, ... The square carries natural (Neumann) conditions through the
    grid-graph Laplacian, which is symmetric and, unlike Dirichlet truncation,
    does not push the dilation mode (which tends to 1 at infinity) away from nu = 1.
    """
    n = int(round(2 * half_width / h)) + 1
    x = -half_width + h * np.arange(n)
    A = (sp.kron(_path_laplacian(n), sp.identity(n)) + sp.kron(sp.identity(n), _path_laplacian(n))) / h**2
    X, Y = np.meshgrid(x, x, indexing="ij")
    T = 8.0 * mu**2 / (mu**2 + X.ravel() ** 2 + Y.ravel() ** 2) ** 2
    vals = spla.eigsh(A.tocsc(), k=n_eigs, M=sp.diags(T).tocsc(), sigma=1.0, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def kernel_count(half_width: float, h: float, window: float = 0.25, n_eigs: int = 8) -> KernelCount:
    """Count weighted eigenvalues within ``window`` of 1 and the distance of the rest from 1."""
    nu = bubble_weighted_spectrum(half_width, h, n_eigs)
    dist = np.abs(nu - 1.0)
    near = dist < window
    gap = float(np.min(dist[~near])) if (~near).any() else math.inf
    return KernelCount(half_width, h, nu.tolist(), int(near.sum()), gap)

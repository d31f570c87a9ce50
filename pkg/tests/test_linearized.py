from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import sphere_operator_eigenvalue
from polyliouville.errors import ConfigError, RankDeficiencyError, SolveError
from polyliouville.greens import DiscImages
from polyliouville.linearized import (
    KernelBasis,
    ProjectedSolver,
    kernel_count,
    kernel_eval,
    quintic_ramp,
    spectral_table,
    sphere_spectral_check,
    write_spectral_json,
)
from polyliouville.potentials import Constant
from polyliouville.reduction import ReductionProblem


@pytest.fixture(scope="module")
def problem():
    return ReductionProblem(DiscImages(), Constant(1.0), [[0.2, 0.1]], 0.1, R0=3.0)


def test_ramp_endpoints_and_smoothness():
    assert quintic_ramp(-1.0) == 1.0 and quintic_ramp(0.0) == 1.0 and quintic_ramp(1.0) == 0.0
    t = np.linspace(0, 1, 1001)
    d = np.diff(quintic_ramp(t)) / np.diff(t)
    assert np.all(d <= 1e-12)
    assert abs(d[0]) < 1e-4 and abs(d[-1]) < 1e-4


@pytest.mark.parametrize("j", [0, 1, 2])
def test_kernel_modes_solve_linearized_bubble_equation(j):
    mu = 1.3
    basis = KernelBasis([[0.0, 0.0]], [mu])
    h = 1e-3
    for z in ([0.4, 0.7], [1.5, -0.3], [-2.0, 2.5]):
        z = np.array(z)
        lap = sum(
            kernel_eval(basis, 0, j, z + e) + kernel_eval(basis, 0, j, z - e) - 2 * kernel_eval(basis, 0, j, z)
            for e in np.eye(2) * h
        ) / h**2
        T = 8 * mu**2 / (mu**2 + z @ z) ** 2
        assert abs(-lap - T * kernel_eval(basis, 0, j, z)) < 1e-5


def test_kernel_index_errors():
    basis = KernelBasis([[0.0, 0.0]], [1.0])
    with pytest.raises(IndexError):
        basis.local(1, 0, [0.0, 0.0])
    with pytest.raises(IndexError):
        basis.local(0, 3, [0.0, 0.0])
    with pytest.raises(ConfigError):
        KernelBasis([[0.0, 0.0]], [1.0, 2.0])


def test_zero_forcing_gives_zero(problem):
    res = problem.solver.solve(np.zeros(problem.solver.n))
    assert np.max(np.abs(res.phi.values)) == 0.0
    assert np.max(np.abs(res.c)) == 0.0


def test_projected_solve_constraints_and_equation(problem):
    rng = np.random.default_rng(0)
    P = problem.ops.grid.interior_points()
    h = np.exp(-np.sum((P - problem.config.xi_prime[0]) ** 2, axis=1) / 4) * rng.uniform(0.5, 1.5, len(P))
    res = problem.solver.solve(h)
    assert res.orthogonality < 1e-10
    assert res.linear_residual < 1e-8
    assert np.isfinite(res.starstar_norm)


def test_forcing_along_kernel_is_absorbed_by_multiplier(problem):
    B = problem.solver.B
    res = problem.solver.solve(B[:, 0])
    assert np.max(np.abs(res.phi.values)) < 1e-10
    assert_allclose(res.c.ravel(), [-1.0, 0.0], atol=1e-10)


def test_bad_right_side(problem):
    with pytest.raises(SolveError):
        problem.solver.solve(np.full(problem.solver.n, np.nan))
    with pytest.raises(SolveError):
        problem.solver.solve(np.zeros(3))


def test_coincident_bubbles_are_rank_deficient(problem):
    basis = KernelBasis(np.repeat(problem.config.xi_prime, 2, axis=0), [1.0, 1.0], R0=3.0)
    with pytest.raises(RankDeficiencyError):
        ProjectedSolver(problem.L, problem.ops.grid, basis, problem.eps)


def test_sphere_table_against_gamma_ratio():
    for row in spectral_table(6, 10):
        assert row.product == sphere_operator_eigenvalue(row.m, row.k_index)
        assert row.match == (row.k_index == 1)


def test_sphere_check_domain():
    with pytest.raises(ConfigError):
        sphere_spectral_check(7, 1)
    with pytest.raises(ConfigError):
        sphere_spectral_check(2, 11)


def test_write_spectral_json(tmp_path):
    write_spectral_json(spectral_table(2, 3), tmp_path / "s.json")
    import json

    rows = json.loads((tmp_path / "s.json").read_text())
    assert len(rows) == 8 and rows[1]["match"] is True


def test_kernel_count_small_grid():
    kc = kernel_count(8.0, 0.25)
    assert kc.near_one == 3
    assert kc.gap > 0.5

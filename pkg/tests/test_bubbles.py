from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import bubble_mass_quadrature
from polyliouville.bubbles import (
    BubbleConfig,
    DiscCorrection,
    build_ansatz,
    bubble_mass,
    correction_field,
    correction_remainders,
    fd_polyharmonic,
    geometric_profile,
    in_M,
    make_config,
    residual_and_operators,
    sample_points,
    select_mu,
    standard_bubble,
)
from polyliouville.core import constants_for, fit_loglog_slope
from polyliouville.errors import ConfigError, NoStandardSolutionError, SignError
from polyliouville.geometry import Disc, PlanarGrid
from polyliouville.greens import DiscImages, Grid2D, make_green
from polyliouville.potentials import Affine, Constant, Expression


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0])
def test_mass_quantization(m, delta):
    lam = constants_for(m).Lambda2m
    Q = math.factorial(2 * m - 1)
    val, _ = bubble_mass(m, Q, delta)
    assert abs(val - lam) / lam < 1e-10
    assert abs(bubble_mass_quadrature(m, delta) - lam) / lam < 1e-10


def test_non_positive_Q():
    with pytest.raises(NoStandardSolutionError):
        standard_bubble(1, 0.0, 1.0, [0, 0], [[1, 0]])
    with pytest.raises(NoStandardSolutionError):
        bubble_mass(2, -1.0, 1.0)


@pytest.mark.parametrize("m", [1, 2])
def test_limit_equation_second_order(m):
    Q, delta = 1.3, 0.7
    xi = np.zeros(2 * m)
    pts = np.array([[0.3] + [0.1] * (2 * m - 1), [1.1] + [0.0] * (2 * m - 1)])
    w = lambda x: geometric_profile(m, Q, delta, xi, x)
    exact = Q * np.exp(2 * m * w(pts))
    hs = [0.1, 0.05, 0.025]
    errs = [np.max(np.abs(fd_polyharmonic(w, pts, h, m) - exact)) for h in hs]
    assert fit_loglog_slope(hs, errs) >= 1.9


def test_heights_solve_their_defining_relation():
    g = DiscImages()
    V = Affine(1.0, (0.5, 0.0))
    xi = np.array([[0.3, 0.1], [-0.4, 0.0]])
    mu = select_mu(g, V, xi, 0.05)
    for i in range(2):
        j = 1 - i
        rhs = g.robin(xi[i]) + math.log(V(xi[i:i + 1])[0]) + g.G(xi[j], xi[i])
        assert_allclose(2 * math.log(mu[i]), rhs, rtol=1e-13)


def test_admissible_set():
    g = DiscImages()
    assert in_M(g, [[0.0, 0.0]], 0.05)
    assert not in_M(g, [[0.95, 0.0]], 0.05)
    assert not in_M(g, [[0.1, 0.0], [0.15, 0.0]], 0.05)
    with pytest.raises(ConfigError):
        select_mu(g, Constant(1.0), [[0.95, 0.0]], 0.05)


def test_negative_potential_rejected():
    with pytest.raises(SignError):
        select_mu(DiscImages(), Expression("x1 - 0.5"), [[0.1, 0.0]])


def test_config_validation():
    with pytest.raises(ConfigError):
        BubbleConfig(1, [[0.0, 0.0]], [1.0, 2.0], 0.1, 0.05)
    with pytest.raises(ConfigError):
        BubbleConfig(1, [[0.0, 0.0]], [1.0], -0.1, 0.05)


def test_disc_correction_matches_boundary_data():
    g = DiscImages()
    V = Affine(1.0, (0.5, 0.0))
    cfg = make_config(g, V, [[0.3, 0.2]], 0.1, 0.05)
    ans = build_ansatz(cfg, g, V)
    t = np.linspace(0, 2 * np.pi, 17)
    edge = np.column_stack([np.cos(t), np.sin(t)])
    assert np.max(np.abs(ans.U(edge))) < 1e-12


def test_grid_correction_close_to_exact():
    V = Constant(1.0)
    disc_model = DiscImages()
    grid_model = Grid2D(Disc(), 1 / 64)
    cfg = make_config(disc_model, V, [[0.2, -0.1]], 0.1, 0.05)
    exact = correction_field(disc_model, cfg, 0, V)
    approx = correction_field(grid_model, cfg, 0, V)
    P = np.array([[0.0, 0.0], [0.5, 0.3], [-0.6, -0.2]])
    assert np.max(np.abs(exact(P) - approx(P))) < 1e-3
    assert isinstance(exact, DiscCorrection)


@pytest.mark.parametrize(
    "m,bc,xi",
    [
        (1, "dirichlet", [[0.3, 0.1]]),
        (1, "dirichlet", [[0.45, 0.0], [-0.45, 0.0]]),
        (2, "dirichlet", [[0.0, 0.0, 0.0, 0.0]]),
        (2, "navier", [[0.0, 0.0, 0.0, 0.0]]),
    ],
)
def test_correction_remainders_decay_quadratically(m, bc, xi):
    g = make_green(m, bc, {"kind": "unit_ball"})
    V = Affine(1.0, (0.5, 0.0)) if m == 1 else Constant(1.0)
    P = sample_points(g, 0.04)
    eps_list = [0.2, 0.1, 0.05]
    rows = np.array([correction_remainders(build_ansatz(make_config(g, V, xi, e, 0.05), g, V), P, 0.25) for e in eps_list])
    for i in range(len(xi)):
        for kind in range(2):
            assert abs(fit_loglog_slope(eps_list, rows[:, i, kind]) - 2.0) <= 0.3


def test_expanded_operators_at_disc_center():
    g = DiscImages()
    V = Constant(1.0)
    eps = 0.1
    grid = PlanarGrid(Disc(), eps * 0.125)
    ans = build_ansatz(make_config(g, V, [[0.0, 0.0]], eps, 0.05), g, V)
    ops = residual_and_operators(ans, grid)
    # the ansatz is an exact solution here: only the stencil part of R survives
    assert np.max(np.abs(ops.R_exact)) < 1e-10
    assert abs(ops.mass() / constants_for(1).Lambda2m - 1) < 0.02
    assert_allclose(ops.N(np.zeros(grid.n)), 0.0)

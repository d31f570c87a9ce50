from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import ball4_regular_part_at_center, disc_green, disc_robin, rectangle_green, rectangle_robin
from polyliouville.errors import ConfigError, DomainError, SingularEvaluationError
from polyliouville.greens import (
    AnnulusSeries,
    BoggioBall,
    DiscImages,
    Grid2D,
    NavierBallIterated,
    boggio_log_coefficient,
    green_table,
    make_green,
    write_green_csv,
)
from polyliouville.geometry import Disc, Rectangle


@pytest.fixture(scope="module")
def unit_square_grid():
    return make_green(1, "dirichlet", {"kind": "square", "bounds": [0, 1, 0, 1], "h": 1 / 128})


@pytest.fixture(scope="module")
def disc_grid():
    return Grid2D(Disc(), 1 / 128)


def test_disc_images_match_kelvin_oracle():
    g = DiscImages()
    rng = np.random.default_rng(3)
    for _ in range(10):
        x, xi = rng.uniform(-0.6, 0.6, (2, 2))
        assert_allclose(g.G(x, xi), disc_green(x, xi), rtol=1e-12, atol=1e-12)
        assert_allclose(g.robin(xi), disc_robin(xi), atol=1e-12)


def test_disc_grid_green_close_to_images(disc_grid):
    g = DiscImages()
    for xi in ([0.3, 0.1], [-0.2, 0.5], [0.0, 0.0]):
        for x in ([0.6, -0.3], [-0.1, 0.1]):
            assert abs(disc_grid.G(np.array(x), np.array(xi)) - g.G(np.array(x), np.array(xi))) < 1e-3


def test_square_grid_green_matches_strip_images(unit_square_grid):
    for xi in ([0.5, 0.5], [0.3, 0.6], [0.2, 0.15]):
        xi = np.array(xi)
        assert abs(unit_square_grid.robin(xi) - rectangle_robin(xi)) < 1e-3
        x = np.array([0.7, 0.4])
        assert abs(unit_square_grid.G(x, xi) - rectangle_green(x, xi)) < 1e-3


def test_square_robin_gradient_vanishes_at_center(unit_square_grid):
    assert np.linalg.norm(unit_square_grid.robin_gradient(np.array([0.5, 0.5]))) < 1e-6


@pytest.mark.parametrize("m", [1, 2, 3])
def test_boggio_log_coefficient(m):
    assert abs(boggio_log_coefficient(m) - 1.0) < 1e-3


@pytest.mark.parametrize("bc,model", [("dirichlet", BoggioBall(2)), ("navier", NavierBallIterated())])
def test_ball4_center_source(bc, model):
    xi = np.zeros(4)
    for r in (0.2, 0.5, 0.8):
        x = np.array([r, 0.0, 0.0, 0.0])
        assert_allclose(model.H(x, xi), ball4_regular_part_at_center(r, bc), atol=1e-7)


def test_boggio_m1_is_disc():
    b = BoggioBall(1)
    for xi in ([0.3, 0.2], [-0.5, 0.1]):
        assert_allclose(b.robin(np.array(xi)), disc_robin(xi), atol=1e-12)


def test_boggio_symmetric_and_vanishes_near_boundary():
    b = BoggioBall(2)
    x = np.array([0.3, -0.1, 0.2, 0.0])
    xi = np.array([-0.2, 0.4, 0.0, 0.1])
    assert_allclose(b.G(x, xi), b.G(xi, x), rtol=1e-12)
    edge = np.array([1 - 1e-7, 0, 0, 0])
    assert abs(b.G(edge, xi)) < 1e-6


def test_annulus_series_boundary_and_symmetry():
    a = AnnulusSeries(0.5)
    xi = np.array([0.7, 0.1])
    for r in (0.5 + 1e-9, 1 - 1e-9):
        for t in np.linspace(0, 2 * np.pi, 5, endpoint=False):
            assert abs(a.G(np.array([r * math.cos(t), r * math.sin(t)]), xi)) < 1e-6
    x = np.array([-0.6, 0.3])
    assert_allclose(a.G(x, xi), a.G(xi, x), rtol=1e-10)


def test_annulus_robin_gradient_matches_differences():
    a = AnnulusSeries(0.5)
    xi = np.array([0.62, 0.31])
    s = 1e-6
    fd = np.array([(a.robin(xi + e) - a.robin(xi - e)) / (2 * s) for e in np.eye(2) * s])
    assert_allclose(a.robin_gradient(xi), fd, rtol=1e-6)


def test_errors():
    g = DiscImages()
    with pytest.raises(DomainError):
        g.G(np.array([1.2, 0.0]), np.array([0.1, 0.0]))
    with pytest.raises(SingularEvaluationError):
        g.G(np.array([0.1, 0.0]), np.array([0.1, 0.0]))
    with pytest.raises(ConfigError):
        make_green(2, "dirichlet", {"kind": "square", "bounds": [0, 1, 0, 1], "h": 1 / 64})
    with pytest.raises(ConfigError):
        BoggioBall(4)


def test_make_green_routes():
    assert isinstance(make_green(1, "dirichlet", {"kind": "unit_ball"}), DiscImages)
    assert isinstance(make_green(2, "navier", {"kind": "unit_ball"}), NavierBallIterated)
    assert isinstance(make_green(3, "dirichlet", {"kind": "unit_ball"}), BoggioBall)
    assert isinstance(make_green(1, "dirichlet", {"kind": "annulus", "radii": [0.4, 1.0]}), AnnulusSeries)
    g = make_green(1, "dirichlet", {"kind": "rectangle", "bounds": [0, 2, 0, 1], "h": 1 / 32})
    assert isinstance(g, Grid2D) and isinstance(g.domain, Rectangle)


def test_green_table_csv(tmp_path):
    g = DiscImages()
    rows = green_table(g, [(np.array([0.1, 0.2]), np.array([-0.3, 0.0]))])
    write_green_csv(tmp_path / "g.csv", rows)
    text = (tmp_path / "g.csv").read_bytes()
    assert text.startswith(b"x1,x2,xi1,xi2,G,H\r\n")
    assert text.count(b"\r\n") == 2

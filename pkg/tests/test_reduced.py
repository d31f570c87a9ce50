from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import centered_disc_energy, disc_green, disc_robin
from polyliouville.bubbles import build_ansatz, make_config
from polyliouville.core import abs_log, constants_for
from polyliouville.errors import BoundaryProximityError
from polyliouville.greens import DiscImages, make_green
from polyliouville.potentials import Affine, Constant
from polyliouville.reduced import (
    PHI_SENTINEL,
    energy,
    expansion_check,
    expansion_prediction,
    grad_phi_k,
    phi_k,
    phi_k_flagged,
    write_reports,
)


def _phi_oracle(V, xi):
    total = 0.0
    for i, p in enumerate(xi):
        total -= 2 * math.log(V(np.asarray(p)[None])[0]) + disc_robin(p)
        for j, q in enumerate(xi):
            if j != i:
                total -= disc_green(p, q)
    return total


def test_phi_matches_closed_form():
    g = DiscImages()
    V = Affine(1.0, (0.5, 0.0))
    for xi in ([[0.3, 0.1]], [[0.4, 0.0], [-0.2, 0.3]]):
        assert_allclose(phi_k(g, V, xi), _phi_oracle(V, xi), rtol=1e-12)


def test_phi_sentinels():
    g = DiscImages()
    V = Constant(1.0)
    assert phi_k_flagged(g, V, [[1.5, 0.0]]) == (PHI_SENTINEL, False)
    assert phi_k_flagged(g, V, [[0.1, 0.0], [0.1, 0.0]]) == (-PHI_SENTINEL, False)


def test_gradient_against_differences():
    g = DiscImages()
    V = Affine(1.0, (0.5, 0.2))
    xi = np.array([[0.3, 0.1], [-0.4, 0.2]])
    gr = grad_phi_k(g, V, xi)
    s = 1e-6
    fd = np.zeros(4)
    for a in range(4):
        e = np.zeros(4)
        e[a] = s
        fd[a] = (phi_k(g, V, (xi.ravel() + e).reshape(2, 2)) - phi_k(g, V, (xi.ravel() - e).reshape(2, 2))) / (2 * s)
    assert_allclose(gr, fd, rtol=1e-6)


def test_gradient_refuses_near_collision():
    with pytest.raises(BoundaryProximityError):
        grad_phi_k(DiscImages(), Constant(1.0), [[0.1, 0.0], [0.1, 0.0]], margin=1e-3)


def test_center_energy_value():
    g = DiscImages()
    V = Constant(1.0)
    eps = 0.05
    e = energy(build_ansatz(make_config(g, V, [[0.0, 0.0]], eps, 0.05), g, V))
    target = 16 * math.pi * (abs_log(eps) - 1)
    assert abs(e.value - target) / target < 0.05
    assert_allclose(e.value, centered_disc_energy(eps), rtol=1e-9)
    assert e.error < 1e-6


def test_expansion_prediction_printed_and_corrected():
    c = constants_for(2)
    a = expansion_prediction(2, 1, 0.0, 0.1)
    b = expansion_prediction(2, 1, 0.0, 0.1, printed=True)
    assert_allclose(a - b, c.energy_offset_per_bubble + 4 * c.bm, rtol=1e-14)
    assert expansion_prediction(1, 1, 0.0, 0.1) == expansion_prediction(1, 1, 0.0, 0.1, printed=True)


@pytest.mark.parametrize(
    "xi,V,min_slope",
    [
        ([[0.0, 0.0]], Constant(1.0), 1.8),
        ([[0.3, 0.1]], Affine(1.0, (0.5, 0.0)), 0.8),
        ([[0.45, 0.0], [-0.45, 0.0]], Constant(1.0), 0.8),
    ],
)
def test_planar_expansion_residual_decays(xi, V, min_slope):
    _, slope = expansion_check(DiscImages(), V, xi, [0.1, 0.05, 0.025])
    assert slope >= min_slope


@pytest.mark.parametrize("bc", ["dirichlet", "navier"])
def test_ball4_expansion(bc):
    g = make_green(2, bc, {"kind": "unit_ball"})
    reports, slope = expansion_check(g, Constant(1.0), [[0.0] * 4], [0.1, 0.05, 0.025])
    assert slope >= 1.8
    # the -4 b_m offset leaves a constant gap of 2 b_m (m c1/c0 - 1) = 2 b_2 * 2/3
    gap = 2 * constants_for(2).bm * (2 * 5 / 6 - 1)
    for r in reports:
        assert abs(r.expansion_residual_printed - r.expansion_residual + gap) < 1e-6 * gap


def test_write_reports(tmp_path):
    reports, slope = expansion_check(DiscImages(), Constant(1.0), [[0.0, 0.0]], [0.1, 0.05])
    write_reports(reports, slope, tmp_path / "e.csv", tmp_path / "e.json")
    lines = (tmp_path / "e.csv").read_bytes().split(b"\r\n")
    assert lines[0].startswith(b"eps,J,")
    assert len([ln for ln in lines if ln]) == 3

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import radial_minimum
from polyliouville.errors import ConfigError
from polyliouville.greens import AnnulusSeries, DiscImages, make_green
from polyliouville.potentials import Affine, Constant, GaussianBumps, RingWell
from polyliouville.search import (
    SearchRegion,
    canonical,
    check_linking_level,
    find_critical,
    find_minimum,
    straight_path,
    write_critical_json,
    write_path_csv,
)


def test_disc_center_is_nondegenerate_minimum():
    cp = find_minimum(SearchRegion(DiscImages(), 1), Constant(1.0), n_starts=4)
    assert cp.type == "min" and not cp.degenerate
    assert np.linalg.norm(cp.xi) < 1e-8
    assert_allclose(cp.hessian_eigs, [8.0, 8.0], rtol=1e-4)


def test_affine_minimum_matches_golden_section():
    V = Affine(1.0, (0.5, 0.0))
    cp = find_minimum(SearchRegion(DiscImages(), 1), V, n_starts=4)
    t, val = radial_minimum(lambda t: -2 * math.log(1 + 0.5 * t) - 4 * math.log(1 - t * t), -0.5, 0.9)
    assert_allclose(cp.xi[0], [t, 0.0], atol=1e-7)
    assert_allclose(cp.value, val, rtol=1e-10)


def test_two_points_on_disc_escape_to_boundary():
    cp = find_minimum(SearchRegion(DiscImages(), 2), Constant(1.0), n_starts=4)
    assert cp.type == "boundary-rejected" and not cp.converged


def test_flat_ring_is_degenerate():
    cp = find_minimum(SearchRegion(DiscImages(), 1), RingWell(1.0, 0.5), n_starts=6)
    assert cp.degenerate
    assert abs(np.linalg.norm(cp.xi) - 0.5) < 1e-5


def test_annulus_minimum_is_degenerate_circle():
    cp = find_minimum(SearchRegion(AnnulusSeries(0.5), 1), Constant(1.0), n_starts=6)
    assert cp.degenerate and cp.type == "min"
    r = np.linalg.norm(cp.xi)
    assert 0.5 < r < 1.0
    # every rotation of the minimizer has the same value
    t = 1.1
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    region = SearchRegion(AnnulusSeries(0.5), 1)
    from polyliouville.reduced import phi_k

    assert_allclose(phi_k(region.green, Constant(1.0), cp.xi @ rot.T), cp.value, rtol=1e-9)


def test_seeded_search_is_deterministic():
    V = Affine(1.0, (0.3, -0.2))
    a = find_minimum(SearchRegion(DiscImages(), 1), V, n_starts=5, seed=7)
    b = find_minimum(SearchRegion(DiscImages(), 1), V, n_starts=5, seed=7)
    assert np.array_equal(a.xi, b.xi) and a.value == b.value


def test_seed_outside_region():
    with pytest.raises(ConfigError):
        find_minimum(SearchRegion(DiscImages(), 1), Constant(1.0), seeds=[[0.99, 0.0]])


def test_region_geometry():
    region = SearchRegion(DiscImages(), 2, delta0=0.05)
    rng = np.random.default_rng(0)
    x = region.sample(rng)
    assert region.inside(x) and not region.in_collar(x) and region.barrier(x) == 0.0
    bs = region.boundary_samples(5, rng)
    for p in bs:
        assert region.inside(p)
        assert np.min(region.slacks(p)) < 1e-9
    with pytest.raises(ConfigError):
        SearchRegion(DiscImages(), 0)


def test_canonical_order():
    xi = np.array([[0.3, 0.1], [-0.2, 0.5]])
    assert np.array_equal(canonical(xi), canonical(xi[::-1]))


def test_min_mode_linking():
    rep = check_linking_level(SearchRegion(DiscImages(), 1), Affine(1.0, (0.5, 0.0)), mode="min", n_boundary=16)
    assert rep.status == "holds" and rep.gap > 0


@pytest.fixture(scope="module")
def two_bumps():
    g = make_green(1, "dirichlet", {"kind": "rectangle", "bounds": [-1, 1, -0.5, 0.5], "h": 1 / 32})
    V = GaussianBumps(1.0, (3.0, 3.0), ((-0.5, 0.0), (0.5, 0.0)), (0.3, 0.3))
    return g, V


def test_mountain_pass_between_two_wells(two_bumps, tmp_path):
    g, V = two_bumps
    region = SearchRegion(g, 1)
    left = find_critical(region, V, [-0.5, 0.0])
    right = find_critical(region, V, [0.5, 0.0])
    assert left.type == "min" and right.type == "min"
    B = straight_path(left.xi.ravel(), right.xi.ravel(), 17)
    rep = check_linking_level(region, V, B, mode="mountain-pass", n_boundary=16, max_iter=300)
    assert rep.status == "holds"
    assert rep.level > rep.sup_B0
    assert rep.saddle is not None and rep.saddle["index"] == 1
    assert abs(rep.saddle["xi"][0][0]) < 1e-3
    write_path_csv(rep.path, [0.0] * len(rep.path), tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_bytes().startswith(b"index,x0,x1,phi\r\n")


def test_critical_json(tmp_path):
    cp = find_minimum(SearchRegion(DiscImages(), 1), Constant(1.0), n_starts=2)
    write_critical_json([cp], tmp_path / "c.json")
    import json

    d = json.loads((tmp_path / "c.json").read_text())
    assert d[0]["type"] == "min"

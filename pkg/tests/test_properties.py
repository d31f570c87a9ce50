from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from polyliouville.cli import rounded
from polyliouville.core import GridField, constants_for, round_sig, star_norm
from polyliouville.greens import DiscImages
from polyliouville.linearized import quintic_ramp
from polyliouville.potentials import Affine
from polyliouville.reduced import phi_k

finite = st.floats(-1e6, 1e6, allow_nan=False)


def _disc_point(draw, rmax=0.8):
    r = draw(st.floats(0.0, rmax))
    t = draw(st.floats(0.0, 2 * math.pi))
    return [r * math.cos(t), r * math.sin(t)]


@st.composite
def disc_points(draw, k):
    pts = [_disc_point(draw) for _ in range(k)]
    for i in range(k):
        for j in range(i):
            if math.dist(pts[i], pts[j]) < 0.05:
                pts[i][0] = pts[j][0] + 0.05 if pts[j][0] < 0.7 else pts[j][0] - 0.05
    return pts


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(1e-3, 1e3), seed=st.integers(0, 2**16), eps=st.floats(0.01, 0.5))
def test_star_norm_is_homogeneous(lam, seed, eps):
    rng = np.random.default_rng(seed)
    f = GridField(rng.normal(size=(9, 7)), 0.5, (-2.0, -1.5))
    xi = [[0.1, 0.2]]
    assert math.isclose(star_norm(f.scale(lam), xi, 1, eps), lam * star_norm(f, xi, 1, eps), rel_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(disc_points(2))
def test_green_is_symmetric(pts):
    g = DiscImages()
    x, y = pts
    if math.dist(x, y) < 1e-3:
        return
    assert math.isclose(g.G(x, y), g.G(y, x), rel_tol=1e-10, abs_tol=1e-10)


@settings(max_examples=30, deadline=None)
@given(disc_points(3), st.permutations(range(3)))
def test_reduced_functional_ignores_labels(pts, perm):
    g = DiscImages()
    V = Affine(1.0, (0.3, -0.2))
    a = phi_k(g, V, pts)
    b = phi_k(g, V, [pts[i] for i in perm])
    assert math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-10)


@given(st.floats(-1.0, 2.0), st.floats(-1.0, 2.0))
def test_ramp_is_monotone_and_bounded(s, t):
    lo, hi = min(s, t), max(s, t)
    a, b = float(quintic_ramp(lo)), float(quintic_ramp(hi))
    assert 0.0 <= b <= a <= 1.0


@given(finite)
def test_rounding_is_idempotent(x):
    assert round_sig(round_sig(x)) == round_sig(x)
    assert rounded(rounded([x])) == rounded([x])


@given(st.integers(1, 6))
def test_constant_relations(m):
    c = constants_for(m)
    assert c.tm_int == math.factorial(2 * m)
    assert math.isclose(c.bm, 0.5 * c.alpha2m * math.factorial(m - 1) * math.pi**m, rel_tol=1e-14)
    h = lambda n: sum(Fraction(1, j) for j in range(1, n + 1))
    assert c.c1_over_c0 == h(2 * m - 1) - h(m - 1)
    assert math.isclose(c.Lambda2m, 2 ** (2 * m) * math.factorial(m) * math.factorial(m - 1) * c.omega2m, rel_tol=1e-14)

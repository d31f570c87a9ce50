"""Independent reference computations used by the tests.

None of these import the package; each is a separate route to a number the
library also produces.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import optimize

# ---------------------------------------------------------------------------
# Green's functions, normalized so that G = 4m log(1/|x - xi|) + H


def disc_green(x, xi) -> float:
    """Unit disc, m = 1, by the Kelvin image: 4 log(|xi| |x - xi*| / |x - xi|)."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    r2 = float(xi @ xi)
    if r2 == 0.0:
        return -4.0 * math.log(float(np.linalg.norm(x)))
    star = xi / r2
    return 4.0 * math.log(math.sqrt(r2) * float(np.linalg.norm(x - star)) / float(np.linalg.norm(x - xi)))


def disc_robin(xi) -> float:
    xi = np.asarray(xi, float)
    return 4.0 * math.log(1.0 - float(xi @ xi))


def _strip_w(z: complex, b: float) -> complex:
    return complex(np.exp(math.pi * z / b))


def rectangle_green(x, xi, a: float = 1.0, b: float = 1.0, n_images: int = 12) -> float:
    """Rectangle [0,a] x [0,b]: the strip 0 < y < b maps to the upper half plane
    by exp(pi z / b); the x walls are handled by odd reflection and 2a periodicity.
    Image terms decay like exp(-pi |dx| / b)."""
    z = complex(*x)
    w = _strip_w(z, b)
    total = 0.0
    for j in range(-n_images, n_images + 1):
        for sign, src in ((1.0, complex(xi[0] + 2 * j * a, xi[1])), (-1.0, complex(-xi[0] + 2 * j * a, xi[1]))):
            om = _strip_w(src, b)
            total += sign * 4.0 * math.log(abs(w - om.conjugate()) / abs(w - om))
    return total


def rectangle_robin(xi, a: float = 1.0, b: float = 1.0, n_images: int = 12) -> float:
    zeta = complex(*xi)
    om = _strip_w(zeta, b)
    # direct term with the singularity removed: 4 log(|om - conj om| b / (pi |om|))
    total = 4.0 * math.log(2.0 * om.imag * b / (math.pi * abs(om)))
    w = om
    for j in range(-n_images, n_images + 1):
        for sign, src in ((1.0, complex(xi[0] + 2 * j * a, xi[1])), (-1.0, complex(-xi[0] + 2 * j * a, xi[1]))):
            if sign > 0 and j == 0:
                continue
            o = _strip_w(src, b)
            total += sign * 4.0 * math.log(abs(w - o.conjugate()) / abs(w - o))
    return total


def ball4_regular_part_at_center(r: float, bc: str) -> float:
    """m = 2, source at the center of the unit ball in R^4: H = A + B r^2.

    Dirichlet: G(1) = G'(1) = 0 with G = -8 log r + A + B r^2 gives B = 4, A = -4.
    Navier: G(1) = 0 and Lap G(1) = 0, with Lap log r = 2/r^2 and Lap r^2 = 8, gives B = 2, A = -2.
    """
    B = {"dirichlet": 4.0, "navier": 2.0}[bc]
    return B * (r * r - 1.0)


# ---------------------------------------------------------------------------
# constants


def bubble_integrals(m: int, dps: int = 30) -> tuple[float, float]:
    """c0 = int (1+|x|^2)^{-2m}, c1 = int (1+|x|^2)^{-2m} log(1+|x|^2) over R^{2m},
    by mpmath quadrature in r on [0, inf)."""
    with mpmath.workdps(dps):
        area = 2 * mpmath.pi**m / mpmath.factorial(m - 1)
        n = 2 * m
        c0 = area * mpmath.quad(lambda r: r ** (n - 1) / (1 + r * r) ** n, [0, 1, mpmath.inf])
        c1 = area * mpmath.quad(lambda r: r ** (n - 1) * mpmath.log(1 + r * r) / (1 + r * r) ** n, [0, 1, mpmath.inf])
        return float(c0), float(c1)


def bubble_mass_quadrature(m: int, delta: float) -> float:
    """int over R^{2m} of alpha (2m-1)! delta^{2m} / (delta^2 + r^2)^{2m}, alpha = 2^{2m+1} m."""
    alpha = 2 ** (2 * m + 1) * m
    with mpmath.workdps(30):
        area = 2 * mpmath.pi**m / mpmath.factorial(m - 1)
        f = lambda r: r ** (2 * m - 1) * alpha * math.factorial(2 * m - 1) * delta ** (2 * m) / (delta**2 + r * r) ** (2 * m)
        return float(area * mpmath.quad(f, [0, delta, mpmath.inf]))


def sphere_operator_eigenvalue(m: int, k: int) -> int:
    """Gamma(k + 2m) / Gamma(k): the order-2m conformal operator on S^{2m} at degree k."""
    if k == 0:
        return 0
    return math.factorial(k + 2 * m - 1) // math.factorial(k - 1)


# ---------------------------------------------------------------------------
# one-dimensional reduced functional


def radial_minimum(phi_of_t, lo: float, hi: float) -> tuple[float, float]:
    """Golden-section minimum of a scalar function on [lo, hi]."""
    res = optimize.minimize_scalar(phi_of_t, bracket=(lo, 0.5 * (lo + hi), hi), method="golden", tol=1e-12)
    return float(res.x), float(res.fun)


def centered_disc_energy(eps: float) -> float:
    """J for the centered m = 1 ansatz on the unit disc with V = 1.

    There U = 2 log((1 + eps^2) / (eps^2 + r^2)) vanishes on r = 1, and
    rho^2 e^U = 8 eps^2 / (eps^2 + r^2)^2.
    """
    e2 = mpmath.mpf(eps) ** 2
    with mpmath.workdps(30):
        dirichlet = 0.5 * 2 * mpmath.pi * mpmath.quad(lambda r: (4 * r / (e2 + r * r)) ** 2 * r, [0, eps, 1])
        potential = 2 * mpmath.pi * mpmath.quad(lambda r: 8 * e2 / (e2 + r * r) ** 2 * r, [0, eps, 1])
        return float(dirichlet - potential)

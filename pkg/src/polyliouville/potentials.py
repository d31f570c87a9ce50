"""Positive potentials V with gradients.

Every potential accepts points of shape (..., d) and returns values of shape
(...) and gradients of shape (..., d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


class Potential:
    kind = "abstract"

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def log_grad(self, x) -> np.ndarray:
        return self.grad(x) / np.asarray(self(x))[..., None]

    def scaled(self, lam: float) -> "Potential":
        return Scaled(self, lam)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Potential):
    value: float = 1.0
    kind = "constant"

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.full(x.shape[:-1], self.value)

    def grad(self, x):
        return np.zeros_like(np.asarray(x, float))

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Affine(Potential):
    """V(x) = c + b.x"""

    c: float = 1.0
    b: tuple = (0.0, 0.0)
    kind = "affine"

    def __call__(self, x):
        x = np.asarray(x, float)
        return self.c + x @ np.asarray(self.b, float)

    def grad(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.asarray(self.b, float), x.shape).copy()

    def to_dict(self):
        return {"kind": "affine", "c": self.c, "b": list(self.b)}


@dataclass(frozen=True)
class GaussianBumps(Potential):
    """V(x) = base + sum_k a_k exp(-|x - p_k|^2 / w_k^2)"""

    base: float = 1.0
    amplitudes: tuple = ()
    centers: tuple = ()
    widths: tuple = ()
    kind = "gaussian_bumps"

    def _terms(self, x):
        x = np.asarray(x, float)
        out = []
        for a, p, w in zip(self.amplitudes, self.centers, self.widths):
            d = x - np.asarray(p, float)
            e = a * np.exp(-np.sum(d * d, axis=-1) / w**2)
            out.append((e, d, w))
        return x, out

    def __call__(self, x):
        x, terms = self._terms(x)
        v = np.full(x.shape[:-1], self.base)
        for e, _, _ in terms:
            v = v + e
        return v

    def grad(self, x):
        x, terms = self._terms(x)
        g = np.zeros_like(x)
        for e, d, w in terms:
            g = g - 2.0 * e[..., None] * d / w**2
        return g

    def to_dict(self):
        return {
            "kind": "gaussian_bumps",
            "base": self.base,
            "amplitudes": list(self.amplitudes),
            "centers": [list(c) for c in self.centers],
            "widths": list(self.widths),
        }


@dataclass(frozen=True)
class RingWell(Potential):
    """V(x) = exp(-kappa (|x|^2 - r0^2)^2) / (1 - |x|^2)^2 on the unit disc.

    With the disc Robin function this makes the one-point reduced functional
    equal to 2 kappa (|xi|^2 - r0^2)^2, which is flat along |xi| = r0.
    """

    kappa: float = 1.0
    r0: float = 0.5
    kind = "ring_well"

    def __call__(self, x):
        x = np.asarray(x, float)
        s = np.sum(x * x, axis=-1)
        return np.exp(-self.kappa * (s - self.r0**2) ** 2) / (1.0 - s) ** 2

    def grad(self, x):
        x = np.asarray(x, float)
        s = np.sum(x * x, axis=-1)
        dlog_ds = -2.0 * self.kappa * (s - self.r0**2) + 2.0 / (1.0 - s)
        return (self(x) * dlog_ds)[..., None] * 2.0 * x

    def to_dict(self):
        return {"kind": "ring_well", "kappa": self.kappa, "r0": self.r0}


@dataclass(frozen=True)
class Expression(Potential):
    """Closed-form expression in x1, x2, ... parsed with sympy."""

    expr: str = "1"
    dim: int = 2
    kind = "expression"

    def __post_init__(self):
        import sympy

        syms = sympy.symbols(" ".join(f"x{i + 1}" for i in range(self.dim)))
        syms = syms if isinstance(syms, tuple) else (syms,)
        try:
            e = sympy.sympify(self.expr, locals={str(s): s for s in syms})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"cannot parse potential {self.expr!r}: {exc}") from exc
        extra = e.free_symbols - set(syms)
        if extra:
            raise ConfigError(f"potential uses unknown symbols {sorted(map(str, extra))}")
        object.__setattr__(self, "_f", sympy.lambdify(syms, e, "numpy"))
        object.__setattr__(self, "_g", [sympy.lambdify(syms, sympy.diff(e, s), "numpy") for s in syms])

    def __call__(self, x):
        x = np.asarray(x, float)
        args = [x[..., i] for i in range(self.dim)]
        return np.broadcast_to(np.asarray(self._f(*args), float), x.shape[:-1]).copy()

    def grad(self, x):
        x = np.asarray(x, float)
        args = [x[..., i] for i in range(self.dim)]
        comps = [np.broadcast_to(np.asarray(g(*args), float), x.shape[:-1]) for g in self._g]
        return np.stack(comps, axis=-1)

    def to_dict(self):
        return {"kind": "expression", "expr": self.expr}


@dataclass(frozen=True)
class Scaled(Potential):
    base_potential: Potential = None
    lam: float = 1.0
    kind = "scaled"

    def __call__(self, x):
        return self.lam * self.base_potential(x)

    def grad(self, x):
        return self.lam * self.base_potential.grad(x)

    def to_dict(self):
        return {"kind": "scaled", "lam": self.lam, "base": self.base_potential.to_dict()}


def potential_from_dict(d: dict, dim: int = 2) -> Potential:
    kind = d.get("kind")
    try:
        if kind == "constant":
            return Constant(float(d.get("value", 1.0)))
        if kind == "affine":
            return Affine(float(d.get("c", 1.0)), tuple(float(v) for v in d["b"]))
        if kind == "gaussian_bumps":
            return GaussianBumps(
                float(d.get("base", 1.0)),
                tuple(map(float, d["amplitudes"])),
                tuple(tuple(map(float, c)) for c in d["centers"]),
                tuple(map(float, d["widths"])),
            )
        if kind == "ring_well":
            return RingWell(float(d["kappa"]), float(d["r0"]))
        if kind == "expression":
            return Expression(str(d["expr"]), dim)
        if kind == "scaled":
            return Scaled(potential_from_dict(d["base"], dim), float(d["lam"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad potential description: {exc}") from exc
    raise ConfigError(f"unknown potential kind {kind!r}")

"""Manufactured clamped solutions on the unit square.

Each solution is a finite sum of separable terms ``a(x)·b(y)``.  A factor is a
polynomial times ``Re Σ c_k exp(z_k t)`` with complex ``c_k, z_k``, which covers
``cos(2πt)``, ``sin(2πt)`` and ``eᵗ sin(2πt)``.  Derivatives of any order follow
in closed form from the Leibniz rule, so ``f = Δ²ū`` is exact.

For the built-in tensors (identity, Laplacian trace, plate) the source
``H:AHū`` equals ``Δ²ū``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .core import ExactFields
from .errors import InputError

__all__ = ["Factor", "ManufacturedProblem", "PROBLEMS", "SeparableField", "manufactured_problem"]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Factor:
    """``t ↦ p(t) · Re Σ_k c_k exp(z_k t)`` with ``p`` in increasing-power coefficients."""

    poly: tuple
    terms: tuple = ((1.0, 0.0),)

    def derivatives(self, t: np.ndarray, order: int = 4) -> np.ndarray:
        """Array of shape ``(order+1, *t.shape)`` with derivatives 0..order."""
        t = np.asarray(t, dtype=float)
        pd = [np.asarray(self.poly, dtype=float)]
        for _ in range(order):
            pd.append(P.polyder(pd[-1]) if len(pd[-1]) > 1 else np.zeros(1))
        pvals = [P.polyval(t, c) for c in pd]
        gvals = []
        for j in range(order + 1):
            g = np.zeros_like(t, dtype=complex)
            for c, z in self.terms:
                g = g + complex(c) * complex(z) ** j * np.exp(complex(z) * t)
            gvals.append(g.real)
        out = np.empty((order + 1,) + t.shape)
        for k in range(order + 1):
            out[k] = sum(math.comb(k, j) * pvals[j] * gvals[k - j] for j in range(k + 1))
        return out


def _poly_mul(*polys):
    out = np.array([1.0])
    for p in polys:
        out = P.polymul(out, p)
    return tuple(out)


@dataclass(frozen=True)
class SeparableField:
    """Sum of terms ``a_i(x) b_i(y)``."""

    terms: tuple

    def _derivs(self, x):
        x = np.asarray(x, dtype=float)
        return [(a.derivatives(x[..., 0]), b.derivatives(x[..., 1])) for a, b in self.terms]

    def partial(self, x, i: int, j: int) -> np.ndarray:
        """``∂ⁱ_x ∂ʲ_y`` of the field."""
        return sum(da[i] * db[j] for da, db in self._derivs(x))

    def u(self, x):
        return self.partial(x, 0, 0)

    def grad(self, x):
        d = self._derivs(x)
        gx = sum(da[1] * db[0] for da, db in d)
        gy = sum(da[0] * db[1] for da, db in d)
        return np.stack([gx, gy], -1)

    def hess(self, x):
        d = self._derivs(x)
        hxx = sum(da[2] * db[0] for da, db in d)
        hxy = sum(da[1] * db[1] for da, db in d)
        hyy = sum(da[0] * db[2] for da, db in d)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def lap(self, x):
        d = self._derivs(x)
        return sum(da[2] * db[0] + da[0] * db[2] for da, db in d)

    def bilap(self, x):
        d = self._derivs(x)
        return sum(da[4] * db[0] + 2.0 * da[2] * db[2] + da[0] * db[4] for da, db in d)


@dataclass(frozen=True)
class ManufacturedProblem:
    """A named manufactured solution with its exact fields."""

    id: str
    field: SeparableField
    description: str

    @property
    def exact(self) -> ExactFields:
        fld = self.field
        return ExactFields(u=fld.u, grad=fld.grad, hess=fld.hess, lap=fld.lap, f=fld.bilap, name=self.id)


_SQ = _poly_mul((0.0, 1.0), (0.0, 1.0), (1.0, -1.0), (1.0, -1.0))  # t²(1-t)²
_CUBE = _poly_mul(_SQ, (0.0, 1.0), (1.0, -1.0))  # t³(1-t)³
_COS = ((1.0, 1j * TWO_PI),)
_SIN = ((-1j, 1j * TWO_PI),)
_EXPSIN_COS = ((-1j, 1.0 + 1j * TWO_PI), (1.0, 1j * TWO_PI))

PROBLEMS = {
    "ex1": ManufacturedProblem(
        "ex1",
        SeparableField(((Factor(_SQ), Factor(_SQ)),)),
        "x²(x-1)²y²(y-1)²",
    ),
    "ex2": ManufacturedProblem(
        "ex2",
        SeparableField(((Factor(_SQ, _COS), Factor(_SQ)), (Factor(_SQ), Factor(_SQ, _SIN)))),
        "x²(x-1)²y²(y-1)²(cos(2πx)+sin(2πy))",
    ),
    "ex3": ManufacturedProblem(
        "ex3",
        SeparableField(((Factor(_CUBE, _EXPSIN_COS), Factor(_CUBE)),)),
        "x³y³(1-x)³(1-y)³(eˣ sin(2πx)+cos(2πx))",
    ),
}


def manufactured_problem(pid: str) -> ManufacturedProblem:
    """Return the manufactured problem ``"ex1"``, ``"ex2"`` or ``"ex3"``."""
    try:
        return PROBLEMS[pid]
    except KeyError:
        raise InputError(f"unknown problem {pid!r}; choose from {sorted(PROBLEMS)}") from None

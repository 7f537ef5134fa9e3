"""Small dense symmetric-matrix kernel.

Matrices here are at most (v-1) x (v-1) with v <= 30, so a plain
unpivoted Cholesky factorization with a relative pivot check is all that
is needed.  The heavy lifting is delegated to LAPACK through numpy/scipy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, SingularMatrix

PIVOT_TOL = 1e-12
_ASYMMETRY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Immutable symmetric matrix stored densely.

    The constructor symmetrizes its input as ``(a + a.T) / 2``, which makes
    ``entries[i, j] == entries[j, i]`` hold bit-exactly.  Inputs that are
    visibly asymmetric are rejected instead of being silently averaged.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a nonempty square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.T).max() > _ASYMMETRY_TOL * scale:
            raise ValueError("matrix is not symmetric")
        a = (a + a.T) / 2.0
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls(np.eye(dim))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __mul__(self, scalar: float) -> "SymMatrix":
        return SymMatrix(self.entries * float(scalar))

    __rmul__ = __mul__

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        _check_dims(self, other)
        return SymMatrix(self.entries + other.entries)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = np.asarray(other, dtype=float)
        return other.shape == self.entries.shape and bool(
            np.abs(self.entries - other).max() <= atol
        )


def _check_dims(a: SymMatrix, b: SymMatrix) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")


def cholesky_lower(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of an SPD array, with the relative pivot check.

    Raises SingularMatrix when any pivot ``L[i, i]**2`` is below
    ``PIVOT_TOL * max(diag(a))`` or when LAPACK reports a non-positive pivot.
    """
    a = np.asarray(a, dtype=float)
    max_diag = float(np.max(np.diag(a)))
    if not max_diag > 0.0:
        raise SingularMatrix("matrix has no positive diagonal entry")
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("matrix is not positive definite") from exc
    pivots = np.diag(low) ** 2
    if pivots.min() < PIVOT_TOL * max_diag:
        raise SingularMatrix(
            f"pivot {pivots.min():.3e} below tolerance {PIVOT_TOL * max_diag:.3e}"
        )
    return low


def inverse_array(a: np.ndarray) -> np.ndarray:
    """SPD inverse on raw arrays; the hot path of the optimizer uses this."""
    low = cholesky_lower(a)
    low_inv = solve_triangular(low, np.eye(low.shape[0]), lower=True)
    inv = low_inv.T @ low_inv
    return (inv + inv.T) / 2.0


def spd_inverse(a: SymMatrix) -> SymMatrix:
    return SymMatrix(inverse_array(a.entries))


def trace_of_inverse(a: SymMatrix) -> float:
    """tr(a^-1) for symmetric positive definite ``a``."""
    return trace(spd_inverse(a))


def trace(a: SymMatrix) -> float:
    total = 0.0
    for i in range(a.dim):
        total += float(a.entries[i, i])
    return total


def sandwich_trace(inv: SymMatrix, v: SymMatrix) -> float:
    """tr(inv @ v @ inv), computed as the Frobenius product of ``v`` with inv^2."""
    _check_dims(inv, v)
    sq = inv.entries @ inv.entries
    return float(np.sum(v.entries * sq))


def triple_product(t: np.ndarray, a: SymMatrix) -> SymMatrix:
    """``t @ a @ t.T`` for a rectangular ``t`` whose column count matches ``a``."""
    t = np.asarray(t, dtype=float)
    if t.shape[1] != a.dim:
        raise DimensionMismatch(f"cannot form T A T' with T {t.shape} and A {a.dim}")
    return SymMatrix(t @ a.entries @ t.T)

"""B-spline basis functions with quantile knots.

The ``order`` argument used throughout (``m``) counts polynomial pieces of
degree ``m - 1``: ``m = 1`` gives step functions, ``m = 2`` piecewise linear
hat functions, ``m = 3`` piecewise quadratics, and so on. A basis with ``K``
interior knots has ``q = m + K`` functions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAuxiliary

__all__ = [
    "KnotVector",
    "BSplineBasis",
    "place_knots",
    "make_basis",
    "evaluate_basis",
    "basis_matrix",
    "basis_totals",
]


@dataclass(frozen=True)
class KnotVector:
    """Interior knots, boundary knots and spline order."""

    interior: tuple[float, ...]
    boundary_low: float
    boundary_high: float
    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"spline order must be >= 1, got {self.order}")
        inner = np.asarray(self.interior, dtype=float)
        if inner.size and np.any(np.diff(inner) < 0):
            raise ValueError("interior knots must be non-decreasing")
        if inner.size and (
            inner[0] <= self.boundary_low or inner[-1] >= self.boundary_high
        ):
            raise ValueError("interior knots must lie strictly inside the boundaries")
        if self.boundary_high < self.boundary_low:
            raise ValueError("boundary_high < boundary_low")

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def q(self) -> int:
        return self.order + self.n_interior

    def full_sequence(self) -> np.ndarray:
        """Clamped knot sequence with each boundary repeated ``order`` times."""
        m = self.order
        return np.concatenate(
            [
                np.full(m, self.boundary_low),
                np.asarray(self.interior, dtype=float),
                np.full(m, self.boundary_high),
            ]
        )

    def greville(self) -> np.ndarray:
        """Greville abscissae: sum_j greville[j] * B_j(z) == z when order >= 2."""
        t = self.full_sequence()
        m = self.order
        if m == 1:
            raise ValueError("Greville abscissae need order >= 2")
        return np.array([t[j + 1 : j + m].mean() for j in range(self.q)])


@dataclass(frozen=True)
class BSplineBasis:
    knots: KnotVector
    _t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.knots.order > 1 and self.knots.boundary_high <= self.knots.boundary_low:
            raise DegenerateAuxiliary(
                "zero-width knot range: an order >= 2 basis is undefined"
            )
        object.__setattr__(self, "_t", self.knots.full_sequence())

    @property
    def q(self) -> int:
        return self.knots.q

    @property
    def order(self) -> int:
        return self.knots.order

    def __call__(self, z):
        return basis_matrix(self, z)


def _type1_quantiles(sorted_z: np.ndarray, probs_num: np.ndarray, probs_den: int):
    # order statistic ceil(p * N), 1-based; integer arithmetic avoids float ceil drift
    N = sorted_z.size
    idx = -((-probs_num * N) // probs_den)
    return sorted_z[idx - 1]


def place_knots(z_pop, K: int, m: int) -> KnotVector:
    """Place ``K`` interior knots at the j/(K+1) quantiles of ``z_pop``.

    Quantiles are type 1 (inverse empirical CDF). Coinciding knots, and knots
    that fall on a boundary, are dropped with a ``RuntimeWarning`` so that the
    returned vector may hold fewer than ``K`` interior knots.

    Raises
    ------
    DegenerateAuxiliary
        If ``K > 0`` and ``z_pop`` has fewer than ``K + 2`` distinct values.
    """
    z = np.sort(np.asarray(z_pop, dtype=float).ravel())
    if z.size == 0:
        raise ValueError("z_pop is empty")
    if K < 0 or m < 1:
        raise ValueError(f"need K >= 0 and m >= 1, got K={K}, m={m}")
    if not np.all(np.isfinite(z)):
        raise ValueError("z_pop contains non-finite values")
    lo, hi = float(z[0]), float(z[-1])
    if K == 0:
        if m > 1 and lo == hi:
            raise DegenerateAuxiliary("constant auxiliary variable")
        return KnotVector((), lo, hi, m)

    n_distinct = np.unique(z).size
    if n_distinct < K + 2:
        raise DegenerateAuxiliary(
            f"{n_distinct} distinct auxiliary values cannot support {K} interior knots"
        )
    raw = _type1_quantiles(z, np.arange(1, K + 1), K + 1)
    kept = np.unique(raw)
    kept = kept[(kept > lo) & (kept < hi)]
    if kept.size < K:
        warnings.warn(
            f"tied quantile knots collapsed: {K} requested, {kept.size} kept",
            RuntimeWarning,
            stacklevel=2,
        )
    return KnotVector(tuple(float(k) for k in kept), lo, hi, m)


def make_basis(z_pop, K: int = 15, m: int = 3) -> BSplineBasis:
    return BSplineBasis(place_knots(z_pop, K, m))


def basis_matrix(basis: BSplineBasis, z) -> np.ndarray:
    """Evaluate all basis functions at each point of ``z``.

    Returns an array of shape ``(len(z), q)``. Points are clamped into the
    boundary range; intervals are half-open ``[t_j, t_{j+1})`` except the last,
    which is closed.
    """
    kv = basis.knots
    m, q = kv.order, kv.q
    z = np.asarray(z, dtype=float).ravel()
    out = np.zeros((z.size, q))
    if z.size == 0:
        return out
    if m == 1 and kv.n_interior == 0:
        out[:, 0] = 1.0
        return out

    t = basis._t
    z = np.clip(z, kv.boundary_low, kv.boundary_high)
    # span index i with t[i] <= z < t[i+1], restricted to non-empty spans
    span = np.searchsorted(t, z, side="right") - 1
    span = np.clip(span, m - 1, kv.n_interior + m - 1)

    # de Boor's triangular scheme, vectorised over points
    p = m - 1
    N = np.zeros((z.size, m))
    N[:, 0] = 1.0
    left = np.zeros((z.size, m))
    right = np.zeros((z.size, m))
    for j in range(1, p + 1):
        left[:, j] = z - t[span + 1 - j]
        right[:, j] = t[span + j] - z
        saved = np.zeros(z.size)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    cols = (span - p)[:, None] + np.arange(m)[None, :]
    rows = np.repeat(np.arange(z.size), m)
    out[rows, cols.ravel()] = N.ravel()
    return out


def evaluate_basis(basis: BSplineBasis, z: float) -> np.ndarray:
    """Basis vector ``b(z)`` of length ``q`` at a single point."""
    return basis_matrix(basis, [z])[0]


def basis_totals(basis: BSplineBasis, z_pop) -> np.ndarray:
    """Population totals ``sum_U b(z_i)``."""
    return basis_matrix(basis, z_pop).sum(axis=0)

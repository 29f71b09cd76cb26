"""Chi-square distance calibration weights.

All three weighting strategies share one closed form: given sampling weights
``d``, a sample basis matrix ``Bs`` (rows ``b(z_i)'``) and known population
totals ``t_b``, the weights closest to ``d`` in the distance
``sum (w_i - d_i)^2 / (q_i d_i)`` that reproduce ``t_b`` are

    w_i = d_i * (1 - q_i b(z_i)' G^{-1} (t_hat - t_b)),
    G = sum_s d_i q_i b(z_i) b(z_i)',   t_hat = sum_s d_i b(z_i).

Horvitz-Thompson weights are the degenerate case with no constraints, linear
GREG uses ``b(z) = (1, z)'`` and B-spline calibration a spline basis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import SingularGram

__all__ = [
    "Strategy",
    "CalibrationWeights",
    "ht_weights",
    "bspline_weights",
    "linear_greg_weights",
    "verify_constraints",
    "gram_solve",
    "RANK_TOL",
]

RANK_TOL = 1e-10


class Strategy(str, enum.Enum):
    HT = "HT"
    GREG = "LinearGREG"
    BSPLINE = "BSpline"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "ht": cls.HT,
            "horvitzthompson": cls.HT,
            "lineargreg": cls.GREG,
            "greg": cls.GREG,
            "linear": cls.GREG,
            "bspline": cls.BSPLINE,
            "spline": cls.BSPLINE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown strategy {name!r}") from None


@dataclass(frozen=True)
class CalibrationWeights:
    weights: np.ndarray
    strategy: Strategy
    constraint_gap: float = 0.0
    gram_condition: float = 1.0
    negative_weights: int = 0
    form_gap: float = 0.0  # disagreement of the two closed forms when q_i == 1

    def __len__(self):
        return self.weights.size


def gram_solve(G: np.ndarray, rhs: np.ndarray, ridge: float = 0.0) -> tuple[np.ndarray, float]:
    """Solve ``G x = rhs`` for a symmetric positive semi-definite ``G``.

    Returns the solution and the 2-norm condition number of ``G``. Raises
    :class:`SingularGram` when the smallest eigenvalue is below ``RANK_TOL``
    times the largest diagonal entry.
    """
    G = np.asarray(G, dtype=float)
    if ridge:
        G = G + ridge * np.eye(G.shape[0])
    eig = np.linalg.eigvalsh(G)
    scale = float(np.max(np.diag(G))) if G.size else 0.0
    cond = float(eig[-1] / eig[0]) if eig.size and eig[0] > 0 else float("inf")
    if G.size == 0 or scale <= 0 or eig[0] <= RANK_TOL * scale:
        raise SingularGram(
            f"Gram matrix is numerically singular (condition {cond:.3g}); "
            "reduce the number of knots or check the auxiliary variable",
            condition=cond,
        )
    factor = linalg.cho_factor(G)
    return linalg.cho_solve(factor, rhs), cond


def verify_constraints(w, Bs, t_b) -> float:
    """Largest absolute violation ``max_j |sum_s w_i B_j(z_i) - t_b[j]|``."""
    Bs = np.asarray(Bs, dtype=float)
    return float(np.max(np.abs(Bs.T @ np.asarray(w, dtype=float) - np.asarray(t_b)), initial=0.0))


def ht_weights(d) -> CalibrationWeights:
    d = np.asarray(d, dtype=float)
    return CalibrationWeights(
        weights=d.copy(),
        strategy=Strategy.HT,
        negative_weights=int(np.sum(d < 0)),
    )


def _calibrate(d, Bs, t_b, q_unit, ridge, strategy) -> CalibrationWeights:
    d = np.asarray(d, dtype=float)
    Bs = np.asarray(Bs, dtype=float)
    t_b = np.asarray(t_b, dtype=float)
    if Bs.shape != (d.size, t_b.size):
        raise ValueError(
            f"basis matrix shape {Bs.shape} does not match n={d.size}, q={t_b.size}"
        )
    q_unit = np.ones_like(d) if q_unit is None else np.asarray(q_unit, dtype=float)
    if np.any(q_unit <= 0):
        raise ValueError("q_unit entries must be positive")

    dq = d * q_unit
    G = (Bs * dq[:, None]).T @ Bs
    t_hat = Bs.T @ d
    lam, cond = gram_solve(G, t_hat - t_b, ridge)
    w = d * (1.0 - q_unit * (Bs @ lam))

    form_gap = 0.0
    if np.all(q_unit == 1.0) and not ridge:
        # second closed form: w_i = d_i t_b' G^{-1} b(z_i); needs 1 in span(b)
        coef, _ = gram_solve(G, t_b)
        w_alt = d * (Bs @ coef)
        form_gap = float(np.max(np.abs(w_alt - w)) / max(np.max(np.abs(w)), 1.0))

    return CalibrationWeights(
        weights=w,
        strategy=strategy,
        constraint_gap=verify_constraints(w, Bs, t_b),
        gram_condition=cond,
        negative_weights=int(np.sum(w < 0)),
        form_gap=form_gap,
    )


def bspline_weights(d, Bs, t_b, q_unit=None, ridge: float = 0.0) -> CalibrationWeights:
    """B-spline calibration weights.

    Parameters
    ----------
    d : array_like, shape (n,)
        Horvitz-Thompson weights ``1 / pi_i``.
    Bs : array_like, shape (n, q)
        Basis functions evaluated at the sample auxiliary values.
    t_b : array_like, shape (q,)
        Population totals of the basis functions.
    q_unit : array_like, optional
        Positive per-unit scale factors in the distance; defaults to ones.
    ridge : float
        Optional ``ridge * I`` added to the Gram matrix. Zero by default; a
        positive value changes the estimator and breaks exact calibration.

    Returns
    -------
    CalibrationWeights
        ``form_gap`` reports the relative disagreement between the general
        formula and the ``q_i = 1`` shortcut (zero when not applicable).
    """
    return _calibrate(d, Bs, t_b, q_unit, ridge, Strategy.BSPLINE)


def greg_design(z) -> np.ndarray:
    z = np.asarray(z, dtype=float).ravel()
    return np.column_stack([np.ones_like(z), z])


def linear_greg_weights(d, z_sample, N, t_z, q_unit=None, ridge: float = 0.0) -> CalibrationWeights:
    """Deville-Sarndal linear calibration on the population size and total of z."""
    return _calibrate(
        d, greg_design(z_sample), np.array([float(N), float(t_z)]), q_unit, ridge, Strategy.GREG
    )

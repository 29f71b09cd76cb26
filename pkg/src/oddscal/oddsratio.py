"""Odds-ratio estimates, linearized variables, variances and intervals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bspline import basis_matrix, make_basis
from .calibration import Strategy, greg_design, gram_solve
from .design import SamplingDesign, ht_variance_estimate, ht_variance_population
from .errors import SingularJacobian, ZeroCell
from .logistic import LogisticFit, fit, unit_scores

__all__ = [
    "ContingencyCounts",
    "LinearizedVariables",
    "VarianceReport",
    "OrInterval",
    "or_from_beta",
    "or_contingency",
    "linearized",
    "linearized_binary",
    "residualize",
    "variance_beta1",
    "sandwich_variance",
    "ci_or",
    "ComparisonTable",
    "asymptotic_variance_comparison",
]


@dataclass(frozen=True)
class ContingencyCounts:
    """Weighted 2x2 counts; ``nxy`` is indexed by x first, then y."""

    n00: float
    n01: float
    n10: float
    n11: float

    @classmethod
    def from_data(cls, y, x, w=None) -> "ContingencyCounts":
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("contingency counts need a binary risk variable")
        cell = lambda a, b: float(w[(x == a) & (y == b)].sum())  # noqa: E731
        return cls(cell(0, 0), cell(0, 1), cell(1, 0), cell(1, 1))

    def check(self):
        if min(self.n00, self.n01, self.n10, self.n11) <= 0:
            raise ZeroCell(f"non-positive cell count in {self}")


@dataclass
class LinearizedVariables:
    u0: np.ndarray
    u1: np.ndarray

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.u0, self.u1])


@dataclass
class VarianceReport:
    var_beta1: float
    residuals: np.ndarray
    theta_hat: np.ndarray | None
    strategy: Strategy
    matrix: np.ndarray | None = None  # full 2x2 variance of beta-hat


@dataclass(frozen=True)
class OrInterval:
    or_hat: float
    lo: float
    hi: float
    alpha: float

    def contains(self, value: float, rtol: float = 0.0) -> bool:
        return self.lo * (1 - rtol) <= value <= self.hi * (1 + rtol)


def or_from_beta(beta) -> float:
    b1 = beta.b1 if hasattr(beta, "b1") else float(beta)
    return float(np.exp(b1))


def or_contingency(c: ContingencyCounts) -> float:
    c.check()
    return c.n00 * c.n11 / (c.n01 * c.n10)


def linearized(y, x, fit_result: LogisticFit) -> LinearizedVariables:
    """Estimated linearized variables ``u_i = -J^{-1} x_i (y_i - mu(x_i' beta))``."""
    t = unit_scores(y, x, fit_result.beta)
    try:
        Jinv = np.linalg.inv(fit_result.jacobian)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian("Jacobian at the solution is singular") from exc
    u = -t @ Jinv.T
    return LinearizedVariables(u[:, 0], u[:, 1])


def linearized_binary(c: ContingencyCounts, x, y) -> np.ndarray:
    """Four-valued linearized variable of log OR for binary x and y.

    ``+1/N00`` and ``+1/N11`` on the concordant cells, ``-1/N01`` and
    ``-1/N10`` on the discordant ones. ``x`` and ``y`` may be scalars or arrays.
    """
    c.check()
    x = np.asarray(x)
    y = np.asarray(y)
    out = np.select(
        [(x == 0) & (y == 0), (x == 1) & (y == 1), (x == 1) & (y == 0), (x == 0) & (y == 1)],
        [1 / c.n00, 1 / c.n11, -1 / c.n10, -1 / c.n01],
        default=np.nan,
    )
    if np.any(np.isnan(out)):
        raise ValueError("x and y must be binary")
    return out if out.ndim else float(out)


def residualize(values, B, weights=None):
    """Weighted least-squares fit of ``values`` on the columns of ``B``.

    Returns ``(theta, residuals)`` with ``theta = (B'WB)^{-1} B'W values``.
    """
    B = np.asarray(B, dtype=float)
    v = np.asarray(values, dtype=float)
    wt = np.ones(B.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    G = (B * wt[:, None]).T @ B
    theta, _ = gram_solve(G, (B * wt[:, None]).T @ v)
    return theta, v - B @ theta


def variance_beta1(uhat: LinearizedVariables, d, Bs, design: SamplingDesign, labels=None,
                   strategy: Strategy = Strategy.BSPLINE) -> VarianceReport:
    """Variance estimate of beta1-hat for a calibrated estimator.

    The linearized variable ``u1`` is regressed on the calibration basis with
    the sampling weights ``d``; the estimate is the HT variance estimator of the
    residuals.
    """
    theta, resid = residualize(uhat.u1, Bs, d)
    var = ht_variance_estimate(resid, design, labels)
    return VarianceReport(max(float(var), 0.0), resid, theta, strategy)


def sandwich_variance(y, x, fit_result: LogisticFit, design: SamplingDesign, labels=None) -> VarianceReport:
    """``J^{-1} V_HT(t) J^{-1}`` for the uncalibrated (HT) estimator; beta1 entry extracted."""
    t = unit_scores(y, x, fit_result.beta)
    Jinv = np.linalg.inv(fit_result.jacobian)
    V = Jinv @ ht_variance_estimate(t, design, labels) @ Jinv.T
    V = 0.5 * (V + V.T)
    return VarianceReport(max(float(V[1, 1]), 0.0), t[:, 1], None, Strategy.HT, matrix=V)


def _z_quantile(alpha: float) -> float:
    return float(stats.norm.isf(alpha / 2))


def ci_or(beta1: float, var_beta1: float, alpha: float = 0.05) -> OrInterval:
    """Normal interval for beta1 mapped through exp."""
    if var_beta1 < 0:
        raise ValueError("variance must be nonnegative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    half = _z_quantile(alpha) * np.sqrt(var_beta1)
    return OrInterval(float(np.exp(beta1)), float(np.exp(beta1 - half)), float(np.exp(beta1 + half)), alpha)


@dataclass
class ComparisonTable:
    beta: tuple[float, float]
    var_ht: float
    var_greg: float
    var_bspline: float
    K: int
    m: int
    q: int
    details: dict = field(default_factory=dict)

    @property
    def gain_greg(self) -> float:
        return 1.0 - self.var_greg / self.var_ht

    @property
    def gain_bspline(self) -> float:
        return 1.0 - self.var_bspline / self.var_ht

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta[0],
            "beta1": self.beta[1],
            "or": float(np.exp(self.beta[1])),
            "K": self.K,
            "m": self.m,
            "q": self.q,
            "variance": {"HT": self.var_ht, "LinearGREG": self.var_greg, "BSpline": self.var_bspline},
            "gain": {"LinearGREG": self.gain_greg, "BSpline": self.gain_bspline},
        }


def asymptotic_variance_comparison(y, x, z, design: SamplingDesign, K: int = 15, m: int = 3,
                                   basis=None) -> ComparisonTable:
    """Asymptotic variances of beta1-hat for the HT, GREG and B-spline estimators.

    Works on a full population: the population fit gives ``beta``, ``J`` and
    the linearized variables, which are then residualized on ``(1, z)`` and on
    the spline basis with population least squares.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    pop_fit = fit(y, x, np.ones_like(y))
    t = unit_scores(y, x, pop_fit.beta)
    Jinv = np.linalg.inv(pop_fit.jacobian)
    V_ht = Jinv @ ht_variance_population(t, design) @ Jinv.T
    u1 = linearized(y, x, pop_fit).u1

    _, e_greg = residualize(u1, greg_design(z))
    basis = basis if basis is not None else make_basis(z, K, m)
    _, e_bs = residualize(u1, basis_matrix(basis, z))
    return ComparisonTable(
        beta=(pop_fit.beta.b0, pop_fit.beta.b1),
        var_ht=float(V_ht[1, 1]),
        var_greg=float(ht_variance_population(e_greg, design)),
        var_bspline=float(ht_variance_population(e_bs, design)),
        K=basis.knots.n_interior,
        m=basis.order,
        q=basis.q,
        details={"sandwich_ht": V_ht},
    )

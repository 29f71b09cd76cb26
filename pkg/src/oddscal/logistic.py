"""Weighted logistic estimating equations for logit(p) = b0 + b1 * x."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log1p

from .errors import Diverged, NotConverged, SingularJacobian

__all__ = [
    "Beta",
    "LogisticFit",
    "mu",
    "design_rows",
    "score",
    "unit_scores",
    "jacobian",
    "loglik",
    "fit",
]

log = logging.getLogger(__name__)

ETA_LIMIT = 30.0
RUNAWAY_STEPS = 8


@dataclass(frozen=True)
class Beta:
    b0: float
    b1: float

    def __post_init__(self):
        if not (np.isfinite(self.b0) and np.isfinite(self.b1)):
            raise ValueError(f"non-finite coefficients ({self.b0}, {self.b1})")

    def as_array(self) -> np.ndarray:
        return np.array([self.b0, self.b1])

    @classmethod
    def from_array(cls, a) -> "Beta":
        return cls(float(a[0]), float(a[1]))


@dataclass
class LogisticFit:
    beta: Beta
    jacobian: np.ndarray
    score_norm: float
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    damped_steps: int = 0
    indefinite_jacobian: bool = False


def mu(eta):
    """Logistic function exp(eta) / (1 + exp(eta)) without overflow."""
    return expit(eta)


def design_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return np.column_stack([np.ones_like(x), x])


def _beta_vec(beta) -> np.ndarray:
    return beta.as_array() if isinstance(beta, Beta) else np.asarray(beta, dtype=float)


def unit_scores(y, x, beta) -> np.ndarray:
    """Per-unit score contributions ``t_i = x_i (y_i - mu(x_i' beta))``, shape (n, 2)."""
    X = design_rows(x)
    r = np.asarray(y, dtype=float) - mu(X @ _beta_vec(beta))
    return X * r[:, None]


def score(y, x, w, beta) -> np.ndarray:
    """Weighted score ``sum_i w_i x_i (y_i - mu(x_i' beta))``."""
    return np.asarray(w, dtype=float) @ unit_scores(y, x, beta)


def jacobian(x, w, beta) -> np.ndarray:
    """Derivative of :func:`score` in beta: ``-sum_i w_i nu_i x_i x_i'``."""
    X = design_rows(x)
    p = mu(X @ _beta_vec(beta))
    nu = p * (1.0 - p)
    return -(X * (np.asarray(w, dtype=float) * nu)[:, None]).T @ X


def loglik(y, x, w, beta) -> float:
    """Weighted log-likelihood ``sum w_i [y_i eta_i - log(1 + e^eta_i)]``."""
    eta = design_rows(x) @ _beta_vec(beta)
    # log(1 + e^eta) computed stably
    soft = np.maximum(eta, 0) + log1p(np.exp(-np.abs(eta)))
    return float(np.asarray(w, dtype=float) @ (np.asarray(y, dtype=float) * eta - soft))


def _check_separation(y, x, w):
    pos = w > 0
    yy, xx = y[pos], x[pos]
    if yy.size == 0:
        raise SingularJacobian("no units with positive weight")
    if np.all(yy == yy[0]):
        raise Diverged("all weighted responses are equal; the intercept is infinite")
    if np.ptp(xx) == 0:
        raise SingularJacobian("risk variable is constant among weighted units")
    x0, x1 = xx[yy == 0], xx[yy == 1]
    if x0.max() <= x1.min() or x1.max() <= x0.min():
        raise Diverged("the risk variable separates the responses; the MLE is infinite")


def _polish(y, x, w, beta, snorm, it, trace):
    # A score within tol * sum|w| can still leave beta off by ~1e-8 when a
    # cell carries little weight; one more Newton step is nearly free.
    try:
        cand = beta - np.linalg.solve(jacobian(x, w, beta), score(y, x, w, beta))
    except np.linalg.LinAlgError:
        return beta, snorm, it
    s_new = float(np.max(np.abs(score(y, x, w, cand))))
    if np.all(np.isfinite(cand)) and s_new < snorm:
        trace.append(s_new)
        return cand, s_new, it + 1
    return beta, snorm, it


def fit(y, x, w, init: Beta | None = None, tol: float = 1e-10, max_iter: int = 50) -> LogisticFit:
    """Solve the weighted score equation by Newton-Raphson.

    Iterates ``beta <- beta - J(beta)^{-1} score(beta)`` until
    ``max|score| <= tol * sum|w|``, then takes one extra step if it lowers the
    score further. A step that does not reduce the score norm
    is halved (up to 30 times); this only matters when negative calibration
    weights make the Jacobian indefinite.

    Raises
    ------
    Diverged
        On complete or quasi-complete separation, or when the linear predictor
        stays past +-30 while the coefficients and likelihood keep growing.
    SingularJacobian
        If the Jacobian cannot be inverted.
    NotConverged
        If ``max_iter`` Newton steps do not reach the tolerance.
    """
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if not (y.size == x.size == w.size):
        raise ValueError("y, x and w must have the same length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be 0/1")
    _check_separation(y, x, w)

    if init is None:
        ybar = float(np.clip((w @ y) / w.sum(), 1e-6, 1 - 1e-6))
        beta = np.array([np.log(ybar / (1 - ybar)), 0.0])
    else:
        beta = init.as_array()

    target = tol * float(np.abs(w).sum())
    X = design_rows(x)
    trace: list[float] = []
    damped = 0
    indefinite = False
    runaway = 0
    s = score(y, x, w, beta)
    for it in range(max_iter + 1):
        snorm = float(np.max(np.abs(s)))
        trace.append(snorm)
        if snorm <= target:
            beta, snorm, it = _polish(y, x, w, beta, snorm, it, trace)
            J = jacobian(x, w, beta)
            return LogisticFit(Beta.from_array(beta), J, snorm, it, True, trace, damped, indefinite)
        if it == max_iter:
            break
        J = jacobian(x, w, beta)
        if np.any(np.linalg.eigvalsh(J) >= 0):
            indefinite = True
        try:
            step = np.linalg.solve(J, s)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"Jacobian singular at iteration {it}") from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian(f"Jacobian singular at iteration {it}")

        base = np.linalg.norm(s)
        lam = 1.0
        for _ in range(30):
            cand = beta - lam * step
            s_new = score(y, x, w, cand)
            if np.linalg.norm(s_new) < base:
                break
            lam *= 0.5
        else:
            cand = beta - step
            s_new = score(y, x, w, cand)
        if lam < 1.0:
            damped += 1
            log.debug("iteration %d: step damped to %g", it, lam)
        if (
            np.max(np.abs(X[w != 0] @ cand)) > ETA_LIMIT
            and np.linalg.norm(cand) > np.linalg.norm(beta)
            and loglik(y, x, w, cand) > loglik(y, x, w, beta)
        ):
            runaway += 1
            if runaway >= RUNAWAY_STEPS:
                raise Diverged(
                    f"linear predictor beyond {ETA_LIMIT} and still growing with the likelihood"
                )
        else:
            runaway = 0
        beta, s = cand, s_new

    raise NotConverged(f"no convergence in {max_iter} iterations (|score| = {trace[-1]:.3g})")

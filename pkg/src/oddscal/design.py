"""Sampling designs, Horvitz-Thompson totals and their variances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DesignTooSmall

__all__ = [
    "SamplingDesign",
    "SRSWOR",
    "draw",
    "ht_total",
    "ht_variance_estimate",
    "ht_variance_population",
]


class SamplingDesign:
    """Provider of first- and second-order inclusion probabilities.

    Subclasses implement :meth:`inclusion` and :meth:`joint_inclusion` for
    units given by 0-based labels. Estimators only talk to this interface.
    """

    N: int
    n: int
    fixed_size = True

    def inclusion(self, labels) -> np.ndarray:
        raise NotImplementedError

    def joint_inclusion(self, labels) -> np.ndarray:
        """Matrix of pi_ij over ``labels`` with pi_ii on the diagonal."""
        raise NotImplementedError

    def draw(self, seed) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class SRSWOR(SamplingDesign):
    """Simple random sampling without replacement of ``n`` out of ``N``."""

    N: int
    n: int

    def __post_init__(self):
        if not (1 <= self.n <= self.N):
            raise ValueError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")

    @property
    def kind(self) -> str:
        return "SRSWOR"

    @property
    def pi(self) -> float:
        return self.n / self.N

    @property
    def pi_joint(self) -> float:
        if self.N == 1:
            return 1.0
        return self.n * (self.n - 1) / (self.N * (self.N - 1))

    @property
    def sampling_fraction(self) -> float:
        return self.n / self.N

    def inclusion(self, labels) -> np.ndarray:
        return np.full(np.asarray(labels).size, self.pi)

    def joint_inclusion(self, labels) -> np.ndarray:
        k = np.asarray(labels).size
        P = np.full((k, k), self.pi_joint)
        np.fill_diagonal(P, self.pi)
        return P

    def draw(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(self.N, size=self.n, replace=False))

    # closed forms, used as fast paths and as cross-checks of the double sums
    def closed_form_estimate(self, values: np.ndarray) -> np.ndarray:
        v = _as_2d(values)
        if v.shape[0] < 2:
            raise DesignTooSmall("variance estimation needs n >= 2")
        s2 = np.atleast_2d(np.cov(v, rowvar=False, ddof=1))
        return self.N**2 * (1 - self.sampling_fraction) * s2 / self.n

    def closed_form_population(self, values: np.ndarray) -> np.ndarray:
        v = _as_2d(values)
        if v.shape[0] < 2:
            return np.zeros((v.shape[1], v.shape[1]))
        S2 = np.atleast_2d(np.cov(v, rowvar=False, ddof=1))
        return self.N**2 * (1 - self.sampling_fraction) * S2 / self.n


def draw(design: SamplingDesign, seed) -> np.ndarray:
    """Draw a sample; returns sorted 0-based unit labels."""
    return design.draw(seed)


def _as_2d(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def _unwrap(M: np.ndarray, values) -> np.ndarray | float:
    return float(M[0, 0]) if np.asarray(values).ndim == 1 else M


def ht_total(values, design: SamplingDesign, labels=None):
    """Horvitz-Thompson estimate ``sum_s v_i / pi_i``."""
    v = np.asarray(values, dtype=float)
    if labels is None:
        labels = np.arange(v.shape[0])
    pi = design.inclusion(labels)
    return np.tensordot(1.0 / pi, v, axes=(0, 0))


def ht_variance_estimate(values, design: SamplingDesign, labels=None, form="syg"):
    """Unbiased estimate of the variance of the HT total from a sample.

    ``form="syg"`` uses the Sen-Yates-Grundy pairwise-difference arrangement
    (valid for fixed-size designs, nonnegative for SRSWOR); ``form="ht"`` the
    raw double sum ``sum_s sum_s (pi_ij - pi_i pi_j)/pi_ij * v_i/pi_i * v_j/pi_j``.
    Vector-valued ``values`` of shape ``(n, k)`` give a ``k x k`` matrix.
    """
    v = _as_2d(values)
    n = v.shape[0]
    if n < 2:
        raise DesignTooSmall("variance estimation needs n >= 2")
    if labels is None:
        labels = np.arange(n)
    pi = design.inclusion(labels)
    Pij = design.joint_inclusion(labels)
    outer = np.outer(pi, pi)
    a = v / pi[:, None]
    if form == "ht":
        D = (Pij - outer) / Pij
        M = a.T @ D @ a
    elif form == "syg":
        if not design.fixed_size:
            raise ValueError("the SYG form needs a fixed-size design")
        D = (outer - Pij) / Pij
        np.fill_diagonal(D, 0.0)
        # 1/2 sum_{i!=j} D_ij (a_i - a_j)(a_i - a_j)' expanded without the n^2 x k tensor
        rowsum = D.sum(axis=1)
        M = (a * rowsum[:, None]).T @ a - a.T @ D @ a
    else:
        raise ValueError(f"unknown variance form {form!r}")
    M = 0.5 * (M + M.T)
    return _unwrap(M, values)


def ht_variance_population(values, design: SamplingDesign, method="auto"):
    """Design variance of the HT total given values for every population unit.

    ``method="double_sum"`` evaluates ``sum_U sum_U (pi_ij - pi_i pi_j) v_i v_j
    / (pi_i pi_j)`` directly (O(N^2) memory); ``"auto"`` uses the design's
    closed form when it has one.
    """
    v = _as_2d(values)
    if method == "auto" and hasattr(design, "closed_form_population"):
        return _unwrap(design.closed_form_population(v), values)
    if method not in ("auto", "double_sum"):
        raise ValueError(f"unknown method {method!r}")
    labels = np.arange(v.shape[0])
    pi = design.inclusion(labels)
    Pij = design.joint_inclusion(labels)
    a = v / pi[:, None]
    if design.fixed_size:
        # rows of (Pij - pi pi') sum to zero, so centring a is exact and avoids cancellation
        a = a - a.mean(axis=0)
    M = a.T @ (Pij - np.outer(pi, pi)) @ a
    return _unwrap(0.5 * (M + M.T), values)

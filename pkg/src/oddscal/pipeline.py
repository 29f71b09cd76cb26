"""End-to-end odds-ratio estimation for one survey sample.

For each weighting strategy the run goes through five steps:

1. build the calibration basis (spline basis, or ``(1, z)`` for GREG);
2. compute calibration weights and solve the weighted score equation;
3. compute the estimated linearized variables;
4. regress them on the basis with the sampling weights and take residuals;
5. apply the Horvitz-Thompson variance estimator to the residuals.

The HT strategy skips steps 1 and 4 and uses the sandwich form instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .bspline import BSplineBasis, KnotVector, basis_matrix, basis_totals, make_basis
from .calibration import (
    CalibrationWeights,
    Strategy,
    bspline_weights,
    greg_design,
    ht_weights,
    linear_greg_weights,
)
from .design import SamplingDesign
from .errors import OddsCalError
from .logistic import Beta, LogisticFit, fit
from .oddsratio import (
    LinearizedVariables,
    OrInterval,
    VarianceReport,
    ci_or,
    linearized,
    sandwich_variance,
    variance_beta1,
)

__all__ = ["SurveyDataset", "AnalysisConfig", "StrategyResult", "OrReport", "run", "StepError"]

ALL_STRATEGIES = (Strategy.HT, Strategy.GREG, Strategy.BSPLINE)


@dataclass
class SurveyDataset:
    """Sample records plus whatever is known about the population.

    Auxiliary information comes either as the full population frame of ``z``
    (``frame_z``) or as precomputed totals: ``basis_totals`` for the spline
    basis defined by ``knots``, and optionally ``z_total``. ``pi`` overrides the
    design's first-order inclusion probabilities for the weights ``d = 1/pi``.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray | None = None
    pi: np.ndarray | None = None
    labels: np.ndarray | None = None
    frame_z: np.ndarray | None = None
    N: int | None = None
    knots: KnotVector | None = None
    basis_totals: np.ndarray | None = None
    z_total: float | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.x = np.asarray(self.x, dtype=float).ravel()
        n = self.y.size
        if self.x.size != n:
            raise ValueError("y and x differ in length")
        for name in ("z", "pi", "labels"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float if name != "labels" else int).ravel()
                if v.size != n:
                    raise ValueError(f"{name} has {v.size} entries, expected {n}")
                setattr(self, name, v)
        if self.frame_z is not None:
            self.frame_z = np.asarray(self.frame_z, dtype=float).ravel()

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class AnalysisConfig:
    K: int = 15
    m: int = 3
    alpha: float = 0.05
    strategies: tuple[Strategy, ...] = ALL_STRATEGIES
    tol: float = 1e-10
    max_iter: int = 50
    ridge: float = 0.0

    def __post_init__(self):
        if self.K < 0 or self.m < 1:
            raise ValueError(f"need K >= 0 and m >= 1, got K={self.K}, m={self.m}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        object.__setattr__(
            self, "strategies", tuple(s if isinstance(s, Strategy) else Strategy.parse(s) for s in self.strategies)
        )


class StepError(OddsCalError):
    def __init__(self, step: str, cause: Exception):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class StrategyResult:
    strategy: Strategy
    beta: Beta | None = None
    or_hat: float | None = None
    var_beta1: float | None = None
    ci: OrInterval | None = None
    weights: CalibrationWeights | None = None
    fit: LogisticFit | None = None
    uhat: LinearizedVariables | None = None
    variance: VarianceReport | None = None
    error: StepError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        out = {"strategy": self.strategy.value}
        if self.error is not None:
            out["error"] = {
                "step": self.error.step,
                "type": type(self.error.cause).__name__,
                "message": str(self.error.cause),
            }
            return out
        out.update(
            beta0=self.beta.b0,
            beta1=self.beta.b1,
            **{"or": self.or_hat},
            var_beta1=self.var_beta1,
            ci_or={"lo": self.ci.lo, "hi": self.ci.hi, "alpha": self.ci.alpha},
            diagnostics={
                "constraint_gap": self.weights.constraint_gap,
                "negative_weights": self.weights.negative_weights,
                "gram_condition": _finite_or_none(self.weights.gram_condition),
                "iterations": self.fit.iterations,
                "converged": self.fit.converged,
                "score_norm": self.fit.score_norm,
                "damped_steps": self.fit.damped_steps,
            },
            error=None,
        )
        return out


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


@dataclass
class OrReport:
    results: dict[Strategy, StrategyResult]
    config: AnalysisConfig
    n: int
    N: int
    basis: BSplineBasis | None = None
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, key) -> StrategyResult:
        return self.results[Strategy.parse(key) if isinstance(key, str) else key]

    @property
    def gains(self) -> dict[Strategy, float]:
        ht = self.results.get(Strategy.HT)
        if ht is None or not ht.ok or not ht.var_beta1:
            return {}
        return {
            s: 1.0 - r.var_beta1 / ht.var_beta1
            for s, r in self.results.items()
            if s is not Strategy.HT and r.ok
        }

    @property
    def failed(self) -> list[StrategyResult]:
        return [r for r in self.results.values() if not r.ok]

    def to_dict(self) -> dict:
        kv = self.basis.knots if self.basis is not None else None
        return {
            "n": self.n,
            "N": self.N,
            "config": {
                "knots": self.config.K,
                "degree": self.config.m,
                "alpha": self.config.alpha,
                "strategies": [s.value for s in self.config.strategies],
            },
            "basis": None
            if kv is None
            else {
                "interior_knots": list(kv.interior),
                "boundary": [kv.boundary_low, kv.boundary_high],
                "q": kv.q,
            },
            "results": [r.to_dict() for r in self.results.values()],
            "gains": {s.value: g for s, g in self.gains.items()},
        }


@dataclass
class _Auxiliary:
    basis: BSplineBasis | None
    t_b: np.ndarray | None
    N: int
    t_z: float | None
    basis_error: Exception | None = None


def _auxiliary(data: SurveyDataset, design: SamplingDesign, config: AnalysisConfig, needs_basis: bool) -> _Auxiliary:
    N = data.N or (data.frame_z.size if data.frame_z is not None else None) or design.N
    basis = t_b = None
    basis_error = None
    try:
        if data.knots is not None:
            basis = BSplineBasis(data.knots)
        elif data.frame_z is not None and needs_basis:
            basis = make_basis(data.frame_z, config.K, config.m)
    except (OddsCalError, ValueError) as exc:
        basis_error = exc
    if basis is not None:
        if data.basis_totals is not None:
            t_b = np.asarray(data.basis_totals, dtype=float)
            if t_b.size != basis.q:
                raise ValueError(f"{t_b.size} basis totals supplied for a basis of size {basis.q}")
        elif data.frame_z is not None:
            t_b = basis_totals(basis, data.frame_z)

    t_z = data.z_total
    if t_z is None and data.frame_z is not None:
        t_z = float(data.frame_z.sum())
    if t_z is None and t_b is not None and basis.order >= 2:
        # sum_j greville_j B_j(z) = z reproduces the z total from the basis totals
        t_z = float(basis.knots.greville() @ t_b)
    return _Auxiliary(basis, t_b, int(N), t_z, basis_error)


def _run_strategy(strategy, data, design, config, d, aux) -> StrategyResult:
    res = StrategyResult(strategy)
    step = "1:basis"
    try:
        Bs = None
        if strategy is Strategy.BSPLINE:
            if aux.basis_error is not None:
                raise aux.basis_error
            if data.z is None or aux.basis is None or aux.t_b is None:
                raise ValueError("B-spline calibration needs z and a population frame or basis totals")
            Bs = basis_matrix(aux.basis, data.z)
        elif strategy is Strategy.GREG:
            if data.z is None or aux.t_z is None:
                raise ValueError("GREG calibration needs z and its population total")
            Bs = greg_design(data.z)

        step = "2:weights"
        if strategy is Strategy.HT:
            res.weights = ht_weights(d)
        elif strategy is Strategy.GREG:
            res.weights = linear_greg_weights(d, data.z, aux.N, aux.t_z, ridge=config.ridge)
        else:
            res.weights = bspline_weights(d, Bs, aux.t_b, ridge=config.ridge)

        step = "2:fit"
        res.fit = fit(data.y, data.x, res.weights.weights, tol=config.tol, max_iter=config.max_iter)
        res.beta = res.fit.beta
        res.or_hat = float(np.exp(res.beta.b1))

        if strategy is Strategy.HT:
            step = "5:variance"
            res.variance = sandwich_variance(data.y, data.x, res.fit, design, data.labels)
        else:
            step = "3:linearize"
            res.uhat = linearized(data.y, data.x, res.fit)
            step = "4:residualize"
            res.variance = variance_beta1(res.uhat, d, Bs, design, data.labels, strategy)
        res.var_beta1 = res.variance.var_beta1
        res.ci = ci_or(res.beta.b1, res.var_beta1, config.alpha)
    except (OddsCalError, ValueError, np.linalg.LinAlgError) as exc:
        res.error = StepError(step, exc)
    return res


def run(data: SurveyDataset, design: SamplingDesign, config: AnalysisConfig | None = None,
        strategies: Sequence[Strategy] | None = None) -> OrReport:
    """Estimate the odds ratio under each requested weighting strategy.

    A failing strategy is recorded in its result (with the failing step) and
    does not stop the others.
    """
    config = config or AnalysisConfig()
    if strategies is not None:
        config = replace(config, strategies=tuple(strategies))
    strategies = config.strategies
    if data.pi is not None:
        pi = data.pi
    else:
        labels = data.labels if data.labels is not None else np.arange(data.n)
        pi = design.inclusion(labels)
    d = 1.0 / pi

    aux = _auxiliary(data, design, config, Strategy.BSPLINE in strategies)
    results = {s: _run_strategy(s, data, design, config, d, aux) for s in strategies}
    return OrReport(results, config, data.n, aux.N, aux.basis)

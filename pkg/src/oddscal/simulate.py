"""Synthetic finite populations and Monte Carlo checks of the estimators."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bspline import basis_totals, make_basis
from .calibration import Strategy
from .design import SRSWOR, SamplingDesign
from .errors import MonteCarloAborted
from .logistic import Beta, fit, mu
from .pipeline import AnalysisConfig, SurveyDataset, run

__all__ = [
    "Link",
    "PopulationSpec",
    "Population",
    "McResult",
    "StrategySummary",
    "generate_population",
    "monte_carlo",
    "BUILTIN_SPECS",
    "builtin_spec",
    "MAX_FAILURE_RATE",
    "run_spec",
]

MAX_FAILURE_RATE = 0.05
LINK_FORMS = ("zero", "linear", "step", "logistic", "sine")


@dataclass(frozen=True)
class Link:
    """A scalar function of z: ``a + b * g(z)``.

    ``form`` selects ``g``: ``"zero"`` (the function is identically ``a``),
    ``"linear"`` (``z``), ``"step"`` (``1{z > c}``), ``"logistic"``
    (``mu(s * (z - c))``, a smoothed step) or ``"sine"`` (``sin(s * z)``).
    """

    form: str = "zero"
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if self.form not in LINK_FORMS:
            raise ValueError(f"unknown link form {self.form!r}; choose from {LINK_FORMS}")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.form == "zero":
            g = np.zeros_like(z)
        elif self.form == "linear":
            g = z
        elif self.form == "step":
            g = (z > self.c).astype(float)
        elif self.form == "logistic":
            g = mu(self.s * (z - self.c))
        else:
            g = np.sin(self.s * z)
        return self.a + self.b * g

    @classmethod
    def from_dict(cls, d: dict | None) -> "Link":
        return cls() if d is None else cls(**d)


@dataclass(frozen=True)
class PopulationSpec:
    """Recipe for a synthetic population.

    ``z`` is drawn from ``z_model``; the risk variable is binary with
    ``P(x = 1 | z) = mu(x_link(z))`` or continuous as ``x_link(z) + noise``;
    the response follows ``logit P(y = 1) = b0 + b1 * x + y_link(z) +
    x * y_x_link(z)``. With the default zero links this is the plain logistic
    model in ``x``.
    """

    N: int
    beta_true: Beta = Beta(0.0, 0.0)
    z_model: dict = field(default_factory=lambda: {"dist": "normal", "mean": 0.0, "sd": 1.0})
    x_kind: str = "binary"
    x_link: Link = Link()
    x_noise_sd: float = 1.0
    y_link: Link = Link()
    y_x_link: Link = Link()
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if self.N < 100:
            raise ValueError(f"population size must be at least 100, got {self.N}")
        if self.x_kind not in ("binary", "continuous"):
            raise ValueError(f"x_kind must be 'binary' or 'continuous', got {self.x_kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationSpec":
        d = dict(d)
        b = d.pop("beta_true", (0.0, 0.0))
        x_model = dict(d.pop("x_model", {"kind": "binary"}))
        kind = x_model.pop("kind", "binary")
        noise = x_model.pop("noise_sd", 1.0)
        return cls(
            N=int(d["N"]),
            beta_true=Beta(float(b[0]), float(b[1])),
            z_model=d.get("z_model", {"dist": "normal", "mean": 0.0, "sd": 1.0}),
            x_kind=kind,
            x_link=Link.from_dict(x_model or None),
            x_noise_sd=float(noise),
            y_link=Link.from_dict(d.get("y_z_model")),
            y_x_link=Link.from_dict(d.get("y_xz_model")),
            seed=int(d.get("seed", 0)),
            name=d.get("name", "custom"),
        )


@dataclass
class Population:
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    spec: PopulationSpec | None = None

    @property
    def N(self) -> int:
        return self.y.size


def _draw_z(model: dict, N: int, rng: np.random.Generator) -> np.ndarray:
    dist = model.get("dist", "normal")
    if dist == "normal":
        return rng.normal(model.get("mean", 0.0), model.get("sd", 1.0), N)
    if dist == "uniform":
        return rng.uniform(model.get("low", 0.0), model.get("high", 1.0), N)
    if dist == "lognormal":
        return rng.lognormal(model.get("mean", 0.0), model.get("sd", 1.0), N)
    raise ValueError(f"unknown z distribution {dist!r}")


def generate_population(spec: PopulationSpec) -> Population:
    rng = np.random.default_rng(spec.seed)
    z = _draw_z(spec.z_model, spec.N, rng)
    if spec.x_kind == "binary":
        x = (rng.random(spec.N) < mu(spec.x_link(z))).astype(float)
    else:
        x = spec.x_link(z) + spec.x_noise_sd * rng.standard_normal(spec.N)
    eta = spec.beta_true.b0 + spec.beta_true.b1 * x + spec.y_link(z) + x * spec.y_x_link(z)
    y = (rng.random(spec.N) < mu(eta)).astype(float)
    return Population(y, x, z, spec)


# Two reference populations. In "chis-like" the auxiliary variable (an age on
# 18..60) is unrelated to x and y. In "labor-like" z plays last year's
# standardized wage: it raises the odds of a degree (x) and, for non-graduates,
# almost determines this year's high-wage indicator y, while graduates' y barely
# depends on it. The cell a unit falls in, and so its linearized variable, is
# then a strongly nonlinear function of z.
#
# The labor-like Monte Carlo uses K = 5: with n = 250, larger bases (q = 18 at
# K = 15) make the linearization variance estimator visibly optimistic.
BUILTIN_SPECS: dict[str, dict[str, Any]] = {
    "chis-like": {
        "name": "chis-like",
        "N": 5000,
        "n": 250,
        "R": 2000,
        "seed": 2009,
        "beta_true": [1.2, -0.6],
        "z_model": {"dist": "uniform", "low": 18.0, "high": 60.0},
        "x_model": {"kind": "binary", "form": "zero", "a": -1.2},
        "y_z_model": None,
        "y_xz_model": None,
        "strategies": ["HT", "LinearGREG", "BSpline"],
        "K": 15,
        "m": 3,
        "alpha": 0.05,
    },
    "labor-like": {
        "name": "labor-like",
        "N": 5000,
        "n": 250,
        "R": 2000,
        "seed": 2000,
        "beta_true": [0.0, -0.3],
        "z_model": {"dist": "normal", "mean": 0.0, "sd": 1.0},
        "x_model": {"kind": "binary", "form": "linear", "a": 0.5, "b": 1.5},
        "y_z_model": {"form": "linear", "b": 9.0},
        "y_xz_model": {"form": "linear", "b": -10.5},
        "strategies": ["HT", "LinearGREG", "BSpline"],
        "K": 5,
        "m": 3,
        "alpha": 0.05,
    },
}


def builtin_spec(name: str) -> dict[str, Any]:
    try:
        return copy.deepcopy(BUILTIN_SPECS[name])
    except KeyError:
        raise ValueError(f"unknown built-in spec {name!r}; choose from {sorted(BUILTIN_SPECS)}") from None


@dataclass
class StrategySummary:
    strategy: Strategy
    replicates: int
    failures: int
    mean_beta1: float
    empirical_var_beta1: float
    mean_estimated_var: float
    coverage: float
    gain: float | None = None  # 1 - empirical variance / HT empirical variance

    @property
    def variance_ratio(self) -> float:
        if self.empirical_var_beta1 == 0:
            return 1.0 if self.mean_estimated_var == 0 else float("inf")
        return self.mean_estimated_var / self.empirical_var_beta1

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "replicates": self.replicates,
            "failures": self.failures,
            "mean_beta1": self.mean_beta1,
            "empirical_var_beta1": self.empirical_var_beta1,
            "mean_estimated_var": self.mean_estimated_var,
            "variance_ratio": self.variance_ratio,
            "coverage": self.coverage,
            "gain": self.gain,
        }


@dataclass
class McResult:
    R: int
    population_beta: Beta
    alpha: float
    summaries: dict[Strategy, StrategySummary]
    failures: int = 0
    seed: int | None = None

    def __getitem__(self, key) -> StrategySummary:
        return self.summaries[Strategy.parse(key) if isinstance(key, str) else key]

    @property
    def population_or(self) -> float:
        return float(np.exp(self.population_beta.b1))

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "seed": self.seed,
            "alpha": self.alpha,
            "failures": self.failures,
            "population_beta0": self.population_beta.b0,
            "population_beta1": self.population_beta.b1,
            "population_or": self.population_or,
            "strategies": [s.to_dict() for s in self.summaries.values()],
        }


# containment slack for degenerate (zero-width) intervals, e.g. under a census
_CONTAIN_RTOL = 1e-12


def monte_carlo(pop: Population, design: SamplingDesign, config: AnalysisConfig | None = None,
                R: int = 1000, seed: int = 0,
                strategies: Sequence[Strategy] | None = None) -> McResult:
    """Repeat sampling and estimation ``R`` times.

    Replicate ``r`` uses the sample drawn with the ``r``-th child of
    ``numpy.random.SeedSequence(seed)``, so the outcome does not depend on the
    order in which replicates are evaluated. Coverage is measured against the
    finite-population coefficient from the census fit.

    Raises
    ------
    MonteCarloAborted
        If more than 5% of the replicates fail for some strategy.
    """
    if R < 2:
        raise ValueError("need at least two replicates")
    config = config or AnalysisConfig()
    strategies = tuple(strategies) if strategies is not None else config.strategies
    if design.N != pop.N:
        raise ValueError(f"design population size {design.N} != population size {pop.N}")

    pop_beta = fit(pop.y, pop.x, np.ones(pop.N)).beta
    pop_or = float(np.exp(pop_beta.b1))
    basis = make_basis(pop.z, config.K, config.m) if Strategy.BSPLINE in strategies else None
    t_b = basis_totals(basis, pop.z) if basis is not None else None
    t_z = float(pop.z.sum())

    children = np.random.SeedSequence(seed).spawn(R)
    beta1 = {s: np.full(R, np.nan) for s in strategies}
    var = {s: np.full(R, np.nan) for s in strategies}
    covered = {s: np.zeros(R, dtype=bool) for s in strategies}
    for r, child in enumerate(children):
        idx = design.draw(child)
        data = SurveyDataset(
            y=pop.y[idx], x=pop.x[idx], z=pop.z[idx], labels=idx, N=pop.N,
            knots=basis.knots if basis is not None else None,
            basis_totals=t_b, z_total=t_z,
        )
        report = run(data, design, config, strategies)
        for s in strategies:
            res = report[s]
            if not res.ok:
                continue
            beta1[s][r] = res.beta.b1
            var[s][r] = res.var_beta1
            covered[s][r] = res.ci.contains(pop_or, _CONTAIN_RTOL)

    summaries = {}
    total_fail = 0
    for s in strategies:
        ok = ~np.isnan(beta1[s])
        fails = int(R - ok.sum())
        total_fail = max(total_fail, fails)
        if fails > MAX_FAILURE_RATE * R:
            raise MonteCarloAborted(f"{fails} of {R} replicates failed for {s.value}")
        b = beta1[s][ok]
        summaries[s] = StrategySummary(
            strategy=s,
            replicates=int(ok.sum()),
            failures=fails,
            mean_beta1=float(b.mean()),
            empirical_var_beta1=float(b.var(ddof=1)) if b.size > 1 else 0.0,
            mean_estimated_var=float(var[s][ok].mean()),
            coverage=float(covered[s][ok].mean()),
        )
    ht = summaries.get(Strategy.HT)
    if ht is not None and ht.empirical_var_beta1 > 0:
        for s, summ in summaries.items():
            summ.gain = 1.0 - summ.empirical_var_beta1 / ht.empirical_var_beta1
    return McResult(R, pop_beta, config.alpha, summaries, total_fail, seed)


def run_spec(spec_dict: dict, R: int | None = None, seed: int | None = None) -> McResult:
    """Generate the population described by a spec dict and run the Monte Carlo."""
    pop_spec = PopulationSpec.from_dict(spec_dict)
    pop = generate_population(pop_spec)
    config = AnalysisConfig(
        K=int(spec_dict.get("K", 15)),
        m=int(spec_dict.get("m", 3)),
        alpha=float(spec_dict.get("alpha", 0.05)),
        strategies=tuple(spec_dict.get("strategies", ("HT", "LinearGREG", "BSpline"))),
    )
    design = SRSWOR(pop.N, int(spec_dict["n"]))
    R = int(spec_dict["R"]) if R is None else R
    seed = int(spec_dict.get("seed", 0)) if seed is None else seed
    return monte_carlo(pop, design, config, R, seed)

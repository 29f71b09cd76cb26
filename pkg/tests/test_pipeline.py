import numpy as np
import pytest

from oddscal.bspline import basis_matrix, basis_totals, make_basis
from oddscal.calibration import Strategy, bspline_weights, linear_greg_weights
from oddscal.design import SRSWOR, ht_variance_estimate
from oddscal.logistic import fit
from oddscal.oddsratio import ci_or, linearized, residualize
from oddscal.pipeline import AnalysisConfig, SurveyDataset, run
from oddscal.simulate import PopulationSpec, builtin_spec, generate_population


@pytest.fixture(scope="module")
def sample():
    pop = generate_population(PopulationSpec.from_dict(builtin_spec("labor-like")))
    design = SRSWOR(pop.N, 250)
    s = design.draw(11)
    return pop, design, s


def test_replays_steps_by_hand(sample):
    pop, design, s = sample
    data = SurveyDataset(y=pop.y[s], x=pop.x[s], z=pop.z[s], labels=s, frame_z=pop.z)
    report = run(data, design)
    d = np.full(s.size, pop.N / s.size)

    basis = make_basis(pop.z, 15, 3)
    Bs = basis_matrix(basis, pop.z[s])
    w = bspline_weights(d, Bs, basis_totals(basis, pop.z)).weights
    res = fit(pop.y[s], pop.x[s], w)
    _, e = residualize(linearized(pop.y[s], pop.x[s], res).u1, Bs, d)
    v = ht_variance_estimate(e, design)
    ci = ci_or(res.beta.b1, v)

    r = report["BSpline"]
    assert r.beta.b1 == pytest.approx(res.beta.b1, abs=1e-12)
    assert r.var_beta1 == pytest.approx(v, rel=1e-10)
    assert (r.ci.lo, r.ci.hi) == pytest.approx((ci.lo, ci.hi), rel=1e-10)

    wg = linear_greg_weights(d, pop.z[s], pop.N, pop.z.sum()).weights
    assert report[Strategy.GREG].beta.b1 == pytest.approx(fit(pop.y[s], pop.x[s], wg).beta.b1, abs=1e-12)
    assert report["HT"].beta.b1 == pytest.approx(fit(pop.y[s], pop.x[s], d).beta.b1, abs=1e-12)
    assert set(report.gains) == {Strategy.GREG, Strategy.BSPLINE}


def test_totals_input_matches_frame(sample):
    pop, design, s = sample
    basis = make_basis(pop.z, 15, 3)
    a = run(SurveyDataset(y=pop.y[s], x=pop.x[s], z=pop.z[s], frame_z=pop.z), design)
    b = run(SurveyDataset(y=pop.y[s], x=pop.x[s], z=pop.z[s], N=pop.N, knots=basis.knots,
                          basis_totals=basis_totals(basis, pop.z)), design)
    for st in Strategy:
        assert a[st].beta.b1 == pytest.approx(b[st].beta.b1, abs=1e-10)
        assert a[st].var_beta1 == pytest.approx(b[st].var_beta1, rel=1e-8)


def test_failure_is_isolated(sample):
    pop, design, s = sample
    data = SurveyDataset(y=pop.y[s], x=pop.x[s], z=pop.z[s], frame_z=pop.z)
    report = run(data, design, AnalysisConfig(K=240))  # more knots than the sample can support
    assert report["HT"].ok and report["LinearGREG"].ok
    bad = report["BSpline"]
    assert not bad.ok and bad.error.step == "2:weights"
    assert report.failed == [bad]
    assert "error" in bad.to_dict()


def test_degenerate_basis_fails_at_step_one():
    y = np.array([0, 1, 0, 1, 1, 0.0])
    x = np.array([0, 0, 1, 1, 0, 1.0])
    report = run(SurveyDataset(y=y, x=x, z=np.ones(6), frame_z=np.ones(20)), SRSWOR(20, 6))
    assert report["HT"].ok
    assert report["BSpline"].error.step == "1:basis"
    assert report["LinearGREG"].error.step == "2:weights"


def test_strategy_override_reflected_in_config(sample):
    pop, design, s = sample
    report = run(SurveyDataset(y=pop.y[s], x=pop.x[s], labels=s), design, strategies=[Strategy.HT])
    assert list(report.results) == [Strategy.HT]
    assert report.config.strategies == (Strategy.HT,)
    assert report.to_dict()["config"]["strategies"] == ["HT"]


def test_pi_column_overrides_design(sample):
    pop, design, s = sample
    data = SurveyDataset(y=pop.y[s], x=pop.x[s], pi=np.full(s.size, design.pi))
    ref = run(SurveyDataset(y=pop.y[s], x=pop.x[s]), design, strategies=["HT"])
    assert run(data, design, strategies=["HT"])["HT"].beta.b1 == pytest.approx(ref["HT"].beta.b1)


def test_config_validation():
    with pytest.raises(ValueError):
        AnalysisConfig(K=-1)
    with pytest.raises(ValueError):
        AnalysisConfig(alpha=0)
    assert AnalysisConfig(strategies=("bspline",)).strategies == (Strategy.BSPLINE,)
    cfg = AnalysisConfig()
    assert (cfg.K, cfg.m, cfg.alpha) == (15, 3, 0.05)


def test_dataset_validation():
    with pytest.raises(ValueError):
        SurveyDataset(y=[0, 1], x=[0])
    with pytest.raises(ValueError):
        SurveyDataset(y=[0, 1], x=[0, 1], z=[1.0])


def test_report_dict_keys(sample):
    pop, design, s = sample
    out = run(SurveyDataset(y=pop.y[s], x=pop.x[s], z=pop.z[s], frame_z=pop.z), design).to_dict()
    r = out["results"][0]
    assert {"strategy", "beta0", "beta1", "or", "var_beta1", "ci_or", "diagnostics"} <= set(r)
    assert {"constraint_gap", "negative_weights", "iterations"} <= set(r["diagnostics"])
    assert set(r["ci_or"]) == {"lo", "hi", "alpha"}

import math

import numpy as np
import pytest
from scipy import stats

from unseenlp.montecarlo import (
    CSV_SCHEMA, RiskReport, SimConfig, de_theta, estimate_risk, fit_rate_exponent, poprec_prior,
    sample_bernoulli_subsample, sample_poissonized_species, species_probabilities,
)


def test_bernoulli_extremes():
    theta = np.array([3, 1, 7, 2])
    assert sample_bernoulli_subsample(theta, 0.0, 0).counts.tolist() == [0, 0, 0, 0]
    assert sample_bernoulli_subsample(theta, 1.0, 0).counts.tolist() == theta.tolist()


def test_bernoulli_goodness_of_fit():
    h = sample_bernoulli_subsample(np.full(20000, 3), 0.5, 11)
    obs = np.bincount(h.counts, minlength=4)
    exp = stats.binom.pmf(np.arange(4), 3, 0.5) * h.counts.size
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_species_sampler_edges():
    p = np.full(50, 0.02)
    hist, u = sample_poissonized_species(p, 0, 2.0, 0)
    assert hist.total == 0 and u == 0
    hist, u = sample_poissonized_species(p, 30, 0.0, 0)
    assert u == 0
    hist, u = sample_poissonized_species(p, 30, 1.0, 0, fixed_size=True)
    assert hist.total == 30


def test_species_sampler_mean():
    p = species_probabilities("twolevel:0.5:3", 400)
    n, r = 400.0, 1.5
    rng = np.random.default_rng(3)
    us = np.array([sample_poissonized_species(p, n, r, rng)[1] for _ in range(2000)])
    want = float(np.sum(np.exp(-n * p) * -np.expm1(-r * n * p)))
    assert abs(us.mean() - want) <= 3 * us.std(ddof=1) / math.sqrt(us.size)


def test_sources():
    assert de_theta("uniform_urn:4", 100, 0.5, None).tolist() == [4] * 25
    th = de_theta("geometric_urn:0.7", 1000, 0.5, None)
    assert th.sum() == 1000 and th.min() >= 1
    p = species_probabilities("logsq:1", 1000)
    assert p.sum() == pytest.approx(1.0) and p.size == round(1000 / 49)
    assert poprec_prior("binomial:0.5", 4) == pytest.approx([1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16])
    with pytest.raises(ValueError):
        species_probabilities("zipf", 10)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig("species", (100, 50), 1.0)
    with pytest.raises(ValueError):
        SimConfig("distinct_elements", (100,), 0.5, estimator="good_toulmin")
    with pytest.raises(ValueError):
        SimConfig("nope", (100,), 0.5)


def test_oracle_and_zero():
    cfg = SimConfig("distinct_elements", (40, 80), 0.5, ("uniform_urn:2",), replications=10, estimator="oracle")
    assert all(r["mse"] == 0.0 for r in estimate_risk(cfg).rows)
    cfg = SimConfig("distinct_elements", (40, 80), 0.5, ("uniform_urn:2",), replications=10, estimator="zero")
    for r in estimate_risk(cfg).rows:
        assert r["mse"] == pytest.approx(0.25)
    cfg = SimConfig("population_recovery", (50,), 0.5, ("binomial:0.5",), replications=10, d=4, estimator="zero")
    assert estimate_risk(cfg).mse(50) == pytest.approx(1 / 256)


def test_fit_rate_exponent():
    assert fit_rate_exponent([(10, 1.0), (100, 0.1)]) == (pytest.approx(-1.0), 0.0)
    sl, se = fit_rate_exponent([(10, 2.0), (100, 2.0), (1000, 2.0)])
    assert sl == pytest.approx(0.0, abs=1e-12) and se == pytest.approx(0.0, abs=1e-12)
    ns = [100, 400, 1600, 6400]
    sl, se = fit_rate_exponent([(n, 3 * n ** (-2 / 3)) for n in ns])
    assert sl == pytest.approx(-2 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate_exponent([(10, 1.0)])


def test_deterministic_across_jobs():
    cfg = SimConfig("distinct_elements", (50, 100, 200), 0.5, ("uniform_urn:1", "geometric_urn:0.7"),
                    replications=150, seed=9)
    a, b = estimate_risk(cfg), estimate_risk(cfg, jobs=2)
    assert a.to_csv() == b.to_csv()
    again = estimate_risk(cfg)
    assert again.rows == a.rows


def test_worst_row_and_csv():
    cfg = SimConfig("distinct_elements", (50, 100, 200), 0.5, ("uniform_urn:1", "uniform_urn:4"),
                    replications=20, seed=1)
    rep = estimate_risk(cfg)
    for n in cfg.n_values:
        assert rep.mse(n) == max(rep.mse(n, s) for s in cfg.sources)
    assert set(rep.slopes) == {"uniform_urn:1", "uniform_urn:4", "worst"}
    lines = rep.to_csv().splitlines()
    assert lines[0] == CSV_SCHEMA
    assert lines[1] == "problem,n,param,source,replications,mse,stderr,slope,slope_stderr"


def test_no_slopes_below_three_points():
    cfg = SimConfig("distinct_elements", (50, 100), 0.5, ("uniform_urn:1",), replications=10)
    rep = estimate_risk(cfg)
    assert rep.slopes == {}
    assert rep.to_csv().splitlines()[1] == "problem,n,param,source,replications,mse,stderr"


def test_estimator_type_checked():
    cfg = SimConfig("species", (100,), 1.0, ("uniform:1",), replications=4)
    with pytest.raises(TypeError):
        estimate_risk(cfg, {100: object()})


def test_report_mse_missing():
    with pytest.raises(KeyError):
        RiskReport("species", 1.0).mse(10)

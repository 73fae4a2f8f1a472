import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from robustmech.prior import (REFERENCE_PRIORS, TRIANGLE, ContinuousPrior, DiscretePrior,
                              InvalidPriorError, as_discrete, discretize, eval_density,
                              load_prior, mean, parse_prior_spec, prior_from_dict)

ALL = list(REFERENCE_PRIORS.values()) + [TRIANGLE, ContinuousPrior("beta", (0.7, 1.3))]


@pytest.mark.parametrize("pr", ALL, ids=lambda p: p.label)
def test_density_integrates_to_one(pr):
    val, _ = integrate.quad(pr.density, 0, 1, points=pr.breakpoints() or None)
    assert val == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("pr", ALL, ids=lambda p: p.label)
def test_closed_forms_match_quadrature(pr):
    for x in (0.13, 0.5, 0.87):
        F, _ = integrate.quad(pr.density, 0, x)
        M, _ = integrate.quad(lambda t: t * pr.density(t), 0, x)
        assert pr.cdf(x) == pytest.approx(F, abs=1e-10)
        assert pr.partial_mean(x) == pytest.approx(M, abs=1e-10)
        IF, _ = integrate.quad(pr.cdf, 0, x)
        assert pr.integrated_cdf(x) == pytest.approx(IF, abs=1e-10)


def test_beta_matches_scipy():
    pr = ContinuousPrior("beta", (2.0, 4.0))
    x = np.linspace(0.01, 0.99, 9)
    np.testing.assert_allclose(pr.density(x), stats.beta(2, 4).pdf(x), rtol=1e-12)
    assert pr.mean() == pytest.approx(1 / 3, abs=1e-12)


def test_reference_means():
    expect = [0.5, 1 / 3, 2 / 3, 0.5, 1 / 3, 2 / 3, 8 / 9]
    got = [mean(p) for p in REFERENCE_PRIORS.values()]
    np.testing.assert_allclose(got, expect, atol=1e-10)
    assert TRIANGLE.mean() == pytest.approx(0.5, abs=1e-12)


def test_density_outside_domain():
    pr = ContinuousPrior("uniform")
    assert pr.density(-0.1) == 0.0 and pr.density(1.1) == 0.0
    with pytest.raises(InvalidPriorError):
        eval_density(pr, 1.5)


@given(n=st.integers(1, 400))
@settings(max_examples=40, deadline=None)
def test_discretize_is_a_distribution(n):
    d = discretize(ContinuousPrior("beta", (2.0, 2.0)), 1.0 / n)
    assert d.weights.size == n + 1
    assert abs(d.weights.sum() - 1) <= 1e-12 and d.weights.min() >= 0


def test_discretize_mean_converges():
    pr = ContinuousPrior("beta", (8.0, 1.0))
    assert abs(discretize(pr, 1 / 200).mean() - pr.mean()) < 1e-3
    assert abs(discretize(pr, 1 / 2000).mean() - pr.mean()) < 1e-4


def test_discrete_validation():
    with pytest.raises(InvalidPriorError):
        DiscretePrior(0.3, np.ones(4) / 4)
    with pytest.raises(InvalidPriorError):
        DiscretePrior(0.5, np.array([0.5, 0.6, -0.1]))
    with pytest.raises(InvalidPriorError):
        DiscretePrior(0.5, np.array([0.5, 0.5, 0.1]))
    with pytest.raises(InvalidPriorError):
        DiscretePrior(0.5, np.ones(4) / 4)


def test_continuous_validation():
    with pytest.raises(InvalidPriorError):
        ContinuousPrior("gamma")
    with pytest.raises(InvalidPriorError):
        ContinuousPrior("beta", (1.0,))
    with pytest.raises(InvalidPriorError):
        ContinuousPrior("beta", (-1.0, 2.0))


def test_parse_and_roundtrip(tmp_path):
    assert parse_prior_spec("beta:2,4") == ContinuousPrior("beta", (2.0, 4.0))
    assert parse_prior_spec("powercdf:2").cdf(0.5) == pytest.approx(0.25)
    assert parse_prior_spec("concavecdf").mean() == pytest.approx(1 / 3)
    d = discretize(ContinuousPrior("uniform"), 0.1)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(d.to_dict()))
    back = load_prior(path)
    np.testing.assert_array_equal(back.weights, d.weights)
    assert parse_prior_spec(f"file:{path}").mean() == pytest.approx(d.mean())
    assert prior_from_dict(TRIANGLE.to_dict()) == TRIANGLE
    assert as_discrete(d) is d

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from robustmech.bce import (SIZE_CAP, BandRates, EmbedError, SizeCapError,
                            complementary_slackness, lemma1_check, markov_embed,
                            max_dual_revenue, min_bce_revenue, transition_matrices,
                            verify_bce, virtual_revenue, virtual_revenue_table)
from robustmech.mechanism import (build_exponential, build_generalized_two_buyer,
                                  build_posted_price, zero_mechanism)
from robustmech.prior import ContinuousPrior, DiscretePrior, discretize

from helpers import random_mechanism, random_rates

UNIFORM = ContinuousPrior("uniform")


def _reference_min_revenue(mech, prior):
    """Worst-case BCE revenue from an explicitly enumerated program."""
    vals, p = prior.values, prior.weights
    profiles = list(itertools.product(*(range(n) for n in mech.messages)))
    idx = {(iv, m): r for r, (iv, m) in enumerate(itertools.product(range(vals.size), profiles))}
    n = len(idx)
    c = np.zeros(n)
    for (iv, m), r in idx.items():
        c[r] = sum(mech.P[(i,) + m] for i in range(mech.buyers))
    rows = []
    for i in range(mech.buyers):
        for own in range(mech.messages[i]):
            for dev in range(mech.messages[i]):
                if dev == own:
                    continue
                row = np.zeros(n)
                for (iv, m), r in idx.items():
                    if m[i] != own:
                        continue
                    md = m[:i] + (dev,) + m[i + 1:]
                    u = vals[iv] * mech.q[(i,) + m] - mech.P[(i,) + m]
                    ud = vals[iv] * mech.q[(i,) + md] - mech.P[(i,) + md]
                    row[r] = -(u - ud)
                rows.append(row)
    A_eq = np.zeros((vals.size, n))
    for (iv, m), r in idx.items():
        A_eq[iv, r] = 1.0
    res = linprog(c, A_ub=np.array(rows), b_ub=np.zeros(len(rows)), A_eq=A_eq, b_eq=p,
                  bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


def test_posted_price_uniform():
    prior = discretize(UNIFORM, 1 / 100)
    mech = build_posted_price(0.25)
    primal, bce = min_bce_revenue(mech, prior)
    dual, cert = max_dual_revenue(mech, prior)
    assert primal == pytest.approx(0.125, abs=1e-9)
    assert dual == pytest.approx(primal, abs=1e-9)
    rep = verify_bce(bce, mech, prior)
    assert rep.ok(1e-9) and rep.revenue == pytest.approx(primal, abs=1e-12)
    assert complementary_slackness(bce, cert, mech, prior) <= 1e-9


def test_zero_mechanism_has_zero_revenue():
    prior = discretize(UNIFORM, 1 / 10)
    val, _ = min_bce_revenue(zero_mechanism(2, 2), prior)
    assert val == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("I,k,a,X", [(1, 3, 3.0, 0.05), (2, 2, 1.0, 0.05), (2, 3, 2.0, 0.02)])
def test_exponential_duality_and_band_bound(I, k, a, X):
    prior = discretize(UNIFORM, 1 / 10)
    mech = build_exponential(I, k, a, X)
    primal, bce = min_bce_revenue(mech, prior)
    dual, cert = max_dual_revenue(mech, prior)
    assert abs(primal - dual) <= 1e-9
    rev = virtual_revenue_table(mech, BandRates(a), prior.values)
    bound = prior.weights @ rev.reshape(rev.shape[0], -1).min(axis=1)
    assert primal >= bound - 1e-9
    assert complementary_slackness(bce, cert, mech, prior) <= 1e-8


@pytest.mark.parametrize("seed", range(6))
def test_matches_enumerated_program(seed):
    rng = np.random.default_rng(seed)
    I, k = 1 + seed % 2, 1 + seed % 3
    mech = random_mechanism(rng, I, k, pay_low=0.0, pay_high=0.6)
    prior = DiscretePrior(0.25, rng.dirichlet(np.ones(5)))
    val, _ = min_bce_revenue(mech, prior)
    assert val == pytest.approx(_reference_min_revenue(mech, prior), abs=1e-8)
    assert min_bce_revenue(mech, prior, backend="highs")[0] == pytest.approx(val, abs=1e-8)


def test_certificate_is_dual_feasible():
    prior = discretize(UNIFORM, 1 / 8)
    mech = build_generalized_two_buyer(2, 2.0, 0.2, -0.1)
    dual, cert = max_dual_revenue(mech, prior)
    assert np.all(cert.alpha >= -1e-12)
    rev = virtual_revenue_table(mech, cert.alpha, prior.values)
    slack = rev.reshape(rev.shape[0], -1).min(axis=1) - cert.gamma
    assert slack.min() >= -1e-9
    assert prior.weights @ cert.gamma == pytest.approx(dual, abs=1e-10)
    primal, _ = min_bce_revenue(mech, prior)
    assert primal == pytest.approx(dual, abs=1e-8)


def test_virtual_revenue_scalar_matches_table():
    mech = build_exponential(2, 2, 1.5, 0.1)
    table = virtual_revenue_table(mech, BandRates(1.5), [0.3])
    assert virtual_revenue(0.3, (1, 2), mech, BandRates(1.5)) == pytest.approx(table[0, 1, 2])
    dense = virtual_revenue_table(mech, BandRates(1.5).as_alpha(mech), [0.3])
    np.testing.assert_allclose(dense, table, atol=1e-15)


def test_size_cap():
    mech = build_exponential(3, 6, 3.0, 0.05)
    with pytest.raises(SizeCapError):
        min_bce_revenue(mech, discretize(UNIFORM, 1 / 200))
    assert mech.n_profiles * 201 > SIZE_CAP


@given(seed=st.integers(0, 2**31 - 1), I=st.integers(1, 2), k=st.integers(1, 3),
       scale=st.sampled_from([0.1, 1.0, 10.0]))
@settings(max_examples=100, deadline=None)
def test_min_virtual_revenue_below_value(seed, I, k, scale):
    rng = np.random.default_rng(seed)
    mech = random_mechanism(rng, I, k)
    assert lemma1_check(mech, random_rates(rng, I, k, scale), np.linspace(0, 1, 11)) <= 1e-9


def test_transition_matrices():
    mech = build_exponential(2, 2, 2.0, 0.1)
    alpha = random_rates(np.random.default_rng(3), 2, 2)
    a, mats = transition_matrices(mech, alpha)
    for M in mats:
        np.testing.assert_allclose(M.sum(axis=1), 1.0)
        assert np.all(M >= 0) and np.all(np.diag(M) > 0)
    with pytest.raises(ValueError):
        transition_matrices(mech, alpha, c=0.0)


@pytest.mark.parametrize("seed", range(8))
def test_markov_embedding(seed):
    rng = np.random.default_rng(seed)
    I, k = 1 + seed % 2, 1 + seed % 3
    mech = random_mechanism(rng, I, k)
    alpha = random_rates(rng, I, k)
    emb = markov_embed(mech, alpha, eps=1e-6)
    vals = np.linspace(0, 1, 11)
    old = virtual_revenue_table(mech, alpha, vals).reshape(11, -1).min(axis=1)
    new = virtual_revenue_table(emb.mechanism, emb.rates, vals)
    interior = new[(slice(None),) + (slice(0, -1),) * I].reshape(11, -1)
    assert np.all(interior.min(axis=1) >= old - 1e-9)
    assert emb.slack <= 1e-6
    assert emb.mechanism.messages == (emb.k_new + 1,) * I
    m2, rates, slack = emb
    assert rates.a == emb.rates.a and slack == emb.slack


def test_embedding_too_few_messages():
    rng = np.random.default_rng(0)
    mech = random_mechanism(rng, 1, 3)
    with pytest.raises(EmbedError) as info:
        markov_embed(mech, random_rates(rng, 1, 3, 5.0), k_new=1, eps=1e-12)
    assert info.value.slack > 1e-12


def test_bce_dump_layout():
    prior = discretize(UNIFORM, 1 / 4)
    mech = build_exponential(2, 1, 1.0, 0.1)
    _, bce = min_bce_revenue(mech, prior)
    d = bce.to_dict(0.5)
    assert len(d["mu"]) == 5 and len(d["mu"][0]) == 4 and d["value"] == 0.5
    assert d["mu"][2][1] == bce.mu[2, 1, 0]

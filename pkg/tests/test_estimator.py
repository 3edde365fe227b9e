import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from bassmle import (
    BassMLE,
    ConstantPolicy,
    ConstantResponse,
    ExponentialResponse,
    FeedbackPolicy,
    InsufficientDataError,
    MarketParams,
    ObservedPath,
    PricePath,
    SimConfig,
    TransformedParams,
    fit_mle,
    fit_mle_natural,
    log_likelihood,
    profile_alpha,
    score_and_curvature,
    simulate,
)
from bassmle.estimator import natural_log_likelihood
from oracles import mp_alpha_maximizer

ONE = ConstantResponse()


def sim(alpha=0.3, beta=0.1, m=1000, n=500, seed=0, x=ONE, policy=None):
    cfg = SimConfig(MarketParams(alpha, beta, m), x, policy or ConstantPolicy(0.0), target_n=n, seed=seed)
    return simulate(cfg)


def test_profile_alpha_worked_example():
    path = ObservedPath(2, 1.0, [0.5], PricePath([(0, 1.0, 0.0)]))
    assert profile_alpha(path, 1.0, ONE) == pytest.approx(1 / 3.25, rel=1e-12)


def test_profile_alpha_matches_numeric_search():
    for seed in range(5):
        path = sim(m=80, n=30, seed=seed)
        for beta_p in (0.1, 1.0, 7.0):
            ref = mp_alpha_maximizer(80, path.adoption_times, path.horizon, beta_p)
            assert profile_alpha(path, beta_p, ONE) == pytest.approx(ref, abs=1e-8)


def test_longer_quiet_horizon_lowers_profile():
    path = ObservedPath(5, 1.0, [0.2, 0.6], PricePath([(0, 1.0, 0.0)]))
    longer = ObservedPath(5, 2.0, [0.2, 0.6], PricePath([(0, 2.0, 0.0)]))
    assert profile_alpha(longer, 0.8, ONE) < profile_alpha(path, 0.8, ONE)


def test_profile_alpha_needs_adoptions():
    with pytest.raises(InsufficientDataError):
        profile_alpha(ObservedPath(5, 1.0, [], PricePath([(0, 1.0, 0.0)])), 1.0, ONE)


def test_profile_dominates_random_alpha():
    rng = np.random.default_rng(4)
    path = sim(m=300, n=120, seed=3, x=ExponentialResponse(), policy=FeedbackPolicy(0.2, 0.01))
    x = ExponentialResponse()
    for beta_p in (1e-3, 0.5, 3.0, 40.0):
        best = log_likelihood(path, (profile_alpha(path, beta_p, x), beta_p), x)
        for a in np.exp(rng.uniform(-6, 3, 100)):
            assert best >= log_likelihood(path, (a, beta_p), x)


def test_insufficient_data():
    pp = PricePath([(0, 1.0, 0.0)])
    for times in ([], [0.3]):
        with pytest.raises(InsufficientDataError):
            fit_mle(ObservedPath(4, 1.0, times, pp), ONE)
        with pytest.raises(InsufficientDataError):
            fit_mle_natural(ObservedPath(4, 1.0, times, pp), ONE)


def interior_fits(count=40, **kw):
    out = []
    seed = 0
    while len(out) < count:
        path = sim(seed=seed, **kw)
        res = fit_mle(path, ONE)
        if res.converged and not res.at_boundary:
            out.append((path, res))
        seed += 1
    return out


@pytest.fixture(scope="module")
def interior():
    return interior_fits()


def test_first_order_conditions(interior):
    for path, res in interior:
        grad = score_and_curvature(path, res.tp_hat, ONE).gradient
        assert np.max(np.abs(grad)) < 1e-8
        assert res.alpha_p == pytest.approx(profile_alpha(path, res.beta_p, ONE), rel=1e-10)


def test_fit_is_deterministic(interior):
    path, res = interior[0]
    again = fit_mle(path, ONE)
    assert again.to_dict() == res.to_dict()


def test_transformed_and_natural_agree(interior):
    for path, res in interior:
        nat = fit_mle_natural(path, ONE)
        assert nat.converged and not nat.at_boundary
        assert nat.alpha == pytest.approx(res.alpha, rel=1e-6)
        assert nat.beta == pytest.approx(res.beta, rel=1e-6)
        assert nat.loglik == pytest.approx(res.loglik, abs=1e-8)
        assert natural_log_likelihood(path, res.alpha, res.beta) == pytest.approx(res.loglik, abs=1e-8)


def test_boundary_fit_is_flagged():
    # an early burst then silence pushes the imitation estimate to the lower edge
    path = ObservedPath(50, 40.0, [0.01, 0.02, 0.03], PricePath([(0, 40.0, 0.0)]))
    res = fit_mle(path, ONE)
    assert res.at_boundary and not res.converged
    # the natural supremum sits where the censored state's rate reaches zero
    nat = fit_mle_natural(path, ONE)
    assert nat.at_boundary and not nat.converged
    assert math.isnan(nat.alpha_p)
    assert nat.alpha + nat.beta * 3 / 50 == pytest.approx(0.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 40))
def test_mle_beats_truth(seed, n):
    path = sim(m=60, n=n, seed=seed)
    res = fit_mle(path, ONE)
    truth = log_likelihood(path, TransformedParams(0.2, 0.5), ONE)
    assert res.loglik >= truth - 1e-9
    nat = fit_mle_natural(path, ONE)
    assert nat.loglik >= res.loglik - 1e-7


def test_estimator_api():
    est = BassMLE(x="exp", tol=1e-9)
    assert est.get_params()["x"] == "exp"
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    path = sim(m=200, n=150, seed=1, x=ExponentialResponse())
    twin.fit(path)
    assert twin.m_ == 200
    assert twin.score(path) == pytest.approx(twin.loglik_)
    with pytest.raises(ValueError):
        BassMLE(parametrization="polar").fit(path)


def test_natural_coverage_three_se():
    """Natural-scale beta within 3 reported standard errors in >= 99% of 500 replications."""
    params = MarketParams(0.3, 0.1, 1000)
    hits = 0
    for child in np.random.SeedSequence(2024).spawn(500):
        path = simulate(SimConfig(params, ONE, ConstantPolicy(0.0), target_n=500, seed=child))
        res = BassMLE(parametrization="natural").fit(path)
        hits += abs(res.beta_ - 0.1) <= 3 * res.std_errors_[1]
    assert hits / 500 >= 0.99


def test_consistency_trend_reference():
    """Median |beta_p_hat - beta_p| is non-increasing in n, one inversion allowed."""
    params = MarketParams(0.3, 0.1, 2000)
    medians = []
    for n in (25, 50, 100, 200, 400):
        errs = [
            abs(fit_mle(simulate(SimConfig(params, ONE, ConstantPolicy(0.0), target_n=n,
                                           seed=np.random.SeedSequence(7, spawn_key=(n, r)))),
                        ONE).beta_p - 0.5)
            for r in range(200)
        ]
        medians.append(float(np.median(errs)))
    inversions = sum(b > a for a, b in zip(medians, medians[1:]))
    print("medians", medians)
    assert inversions <= 1

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bassmle import (
    ConstantPolicy,
    ConstantResponse,
    ExponentialResponse,
    FeedbackPolicy,
    MarketParams,
    ObservedPath,
    PricePath,
    SchedulePolicy,
    SimConfig,
    TransformedParams,
    factor_density,
    fisher_sandwich,
    hellinger_gap,
    log_factor_densities,
    log_likelihood,
    log_likelihood_parts,
    score_and_curvature,
    simulate,
)
from bassmle.likelihood import curvature_constant, exponential_affinity, theorem_r
from oracles import (
    central_gradient,
    exponential_density_mass,
    exponential_hellinger_quadrature,
    hand_loglik,
)

ONE = ConstantResponse()
EXP = ExponentialResponse()


def worked_path():
    return ObservedPath(2, 1.0, [0.5], PricePath([(0, 1.0, 0.0)]))


def random_paths(count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        m = int(rng.integers(2, 60))
        params = MarketParams(rng.uniform(0.2, 1.0), rng.uniform(0.01, 0.19), m)
        kind = k % 3
        if kind == 0:
            policy, x = ConstantPolicy(rng.normal()), ONE
        elif kind == 1:
            policy, x = FeedbackPolicy(rng.normal(), 0.1), EXP
        else:
            b = np.sort(rng.uniform(0, 8, 3))
            policy = SchedulePolicy(PricePath([(0, b[0], 0.3), (b[0], b[1], -0.2), (b[1], 9.0, 1.0)]))
            x = EXP
        path = simulate(SimConfig(params, x, policy, horizon=float(rng.uniform(0.5, 8)), seed=k))
        out.append((path, x))
    return out


def test_worked_example():
    # by hand: events ln 2 + ln 2; compensator 2*2*0.5 + 1*2.5*0.5 = 3.25
    val = log_likelihood(worked_path(), TransformedParams(1.0, 1.0), ONE)
    assert val == pytest.approx(math.log(4) - 3.25, rel=1e-12)
    assert val == pytest.approx(-1.8637, abs=5e-5)


def test_no_adoptions():
    m, a, b, t = 30, 0.4, 0.7, 2.5
    path = ObservedPath(m, t, [], PricePath([(0, t, 1.0)]))
    assert log_likelihood(path, (a, b), ONE) == pytest.approx(-m * a * (1 + b) * t, rel=1e-14)


def test_parts_invariants():
    for path, x in random_paths(30, seed=1):
        parts = log_likelihood_parts(path, TransformedParams(0.3, 0.8), x)
        assert parts.compensator >= 0
        assert parts.total == parts.event_terms - parts.compensator


def test_matches_sum_of_factors():
    rng = np.random.default_rng(5)
    for path, x in random_paths(1000, seed=2):
        tp = TransformedParams(*np.exp(rng.uniform(-2, 1, 2)))
        total = log_likelihood(path, tp, x)
        by_factor = log_factor_densities(path, tp, x).sum()
        assert by_factor == pytest.approx(total, rel=1e-12, abs=1e-12)


def test_matches_quadrature_oracle():
    for path, x in random_paths(12, seed=3):
        tp = TransformedParams(0.45, 0.6)
        pp = path.price_path

        def x_of_time(s, pp=pp, x=x):
            return x(pp.price_at(min(max(s, 0.0), pp.horizon)))

        ref = hand_loglik(path.m, tp.alpha_p, tp.beta_p, path.adoption_times, path.horizon, x_of_time)
        assert log_likelihood(path, tp, x) == pytest.approx(ref, rel=1e-7, abs=1e-7)


def test_factor_density_examples():
    path = worked_path()
    tp = TransformedParams(1.0, 1.0)
    # rate out of state 0 is 2 * 1 * 2 = 4, gap 0.5
    assert factor_density(0, path, tp, ONE) == pytest.approx(4 * math.exp(-2), rel=1e-14)
    at_last = ObservedPath(2, 0.5, [0.5], PricePath([(0, 0.5, 0.0)]))
    assert factor_density(1, at_last, tp, ONE) == 1.0
    with pytest.raises(IndexError):
        factor_density(2, path, tp, ONE)


@pytest.mark.parametrize("i,price", [(0, 0.0), (3, 1.2), (9, -0.7)])
def test_factor_density_normalizes(i, price):
    m, tp = 10, TransformedParams(0.35, 1.4)
    rate = (m - i) * tp.alpha_p * (1 + (1 + i / m) * tp.beta_p)
    assert exponential_density_mass(rate, EXP(price)) == pytest.approx(1.0, abs=1e-10)
    # and the library's factor integrates to the same mass over the gap
    times = np.linspace(1e-9, 60.0 / (rate * EXP(price)), 20001)
    vals = []
    for g in times:
        ts = list(np.arange(1, i + 1) * 1e-3) + [i * 1e-3 + g]
        path = ObservedPath(m, ts[-1], ts, PricePath([(0, ts[-1], price)]))
        vals.append(factor_density(i, path, tp, EXP))
    assert np.trapezoid(vals, times) == pytest.approx(1.0, abs=1e-6)


def test_gradient_vs_finite_differences():
    rng = np.random.default_rng(8)
    for path, x in random_paths(40, seed=4):
        theta = np.exp(rng.uniform(-1.5, 0.5, 2))
        grad = score_and_curvature(path, theta, x).gradient
        fd = central_gradient(lambda th: log_likelihood(path, th, x), theta)
        assert np.linalg.norm(grad - fd) <= 1e-6 * max(1.0, np.linalg.norm(grad))


def test_hessian_exact_alpha_and_symmetric():
    rng = np.random.default_rng(9)
    for path, x in random_paths(40, seed=5):
        theta = np.exp(rng.uniform(-1.5, 0.5, 2))
        hess = score_and_curvature(path, theta, x).hessian
        assert hess[0, 0] == -path.n / theta[0] ** 2
        assert hess[0, 1] == hess[1, 0]
        fd = np.array([central_gradient(
            lambda th: score_and_curvature(path, th, x).gradient[k], theta) for k in range(2)])
        np.testing.assert_allclose(hess, fd, rtol=1e-5, atol=1e-5)


def test_concave_in_alpha():
    for path, x in random_paths(20, seed=6):
        if path.n == 0:
            continue
        grid = np.linspace(0.05, 3.0, 60)
        vals = np.array([log_likelihood(path, (a, 0.7), x) for a in grid])
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        assert np.all(second < 0)


def test_score_has_zero_mean_small():
    params = MarketParams(0.5, 0.2, 15)
    tp0 = TransformedParams(0.3, 2.0 / 3.0)
    grads = np.array([
        score_and_curvature(simulate(SimConfig(params, ONE, ConstantPolicy(0.0), horizon=2.0, seed=s)),
                            tp0, ONE).gradient
        for s in range(2000)
    ])
    se = grads.std(axis=0, ddof=1) / math.sqrt(len(grads))
    assert np.all(np.abs(grads.mean(axis=0)) < 3 * se)


def test_fisher_sandwich_examples():
    s = fisher_sandwich(10, 10**9, 1.0)
    assert s.lower == pytest.approx(10 / 9)
    assert s.upper == pytest.approx(10.0)
    assert s.exact == pytest.approx(2.5, rel=1e-7)
    one = fisher_sandwich(1, 1, 0.8)
    assert one.exact == pytest.approx(4 / (1 + 2 * 0.8) ** 2)
    assert one.exact == pytest.approx(4 * one.lower)


@settings(max_examples=1000)
@given(m=st.integers(1, 5000), frac=st.floats(0, 1), beta_p=st.floats(1e-4, 1e4))
def test_fisher_sandwich_orders(m, frac, beta_p):
    n = max(1, int(frac * m))
    s = fisher_sandwich(n, m, beta_p)
    assert s.lower <= s.exact <= s.upper


def test_fisher_sandwich_domain():
    with pytest.raises(ValueError):
        fisher_sandwich(0, 5, 1.0)
    with pytest.raises(ValueError):
        fisher_sandwich(6, 5, 1.0)
    with pytest.raises(ValueError):
        fisher_sandwich(2, 5, 0.0)


def test_affinity_worked_example():
    a = exponential_affinity(1.0, 2.0)
    assert a == pytest.approx(2 * math.sqrt(2) / 3, rel=1e-15)
    assert 2 - 2 * a == pytest.approx(0.11438, abs=1e-5)
    assert exponential_hellinger_quadrature(1.0, 2.0) == pytest.approx(2 - 2 * a, abs=1e-8)


@pytest.mark.parametrize("mu1,mu2", [(0.3, 0.31), (5.0, 9.0), (2.0, 2.0), (1e-2, 3e-2)])
def test_closed_form_hellinger_vs_quadrature(mu1, mu2):
    closed = 2 - 2 * exponential_affinity(mu1, mu2)
    assert exponential_hellinger_quadrature(mu1, mu2) == pytest.approx(closed, abs=1e-8)


def test_hellinger_gap_zero_delta():
    g = hellinger_gap(3, TransformedParams(0.2, 0.5), 100, 0.0, 1, 0.0, ONE)
    assert g.hellinger_sq == 0.0 and g.kl_bound == 0.0 and g.affinity == 1.0 and g.holds


def test_hellinger_gap_domain():
    tp = TransformedParams(0.2, 0.5)
    with pytest.raises(ValueError):
        hellinger_gap(0, tp, 10, 0.21, 1, 0.0, ONE)
    with pytest.raises(ValueError):
        hellinger_gap(0, tp, 10, -0.01, 2, 0.0, ONE)
    with pytest.raises(ValueError):
        hellinger_gap(10, tp, 10, 0.1, 2, 0.0, ONE)
    hellinger_gap(0, tp, 10, 0.5, 2, 0.0, ONE)


@settings(max_examples=300)
@given(a=st.floats(0.01, 5), b=st.floats(0.01, 5), frac=st.floats(0, 1),
       direction=st.sampled_from([1, 2]), m=st.integers(2, 3000), price=st.floats(-2, 2),
       data=st.data())
def test_hellinger_exp_step_and_scale_free(a, b, frac, direction, m, price, data):
    j = data.draw(st.integers(0, m - 1))
    tp = TransformedParams(a, b)
    delta = frac * (a if direction == 1 else b)
    g = hellinger_gap(j, tp, m, delta, direction, price, EXP)
    assert g.affinity <= math.exp(-g.hellinger_sq / 2) + 1e-15
    assert g.holds == (g.hellinger_sq >= g.kl_bound)
    # only the rate ratio matters, so price and market size drop out up to j/m
    same = hellinger_gap(2 * j, tp, 2 * m, delta, direction, 0.0, ONE)
    assert same.hellinger_sq == pytest.approx(g.hellinger_sq, rel=1e-9, abs=1e-300)


def test_hellinger_bound_on_reference_grid():
    tp = TransformedParams(0.2, 0.5)
    for direction, base in ((1, tp.alpha_p), (2, tp.beta_p)):
        for j in range(0, 2000, 25):
            for frac in np.linspace(0.0, 1.0, 21):
                g = hellinger_gap(j, tp, 2000, frac * base, direction, 0.0, ONE)
                assert g.holds, (direction, j, frac)


def test_hellinger_bound_fails_for_fast_markets():
    """The integral is scale free while the bound grows like sqrt(alpha_p (1 + beta_p))."""
    g = hellinger_gap(0, TransformedParams(0.875, 2.0), 2, 2.0, 2, 0.0, ONE)
    assert g.hellinger_sq == pytest.approx(0.0635083, abs=1e-6)
    assert g.kl_bound == pytest.approx(0.0648074, abs=1e-6)
    assert not g.holds


def test_theorem_constants():
    tp = TransformedParams(0.2, 0.5)
    assert theorem_r(tp) == pytest.approx(1 / 0.3)
    assert theorem_r(tp, "closing") == pytest.approx(1 / 0.9)
    assert curvature_constant(tp, 1, 1.0) == pytest.approx(0.16)
    assert curvature_constant(tp, 2, 1.0) == pytest.approx(4.0)

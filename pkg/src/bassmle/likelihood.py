"""Exact path log-likelihood in the transformed parameters, its factors and derivatives.

Also hosts the closed-form diagnostics behind the error bound: the Fisher
information sandwich and the exponential Hellinger gap.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import TransformedParams
from .pricing import integrate_x_many
from .validation import check_path, check_transformed


@dataclass(frozen=True)
class PathStats:
    """Sufficient statistics of an observed path for the likelihood.

    ``exposure[i]`` is ``int x(r_s) ds`` over the sojourn in state ``i``
    (``i = n`` is the censored tail up to the horizon) and ``log_x_events``
    holds ``ln x`` of the price in force just before each adoption.
    """

    n: int
    m: int
    exposure: np.ndarray
    log_x_events: np.ndarray

    @classmethod
    def from_path(cls, path, x):
        path = check_path(path)
        n = path.n
        bounds = np.concatenate(([0.0], path.adoption_times, [path.horizon]))
        exposure = integrate_x_many(path.price_path, x, bounds[:-1], bounds[1:])
        if n:
            prices = path.price_path.price_before(path.adoption_times)
            log_x = np.log(np.asarray(x(prices), dtype=float).reshape(-1))
        else:
            log_x = np.zeros(0)
        return cls(n, path.m, exposure, log_x)

    @property
    def states(self):
        return np.arange(self.n + 1)

    @property
    def imitation_weights(self):
        """``1 + i/m`` for the event states ``i = 0..n-1``."""
        return 1.0 + np.arange(self.n) / self.m

    @property
    def remaining(self):
        return (self.m - self.states).astype(float)

    @property
    def constant(self):
        """Parameter-free event terms: ``sum ln x + sum ln(m - i)``."""
        return float(self.log_x_events.sum() + np.log(self.remaining[: self.n]).sum())

    @property
    def base_exposure(self):
        """``sum (m - i) * I_i`` over all states."""
        return float(np.dot(self.remaining, self.exposure))

    @property
    def weighted_exposure(self):
        """``sum (m - i) * (1 + i/m) * I_i`` over all states."""
        return float(np.dot(self.remaining * (1.0 + self.states / self.m), self.exposure))

    def compensator_coef(self, beta_p):
        """``S(beta_p)``: the compensator divided by ``alpha_p``."""
        return self.base_exposure + self.weighted_exposure * beta_p


class LikelihoodParts(NamedTuple):
    event_terms: float
    compensator: float
    total: float


class ScoreAndCurvature(NamedTuple):
    gradient: np.ndarray
    hessian: np.ndarray


def _stats(path, x):
    return path if isinstance(path, PathStats) else PathStats.from_path(path, x)


def log_likelihood_parts(path, tp, x):
    """Event terms, compensator and their difference."""
    tp = check_transformed(tp)
    st = _stats(path, x)
    a, b = tp.alpha_p, tp.beta_p
    i = st.states
    rates = st.remaining * a * (1.0 + (1.0 + i / st.m) * b)
    compensator = float(np.dot(rates, st.exposure))
    c = st.imitation_weights
    events = st.constant + st.n * math.log(a) + float(np.log1p(c * b).sum())
    return LikelihoodParts(events, compensator, events - compensator)


def log_likelihood(path, tp, x):
    """Log-likelihood of a fully observed path at ``tp = (alpha_p, beta_p)``.

    Parameters
    ----------
    path : ObservedPath or PathStats
    tp : TransformedParams or pair of floats
    x : PriceResponse

    Returns
    -------
    float
        Includes the ``ln x`` and ``ln(m - i)`` constants.
    """
    return log_likelihood_parts(path, tp, x).total


def factor_density(i, path, tp, x):
    """Conditional density of the ``(i+1)``-th adoption time given the past.

    For ``i == n`` it is the probability of no adoption in ``(t_n, horizon]``.
    """
    tp = check_transformed(tp)
    st = _stats(path, x)
    if isinstance(i, bool) or int(i) != i or not 0 <= i <= st.n:
        raise IndexError(f"factor index must lie in [0, {st.n}], got {i}")
    rate = (st.m - i) * tp.alpha_p * (1.0 + (1.0 + i / st.m) * tp.beta_p)
    survival = math.exp(-rate * st.exposure[i])
    if i == st.n:
        return survival
    return rate * math.exp(st.log_x_events[i]) * survival


def log_factor_densities(path, tp, x):
    """``ln f_i`` for ``i = 0..n``, evaluated factor by factor."""
    tp = check_transformed(tp)
    st = _stats(path, x)
    out = np.empty(st.n + 1)
    for i in range(st.n + 1):
        rate = (st.m - i) * tp.alpha_p * (1.0 + (1.0 + i / st.m) * tp.beta_p)
        out[i] = -rate * st.exposure[i]
        if i < st.n:
            out[i] += math.log(rate) + st.log_x_events[i]
    return out


def score_and_curvature(path, tp, x):
    """Analytic gradient and Hessian of the log-likelihood in ``(alpha_p, beta_p)``."""
    tp = check_transformed(tp)
    st = _stats(path, x)
    a, b = tp.alpha_p, tp.beta_p
    c = st.imitation_weights
    w = c / (1.0 + c * b)
    grad = np.array([st.n / a - st.compensator_coef(b), w.sum() - a * st.weighted_exposure])
    cross = -st.weighted_exposure
    hess = np.array([[-st.n / a**2, cross], [cross, -float(np.dot(w, w))]])
    return ScoreAndCurvature(grad, hess)


class FisherSandwich(NamedTuple):
    lower: float
    exact: float
    upper: float


def fisher_sandwich(n, m, beta_p):
    """Curvature of ``sum_d ln xi(d)`` in ``beta_p`` with its crude bounds.

    ``exact = sum_{d=1}^n (1+d/m)^2 / (1+(1+d/m) beta_p)^2`` lies between
    ``n / (1+2 beta_p)^2`` and ``4n / (1+beta_p)^2`` because ``1 + d/m`` is in
    ``(1, 2]`` for ``d <= m``.
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if isinstance(m, bool) or int(m) != m or m < n:
        raise ValueError(f"m must be an integer >= n, got {m}")
    if not beta_p > 0:
        raise ValueError(f"beta_p must be > 0, got {beta_p}")
    c = 1.0 + np.arange(1, n + 1) / m
    exact = float(np.sum((c / (1.0 + c * beta_p)) ** 2))
    return FisherSandwich(n / (1.0 + 2.0 * beta_p) ** 2, exact, 4.0 * n / (1.0 + beta_p) ** 2)


def theorem_r(tp, variant="body"):
    """The constant ``R`` of the Hellinger/KL step.

    ``"body"`` gives ``1/(alpha_p + alpha_p*beta_p)``; ``"closing"`` gives the
    other printed form ``1/(2*alpha_p + beta_p)``.
    """
    tp = check_transformed(tp)
    if variant == "body":
        return 1.0 / (tp.alpha_p * (1.0 + tp.beta_p))
    if variant == "closing":
        return 1.0 / (2.0 * tp.alpha_p + tp.beta_p)
    raise ValueError(f"unknown R variant {variant!r}")


def curvature_constant(tp, direction, delta_bar=1.0):
    """``C_I`` for perturbations along ``alpha_p`` (1) or ``beta_p`` (2)."""
    tp = check_transformed(tp)
    if direction == 1:
        return (tp.alpha_p * (1.0 + delta_bar)) ** 2
    if direction == 2:
        return (1.0 + tp.beta_p * (1.0 + delta_bar)) ** 2
    raise ValueError(f"direction must be 1 or 2, got {direction}")


class HellingerGap(NamedTuple):
    hellinger_sq: float
    kl_bound: float
    affinity: float
    holds: bool


def exponential_affinity(mu1, mu2):
    """``int sqrt(f1 f2)`` for two exponential densities with rates ``mu1``, ``mu2``."""
    return 2.0 * math.sqrt(mu1 * mu2) / (mu1 + mu2)


def hellinger_gap(j, tp, m, delta, direction, price, x, delta_bar=1.0):
    """Hellinger integral between the next-adoption densities at ``tp`` and ``tp + delta*e``.

    With a constant price both densities are exponential, so the affinity is
    ``2 sqrt(mu1 mu2) / (mu1 + mu2)`` and ``hellinger_sq = 2 - 2 * affinity``
    (the integral of the squared root difference). ``kl_bound`` is the lower
    bound ``delta^2 / (4 sqrt(R) C_I)``; ``holds`` reports whether
    ``hellinger_sq >= kl_bound``.
    """
    tp = check_transformed(tp)
    if isinstance(j, bool) or int(j) != j or not 0 <= j < m:
        raise ValueError(f"state j must be an integer in [0, {m}), got {j}")
    if direction not in (1, 2):
        raise ValueError(f"direction must be 1 or 2, got {direction}")
    base = tp.alpha_p if direction == 1 else tp.beta_p
    if not 0 <= delta <= delta_bar * base:
        raise ValueError(f"delta must lie in [0, {delta_bar * base}], got {delta}")
    moved = (
        TransformedParams(tp.alpha_p + delta, tp.beta_p)
        if direction == 1
        else TransformedParams(tp.alpha_p, tp.beta_p + delta)
    )
    xr = float(x(price))

    def rate(p):
        return (m - j) * p.alpha_p * (1.0 + (1.0 + j / m) * p.beta_p) * xr

    mu1, mu2 = rate(tp), rate(moved)
    c = 1.0 + j / m
    # rate difference taken analytically so tiny deltas do not cancel to zero
    step = delta * (1.0 + c * tp.beta_p) if direction == 1 else tp.alpha_p * c * delta
    diff = (m - j) * step * xr
    affinity = exponential_affinity(mu1, mu2)
    hellinger_sq = 2.0 * (diff / (math.sqrt(mu1) + math.sqrt(mu2))) ** 2 / (mu1 + mu2)
    bound = delta**2 / (4.0 * math.sqrt(theorem_r(tp)) * curvature_constant(tp, direction, delta_bar))
    return HellingerGap(hellinger_sq, bound, affinity, hellinger_sq >= bound)

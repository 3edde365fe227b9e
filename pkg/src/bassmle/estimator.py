"""Maximum-likelihood fitting of the Bass model from a fully observed path."""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .likelihood import PathStats, log_likelihood, score_and_curvature
from .model import MarketParams, TransformedParams
from .validation import InsufficientDataError, check_path, check_response


@dataclass
class FitResult:
    """Outcome of one fit.

    ``std_errors`` and ``covariance`` refer to the fit's own parametrization:
    ``(alpha_p, beta_p)`` for ``"transformed"`` and ``(alpha, beta)`` for
    ``"natural"``.
    """

    parametrization: str
    alpha_p: float
    beta_p: float
    alpha: float
    beta: float
    loglik: float
    std_errors: np.ndarray
    covariance: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    at_boundary: bool = False
    bracket: tuple = None
    m: int = None
    message: str = ""
    trace: list = field(default_factory=list, repr=False)

    @property
    def tp_hat(self):
        return TransformedParams(self.alpha_p, self.beta_p)

    @property
    def natural_hat(self):
        return MarketParams(self.alpha, self.beta, self.m)

    def to_dict(self):
        se = [float(v) for v in self.std_errors]
        out = {
            "parametrization": self.parametrization,
            "alpha_p_hat": self.alpha_p,
            "beta_p_hat": self.beta_p,
            "alpha_hat": self.alpha,
            "beta_hat": self.beta,
            "loglik": self.loglik,
            "converged": bool(self.converged),
            "at_boundary": bool(self.at_boundary),
            "iterations": int(self.iterations),
            "gradient_norm": self.gradient_norm,
        }
        if self.parametrization == "transformed":
            out["std_err_alpha_p"], out["std_err_beta_p"] = se
            out["bracket"] = list(self.bracket) if self.bracket else None
        else:
            out["std_err_alpha"], out["std_err_beta"] = se
        return out


def _stats(path, x):
    if isinstance(path, PathStats):
        return path
    return PathStats.from_path(check_path(path), check_response(x))


def profile_alpha(path, beta_p, x):
    """Maximizer of the log-likelihood in ``alpha_p`` for fixed ``beta_p``.

    The ``alpha_p`` terms are ``n ln(alpha_p) - alpha_p S(beta_p)``, so the
    maximizer is ``n / S(beta_p)``.
    """
    st = _stats(path, x)
    if st.n == 0:
        raise InsufficientDataError("no adoptions: the alpha_p maximizer sits at the 0 boundary")
    if not beta_p > 0:
        raise ValueError(f"beta_p must be > 0, got {beta_p}")
    return st.n / st.compensator_coef(beta_p)


class _Profile:
    """Profiled log-likelihood ``g(beta_p) = L(n / S(beta_p), beta_p)`` up to constants."""

    def __init__(self, st):
        self.n = st.n
        self.c = st.imitation_weights
        self.a0 = st.base_exposure
        self.b0 = st.weighted_exposure

    def value(self, b):
        b = np.asarray(b, dtype=float)
        s = self.a0 + self.b0 * b
        logs = np.log1p(np.multiply.outer(b, self.c)).sum(axis=-1)
        return -self.n * np.log(s) + logs

    def deriv(self, b):
        w = self.c / (1.0 + self.c * b)
        return float(w.sum() - self.n * self.b0 / (self.a0 + self.b0 * b))

    def deriv2(self, b):
        w = self.c / (1.0 + self.c * b)
        s = self.a0 + self.b0 * b
        return float(-np.dot(w, w) + self.n * (self.b0 / s) ** 2)


def _locate(prof, lo, hi, n_grid, max_expansions):
    """Coarse log-spaced scan, doubling the upper edge while the maximum sits on it."""
    for expansions in range(max_expansions + 1):
        grid = np.geomspace(lo, hi, n_grid)
        k = int(np.argmax(prof.value(grid)))
        if k < n_grid - 1 or expansions == max_expansions:
            return grid, k, hi
        hi *= 2.0
    raise AssertionError("unreachable")


def _golden(f, a, b, tol, max_iter):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol * max(abs(a), abs(b), 1e-300) and it < max_iter:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        it += 1
    return (a + b) / 2.0, a, b, it


def _refine(prof, a, b, start, tol, max_iter):
    """Safeguarded Newton on ``g'`` inside ``[a, b]``; returns (beta_p, a, b, iterations, ok)."""
    da, db = prof.deriv(a), prof.deriv(b)
    it = 0
    if not (da > 0 > db):
        # no sign change to exploit: shrink by golden section first
        start, a, b, it = _golden(lambda v: float(prof.value(v)), a, b, 1e-6, max_iter)
        da, db = prof.deriv(a), prof.deriv(b)
        if not (da > 0 > db):
            return start, a, b, it, abs(prof.deriv(start)) < tol
    x = start if a < start < b else 0.5 * (a + b)
    while it < max_iter:
        it += 1
        d = prof.deriv(x)
        if abs(d) < tol:
            return _polish(prof, x, d, a, b), a, b, it, True
        if d > 0:
            a = x
        else:
            b = x
        if b - a <= 1e-10 * b:
            x = 0.5 * (a + b)
            return x, a, b, it, abs(prof.deriv(x)) < tol or b - a <= 1e-10 * b
        d2 = prof.deriv2(x)
        step = x - d / d2 if d2 < 0 else math.nan
        x = step if a < step < b else 0.5 * (a + b)
    return x, a, b, it, abs(prof.deriv(x)) < tol


def _polish(prof, x, d, a, b):
    """A few extra Newton steps; on flat ridges a small ``g'`` still leaves ``x`` loose."""
    for _ in range(3):
        d2 = prof.deriv2(x)
        if not d2 < 0:
            break
        cand = x - d / d2
        if not a <= cand <= b:
            break
        dc = prof.deriv(cand)
        if abs(dc) >= abs(d):
            break
        x, d = cand, dc
    return x


def fit_mle(path, x, bracket=(1e-6, 10.0), tol=1e-8, max_iter=200, max_expansions=10, n_grid=32):
    """Maximum-likelihood estimate of ``(alpha_p, beta_p)`` via the profile in ``beta_p``.

    Parameters
    ----------
    path : ObservedPath
        Needs at least two adoptions.
    x : PriceResponse
    bracket : (float, float)
        Initial ``beta_p`` search interval; the upper edge doubles up to
        ``max_expansions`` times while the maximum sits on it.
    tol : float
        Target for ``|d g / d beta_p|``.

    Returns
    -------
    FitResult
    """
    x = check_response(x)
    st = _stats(check_path(path, min_adoptions=2), x)
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError(f"bracket must satisfy 0 < lo < hi, got {bracket}")
    prof = _Profile(st)
    grid, k, hi = _locate(prof, lo, hi, n_grid, max_expansions)
    at_boundary = False
    message = ""
    if k == n_grid - 1:
        beta_p, a, b, it, ok = grid[-1], grid[-2], grid[-1], 0, False
        at_boundary = True
        message = "maximum at the expanded upper edge of the beta_p bracket"
    elif k == 0 and prof.deriv(lo) <= 0:
        beta_p, a, b, it, ok = lo, lo, grid[1], 0, False
        at_boundary = True
        message = "maximum at the beta_p -> 0 boundary"
    else:
        a, b = grid[max(k - 1, 0)], grid[k + 1]
        beta_p, a, b, it, ok = _refine(prof, a, b, grid[k], tol, max_iter)
        if not ok:
            message = "beta_p search did not reach tolerance"
    alpha_p = st.n / st.compensator_coef(beta_p)
    tp = TransformedParams(alpha_p, beta_p)
    grad, hess = score_and_curvature(st, tp, x)
    cov, se = _covariance(hess)
    nat = (alpha_p * (1.0 + beta_p), alpha_p * beta_p)
    return FitResult(
        "transformed", alpha_p, beta_p, nat[0], nat[1], log_likelihood(st, tp, x), se, cov,
        float(np.max(np.abs(grad))), it, ok, at_boundary, (float(a), float(b)), st.m, message,
    )


def _covariance(hess):
    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    diag = np.diag(cov)
    se = np.sqrt(np.where(diag >= 0, diag, np.nan))
    return cov, se


def _natural_terms(st, alpha, beta):
    u = np.arange(st.n) / st.m
    lam = alpha + beta * u
    q = st.weighted_exposure - st.base_exposure
    return u, lam, q


def natural_log_likelihood(path, alpha, beta, x="const"):
    """Log-likelihood written directly in ``(alpha, beta)``; ``-inf`` off the domain.

    The domain requires a positive rate in every visited state and in the
    censored final state when the market is not saturated.
    """
    st = _stats(path, x)
    u, lam, q = _natural_terms(st, alpha, beta)
    if st.n < st.m and alpha + beta * st.n / st.m <= 0 or np.any(lam <= 0):
        return -math.inf
    return st.constant + float(np.log(lam).sum()) - alpha * st.base_exposure - beta * q


def fit_mle_natural(path, x, tol=1e-8, max_iter=200):
    """Maximum-likelihood estimate of ``(alpha, beta)`` by damped Newton ascent.

    The objective is concave in ``(alpha, beta)``; iterates stay inside the
    region where every visited state has a positive rate. Iteration stops once
    the gradient falls below ``tol`` times the base exposure ``A``.
    """
    x = check_response(x)
    st = _stats(check_path(path, min_adoptions=2), x)
    alpha, beta = st.n / st.base_exposure, 0.0
    q = st.weighted_exposure - st.base_exposure

    def grad_hess(a, b):
        u, lam, _ = _natural_terms(st, a, b)
        inv = 1.0 / lam
        g = np.array([inv.sum() - st.base_exposure, np.dot(u, inv) - q])
        w = inv**2
        h = -np.array([[w.sum(), np.dot(u, w)], [np.dot(u, w), np.dot(u * u, w)]])
        return g, h

    ok = False
    it = 0
    current = natural_log_likelihood(st, alpha, beta)
    # each gradient entry is a difference of sums of size ~A, so rounding sets the floor
    gtol = tol * max(1.0, st.base_exposure)
    while it < max_iter:
        g, h = grad_hess(alpha, beta)
        if np.max(np.abs(g)) < gtol:
            ok = True
            break
        it += 1
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = g
        decrement = float(np.dot(g, step))
        t = 1.0
        while t > 1e-16:
            cand = natural_log_likelihood(st, alpha + t * step[0], beta + t * step[1])
            if cand >= current + 0.25 * t * decrement:
                break
            t *= 0.5
        if t <= 1e-16:
            # numerically flat: accept if the Newton decrement is at rounding level
            ok = decrement < 1e-20 * max(1.0, abs(current))
            break
        alpha, beta = alpha + t * step[0], beta + t * step[1]
        current = cand
    g, h = grad_hess(alpha, beta)
    # polish: plain Newton steps while they still shrink the gradient
    for _ in range(3 if ok else 0):
        try:
            step = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        cand = (alpha + step[0], beta + step[1])
        value = natural_log_likelihood(st, *cand)
        if not math.isfinite(value):
            break
        g2, h2 = grad_hess(*cand)
        if np.max(np.abs(g2)) >= np.max(np.abs(g)):
            break
        (alpha, beta), g, h, current = cand, g2, h2, max(current, value)
    cov, se = _covariance(h)
    interior = beta > 0 and alpha > beta
    alpha_p = alpha - beta if interior else math.nan
    beta_p = beta / alpha_p if interior else math.nan
    return FitResult(
        "natural", alpha_p, beta_p, float(alpha), float(beta), current, se, cov,
        float(np.max(np.abs(g))), it, ok, not interior, None, st.m,
        "" if interior else "estimate outside alpha > beta > 0",
    )


class BassMLE(BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit_mle` / :func:`fit_mle_natural`.

    Parameters
    ----------
    x : PriceResponse, str or dict, default="const"
        Price response used to evaluate the path.
    parametrization : {"transformed", "natural"}, default="transformed"
    bracket : tuple, default=(1e-6, 10.0)
        Initial ``beta_p`` search interval (transformed fits only).
    tol : float, default=1e-8
    max_iter : int, default=200

    Examples
    --------
    >>> from bassmle import BassMLE, MarketParams, SimConfig, ConstantPolicy, ConstantResponse
    >>> from bassmle import simulate
    >>> cfg = SimConfig(MarketParams(0.3, 0.1, 200), ConstantResponse(), ConstantPolicy(0.0),
    ...                 target_n=150, seed=1)
    >>> est = BassMLE().fit(simulate(cfg))
    >>> bool(est.converged_)
    True
    """

    def __init__(self, x="const", parametrization="transformed", bracket=(1e-6, 10.0),
                 tol=1e-8, max_iter=200):
        self.x = x
        self.parametrization = parametrization
        self.bracket = bracket
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, path, y=None):
        x = check_response(self.x)
        if self.parametrization == "transformed":
            res = fit_mle(path, x, bracket=self.bracket, tol=self.tol, max_iter=self.max_iter)
        elif self.parametrization == "natural":
            res = fit_mle_natural(path, x, tol=self.tol, max_iter=self.max_iter)
        else:
            raise ValueError(f"unknown parametrization {self.parametrization!r}")
        self.result_ = res
        self.alpha_p_, self.beta_p_ = res.alpha_p, res.beta_p
        self.alpha_, self.beta_ = res.alpha, res.beta
        self.loglik_ = res.loglik
        self.std_errors_ = res.std_errors
        self.converged_ = res.converged
        self.m_ = res.m
        return self

    def score(self, path, y=None):
        """Log-likelihood of ``path`` under the fitted parameters."""
        check_is_fitted(self, "result_")
        x = check_response(self.x)
        if self.parametrization == "natural":
            return natural_log_likelihood(PathStats.from_path(check_path(path), x), self.alpha_, self.beta_)
        return log_likelihood(path, (self.alpha_p_, self.beta_p_), x)

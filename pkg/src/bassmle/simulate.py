"""Exact sample paths of the price-driven Bass adoption process."""

import math
from dataclasses import dataclass, field

import numpy as np

from .model import MarketParams, PriceResponse, xi
from .pricing import History, PricePath, PricingPolicy, realize_policy


class ObservedPath:
    """Fully observed record on ``[0, horizon]``: adoption times plus the price path.

    Parameters
    ----------
    m : int
        Market size.
    horizon : float
        End of the observation window.
    adoption_times : array-like
        Strictly increasing times in ``(0, horizon]``, at most ``m`` of them.
    price_path : PricePath
        Prices posted over ``[0, horizon]``.
    """

    def __init__(self, m, horizon, adoption_times, price_path):
        if isinstance(m, bool) or int(m) != m or m < 1:
            raise ValueError(f"m must be a positive integer, got {m}")
        times = np.array(adoption_times, dtype=float).reshape(-1)
        horizon = float(horizon)
        if not math.isfinite(horizon) or horizon < 0:
            raise ValueError(f"horizon must be finite and >= 0, got {horizon}")
        if len(times) > m:
            raise ValueError(f"{len(times)} adoptions exceed market size {m}")
        if len(times):
            if not np.all(np.isfinite(times)):
                raise ValueError("adoption times must be finite")
            if times[0] <= 0:
                raise ValueError("first adoption must occur after time 0")
            if np.any(np.diff(times) <= 0):
                raise ValueError("adoption times must be strictly increasing")
            if times[-1] > horizon:
                raise ValueError("adoption after the horizon")
        if price_path.horizon != horizon:
            raise ValueError(
                f"price path covers [0, {price_path.horizon}] but horizon is {horizon}"
            )
        times.flags.writeable = False
        self.m = int(m)
        self.horizon = horizon
        self.adoption_times = times
        self.price_path = price_path

    @property
    def n(self):
        """Number of adoptions, ``D_t``."""
        return len(self.adoption_times)

    def __eq__(self, other):
        return (
            isinstance(other, ObservedPath)
            and self.m == other.m
            and self.horizon == other.horizon
            and np.array_equal(self.adoption_times, other.adoption_times)
            and self.price_path == other.price_path
        )

    def __repr__(self):
        return f"ObservedPath(m={self.m}, n={self.n}, horizon={self.horizon:.6g})"

    def history(self):
        return History.from_path(self)


@dataclass(frozen=True)
class SimConfig:
    """Inputs of one simulation run. Exactly one of ``horizon``/``target_n`` is set."""

    params: MarketParams
    x: PriceResponse
    policy: PricingPolicy
    horizon: float = None
    target_n: int = None
    seed: int = 0
    review_times: tuple = field(default=())
    tail: float = 0.0

    def __post_init__(self):
        if (self.horizon is None) == (self.target_n is None):
            raise ValueError("set exactly one stop rule: horizon or target_n")
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon >= 0):
            raise ValueError(f"horizon must be finite and >= 0, got {self.horizon}")
        if self.target_n is not None and not 0 <= self.target_n <= self.params.m:
            raise ValueError(f"target_n must lie in [0, m={self.params.m}], got {self.target_n}")
        if self.tail < 0:
            raise ValueError("tail must be >= 0")
        object.__setattr__(self, "review_times", tuple(sorted(float(t) for t in self.review_times)))


def _run(params, x, policy, rng, review_times, horizon=math.inf, target_n=None):
    """Core event loop; returns (adoption times, price segments, stop time)."""
    m = params.m
    stop_n = m if target_n is None else target_n
    history = History()
    times = history.adoption_times
    segs = history.segments
    now = 0.0
    j = 0
    r_idx = 0
    budget = rng.standard_exponential()
    while j < stop_n:
        price = realize_policy(policy, history, now)
        rate = xi(j, params) * x(price)
        while r_idx < len(review_times) and review_times[r_idx] <= now:
            r_idx += 1
        review = policy.next_review(now)
        if r_idx < len(review_times):
            review = min(review, review_times[r_idx])
        seg_end = min(review, horizon)
        reach = now + budget / rate if rate > 0 else math.inf
        if reach <= seg_end:
            _append(segs, now, reach, price)
            now = reach
            j += 1
            times.append(now)
            budget = rng.standard_exponential()
        else:
            # price changes (or window closes) first: spend the cumulative intensity consumed
            _append(segs, now, seg_end, price)
            budget -= rate * (seg_end - now)
            now = seg_end
            if now >= horizon:
                break
    if target_n is None and now < horizon:
        price = realize_policy(policy, history, now)
        _append(segs, now, horizon, price)
        now = horizon
    return times, segs, now


def _append(segs, start, end, price):
    if end <= start:
        return
    if segs and segs[-1][2] == price and segs[-1][1] == start:
        segs[-1] = (segs[-1][0], end, price)
    else:
        segs.append((start, end, price))


def simulate(config):
    """Draw one path.

    From state ``j`` at time ``s`` the next adoption time ``u`` solves
    ``xi(j) * int_s^u x(r_v) dv = E`` with ``E ~ Exp(1)``, inverted exactly
    across the piecewise-constant prices. The run stops at the horizon, at
    ``target_n`` adoptions, or when the market is exhausted.
    """
    rng = np.random.default_rng(config.seed)
    if config.target_n is not None:
        return _until_n(config, rng)
    times, segs, _ = _run(
        config.params, config.x, config.policy, rng, config.review_times, horizon=config.horizon
    )
    return ObservedPath(config.params.m, config.horizon, times, PricePath(segs))


def simulate_until_n(config, max_attempts=10_000):
    """Path with exactly ``config.target_n`` adoptions.

    The horizon is ``t_n``. With ``config.tail > 0`` the window extends to
    ``t_n + tail`` and only paths without a further adoption in the tail are
    kept (rejection), so the record is a draw conditional on ``D = n`` at the
    window's end.
    """
    if config.target_n is None:
        raise ValueError("simulate_until_n needs a target_n stop rule")
    return _until_n(config, np.random.default_rng(config.seed), max_attempts)


def _until_n(config, rng, max_attempts=10_000):
    params, n = config.params, config.target_n
    for _ in range(max_attempts):
        times, segs, now = _run(
            params, config.x, config.policy, rng, config.review_times, target_n=n
        )
        if config.tail == 0 or n == params.m:
            horizon = now + config.tail
            if config.tail:
                _append(segs, now, horizon, realize_policy(config.policy, History(times, segs), now))
            return ObservedPath(params.m, horizon, times, PricePath(segs))
        # continue the same run over the tail and accept only if nothing happens
        horizon = now + config.tail
        tail_times, tail_segs, _ = _continue(config, rng, times, segs, now, horizon)
        if len(tail_times) == len(times):
            return ObservedPath(params.m, horizon, times, PricePath(tail_segs))
    raise RuntimeError(f"no tail-compatible path after {max_attempts} attempts")


def _continue(config, rng, times, segs, now, horizon):
    """Run the chain from a given state for the tail window, stopping at the first adoption."""
    history = History(list(times), list(segs))
    segs = history.segments
    j = len(times)
    budget = rng.standard_exponential()
    policy, x = config.policy, config.x
    while now < horizon:
        price = realize_policy(policy, history, now)
        rate = xi(j, config.params) * x(price)
        pending = [t for t in config.review_times if t > now]
        seg_end = min([policy.next_review(now), horizon] + pending[:1])
        reach = now + budget / rate if rate > 0 else math.inf
        if reach <= seg_end:
            history.adoption_times.append(reach)
            break
        _append(segs, now, seg_end, price)
        budget -= rate * (seg_end - now)
        now = seg_end
    return history.adoption_times, segs, now

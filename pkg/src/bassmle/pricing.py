"""Piecewise-constant price paths and non-anticipating pricing policies."""

import bisect
import math

import numpy as np


class PricePath:
    """Contiguous piecewise-constant price trajectory on ``[0, horizon]``.

    Segments are half-open ``[start, end)``; the last one is closed at the
    horizon. An empty path is allowed only for a zero horizon.

    Parameters
    ----------
    segments : iterable of (start, end, price)
        Sorted, gap-free segments starting at 0.
    """

    def __init__(self, segments):
        segs = [(float(s), float(e), float(p)) for s, e, p in segments]
        if segs:
            if segs[0][0] != 0.0:
                raise ValueError(f"first segment must start at 0, got {segs[0][0]}")
            for k, (s, e, p) in enumerate(segs):
                if not (math.isfinite(e) and e > s):
                    raise ValueError(f"segment {k} has end {e} <= start {s}")
                if not math.isfinite(p):
                    raise ValueError(f"segment {k} has non-finite price {p}")
                if k and s != segs[k - 1][1]:
                    raise ValueError(f"segment {k} starts at {s}, previous ends at {segs[k - 1][1]}")
        arr = np.array(segs, dtype=float).reshape(-1, 3)
        self.starts = arr[:, 0].copy()
        self.ends = arr[:, 1].copy()
        self.prices = arr[:, 2].copy()
        for a in (self.starts, self.ends, self.prices):
            a.flags.writeable = False

    @classmethod
    def constant(cls, price, horizon):
        if horizon == 0:
            return cls([])
        return cls([(0.0, horizon, price)])

    @property
    def horizon(self):
        return float(self.ends[-1]) if len(self.ends) else 0.0

    @property
    def segments(self):
        return list(zip(self.starts.tolist(), self.ends.tolist(), self.prices.tolist()))

    def __len__(self):
        return len(self.prices)

    def __eq__(self, other):
        return isinstance(other, PricePath) and self.segments == other.segments

    def __repr__(self):
        return f"PricePath({self.segments!r})"

    def _check_times(self, s):
        s = np.asarray(s, dtype=float)
        if not len(self.prices):
            raise ValueError("empty price path has no prices")
        if np.any(s < 0) or np.any(s > self.horizon) or np.any(np.isnan(s)):
            raise ValueError(f"time outside [0, {self.horizon}]")
        return s

    def segment_index(self, s):
        """Index of the segment holding ``s`` under the half-open convention."""
        s = self._check_times(s)
        k = np.searchsorted(self.starts, s, side="right") - 1
        return np.clip(k, 0, len(self.prices) - 1)

    def price_at(self, s):
        """Price posted at time ``s``."""
        k = self.segment_index(s)
        out = self.prices[k]
        return float(out) if np.ndim(out) == 0 else out

    def price_before(self, s):
        """Left-limit price at ``s``, i.e. the price in force just before ``s``.

        Adoption events are driven by this price; at ``s == 0`` it is the
        opening price.
        """
        s = self._check_times(s)
        k = np.searchsorted(self.starts, s, side="left") - 1
        k = np.clip(k, 0, len(self.prices) - 1)
        out = self.prices[k]
        return float(out) if np.ndim(out) == 0 else out


def integrate_x_many(path, x, a, b):
    """Exact ``int_a^b x(r_s) ds`` for arrays of interval endpoints."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b < a):
        raise ValueError("integration interval has b < a")
    if not len(path):
        if np.any(a != 0) or np.any(b != 0):
            raise ValueError("time outside [0, 0]")
        return np.zeros(np.broadcast(a, b).shape)
    ka = path.segment_index(a)
    kb = path.segment_index(b)
    # an endpoint sitting exactly on a boundary contributes nothing to the later segment
    kb = np.where((kb > ka) & (b == path.starts[kb]), kb - 1, kb)
    xs = np.asarray(x(path.prices), dtype=float)
    full = np.concatenate(([0.0], np.cumsum(xs * (path.ends - path.starts))))
    same = ka == kb
    head = xs[ka] * (path.ends[ka] - a)
    middle = full[kb] - full[np.minimum(ka + 1, kb)]
    tail = xs[kb] * (b - path.starts[kb])
    return np.where(same, xs[ka] * (b - a), head + middle + tail)


def integrate_x(path, x, a, b):
    """Exact ``int_a^b x(r_s) ds`` over the piecewise-constant ``path``."""
    return float(integrate_x_many(path, x, a, b))


class History:
    """Observable record up to some time: adoption times and posted prices.

    Policies only ever see a history restricted to ``[0, now]``.
    """

    def __init__(self, adoption_times=(), segments=()):
        self.adoption_times = list(adoption_times)
        self.segments = list(segments)

    @property
    def n_adoptions(self):
        return len(self.adoption_times)

    def restrict(self, now):
        times = self.adoption_times
        segs = self.segments
        if (not times or times[-1] <= now) and (not segs or segs[-1][1] <= now):
            return self
        times = times[: bisect.bisect_right(times, now)]
        clipped = []
        for s, e, p in segs:
            if s >= now:
                break
            clipped.append((s, min(e, now), p))
        return History(times, clipped)

    @classmethod
    def from_path(cls, path):
        return cls(path.adoption_times.tolist(), path.price_path.segments)


class PricingPolicy:
    """Rule mapping observable history to the price to post now."""

    def price(self, now, history):
        raise NotImplementedError

    def next_review(self, now):
        """Next scheduled re-query time after ``now`` (``inf`` if none)."""
        return math.inf

    def spec(self):
        raise NotImplementedError


class ConstantPolicy(PricingPolicy):
    def __init__(self, price):
        self.price_ = float(price)

    def price(self, now, history):
        return self.price_

    def spec(self):
        return {"type": "constant", "price": self.price_}

    def __repr__(self):
        return f"ConstantPolicy({self.price_})"


class FeedbackPolicy(PricingPolicy):
    """State-feedback price ``base + slope * j`` with ``j`` adoptions so far."""

    def __init__(self, base, slope):
        self.base = float(base)
        self.slope = float(slope)

    def price(self, now, history):
        return self.base + self.slope * history.n_adoptions

    def spec(self):
        return {"type": "feedback", "base": self.base, "slope": self.slope}

    def __repr__(self):
        return f"FeedbackPolicy(base={self.base}, slope={self.slope})"


class SchedulePolicy(PricingPolicy):
    """Open-loop schedule read off a :class:`PricePath`; holds the last price past its horizon."""

    def __init__(self, path):
        if not len(path):
            raise ValueError("schedule needs at least one segment")
        self.path = path

    def price(self, now, history):
        if now >= self.path.horizon:
            return float(self.path.prices[-1])
        return self.path.price_at(now)

    def next_review(self, now):
        k = np.searchsorted(self.path.starts, now, side="right")
        return float(self.path.starts[k]) if k < len(self.path) else math.inf

    def spec(self):
        return {"type": "schedule", "segments": [list(s) for s in self.path.segments]}

    def __repr__(self):
        return f"SchedulePolicy({self.path!r})"


def realize_policy(policy, history, now):
    """Price ``policy`` posts at ``now`` given ``history``.

    The history is cut at ``now`` before the policy sees it, so a policy cannot
    react to anything that has not happened yet.
    """
    return float(policy.price(now, history.restrict(now)))


def make_policy(spec):
    """Build a policy from a dict such as ``{"type": "constant", "price": 1.0}``."""
    if isinstance(spec, PricingPolicy):
        return spec
    spec = dict(spec)
    kind = spec.pop("type", None)
    try:
        if kind == "constant":
            return ConstantPolicy(**spec)
        if kind == "feedback":
            return FeedbackPolicy(**spec)
        if kind == "schedule":
            return SchedulePolicy(PricePath(spec.pop("segments")), **spec)
    except TypeError as exc:
        raise ValueError(f"bad {kind} policy spec: {exc}") from None
    raise ValueError(f"unknown policy type {kind!r}")

"""Markovian Bass model: parameters, reparametrization and adoption intensities."""

import math
from dataclasses import dataclass

import numpy as np


class InvalidParameterError(ValueError):
    """Raised when model parameters fall outside their admissible set."""


@dataclass(frozen=True)
class MarketParams:
    """Natural Bass parameters.

    Parameters
    ----------
    alpha : float
        Innovation rate, per unit time.
    beta : float
        Imitation rate, per unit time.
    m : int
        Market size (number of potential adopters).
    """

    alpha: float
    beta: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidParameterError(f"alpha must be > 0, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InvalidParameterError(f"beta must be > 0, got {self.beta}")
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 1:
            raise InvalidParameterError(f"m must be a positive integer, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class TransformedParams:
    """Reparametrized rates ``alpha_p = alpha - beta`` and ``beta_p = beta / (alpha - beta)``."""

    alpha_p: float
    beta_p: float

    def __post_init__(self):
        for name in ("alpha_p", "beta_p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be > 0, got {value}")
            object.__setattr__(self, name, float(value))

    def as_array(self):
        return np.array([self.alpha_p, self.beta_p])


def to_transformed(params):
    """Map natural parameters onto ``(alpha_p, beta_p)``; requires ``alpha > beta``."""
    if params.alpha <= params.beta:
        raise InvalidParameterError(
            f"transform needs alpha > beta, got alpha={params.alpha}, beta={params.beta}"
        )
    alpha_p = params.alpha - params.beta
    return TransformedParams(alpha_p, params.beta / alpha_p)


def from_transformed(tp, m):
    """Inverse of :func:`to_transformed`."""
    beta = tp.beta_p * tp.alpha_p
    return MarketParams(tp.alpha_p + beta, beta, m)


def _check_state(j, m):
    if isinstance(j, bool) or int(j) != j or not 0 <= j <= m:
        raise ValueError(f"state j must be an integer in [0, {m}], got {j}")


def xi(j, params):
    """Price-free part of the adoption rate, ``(m - j) * (alpha + beta * j / m)``."""
    _check_state(j, params.m)
    m = params.m
    return (m - j) * (params.alpha + params.beta * j / m)


def xi_transformed(j, tp, m):
    """Same rate as :func:`xi`, written in the transformed parameters."""
    _check_state(j, m)
    return (m - j) * tp.alpha_p * (1.0 + (1.0 + j / m) * tp.beta_p)


def adoption_rate(j, price, params, x):
    """Intensity of the next adoption from state ``j`` while ``price`` is posted."""
    return xi(j, params) * x(price)


class PriceResponse:
    """Base class for the price sensitivity map ``r -> x(r) > 0``.

    Subclasses implement ``__call__`` for scalars and numpy arrays alike.
    """

    name = "custom"

    def __call__(self, price):
        raise NotImplementedError

    def spec(self):
        """JSON-serializable description, used by the file formats."""
        raise NotImplementedError


class ConstantResponse(PriceResponse):
    """Price-insensitive adoption, ``x(r) = c``."""

    name = "const"

    def __init__(self, c=1.0):
        if not (math.isfinite(c) and c > 0):
            raise InvalidParameterError(f"constant response needs c > 0, got {c}")
        self.c = float(c)

    def __call__(self, price):
        price = np.asarray(price, dtype=float)
        out = np.full(price.shape, self.c)
        return float(out) if out.ndim == 0 else out

    def spec(self):
        return {"type": self.name, "c": self.c}

    def __repr__(self):
        return f"ConstantResponse(c={self.c})"

    def __eq__(self, other):
        return isinstance(other, ConstantResponse) and other.c == self.c

    def __hash__(self):
        return hash((self.name, self.c))


class ExponentialResponse(PriceResponse):
    """``x(r) = exp(-r)``."""

    name = "exp"

    def __call__(self, price):
        out = np.exp(-np.asarray(price, dtype=float))
        return float(out) if out.ndim == 0 else out

    def spec(self):
        return {"type": self.name}

    def __repr__(self):
        return "ExponentialResponse()"

    def __eq__(self, other):
        return isinstance(other, ExponentialResponse)

    def __hash__(self):
        return hash(self.name)


def make_response(spec):
    """Build a :class:`PriceResponse` from ``"const"``, ``"exp"`` or a dict spec."""
    if isinstance(spec, PriceResponse):
        return spec
    if isinstance(spec, str):
        spec = {"type": spec}
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind == "const":
        return ConstantResponse(**spec)
    if kind == "exp":
        if spec:
            raise ValueError(f"unexpected keys for exp response: {sorted(spec)}")
        return ExponentialResponse()
    raise ValueError(f"unknown price response {kind!r}")

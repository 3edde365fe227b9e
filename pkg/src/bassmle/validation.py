"""Input checks shared by the likelihood, estimator and CLI."""

import numpy as np

from .model import PriceResponse, TransformedParams, make_response


class InsufficientDataError(ValueError):
    """Too few adoptions for the requested computation."""


def check_path(path, min_adoptions=0):
    """Return ``path`` after checking it is an observed path with enough events."""
    from .simulate import ObservedPath

    if not isinstance(path, ObservedPath):
        raise TypeError(f"expected ObservedPath, got {type(path).__name__}")
    if path.n < min_adoptions:
        raise InsufficientDataError(
            f"need at least {min_adoptions} adoptions, path has {path.n}"
        )
    return path


def check_transformed(tp):
    """Coerce a pair or array into :class:`TransformedParams`."""
    if isinstance(tp, TransformedParams):
        return tp
    a, b = np.asarray(tp, dtype=float).reshape(2)
    return TransformedParams(a, b)


def check_response(x):
    if isinstance(x, PriceResponse):
        return x
    if callable(x):
        return x
    return make_response(x)

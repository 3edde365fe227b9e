"""Simulation and maximum-likelihood estimation for the Markovian Bass model."""

from .estimator import BassMLE, FitResult, fit_mle, fit_mle_natural, natural_log_likelihood, profile_alpha
from .likelihood import (
    LikelihoodParts,
    PathStats,
    factor_density,
    fisher_sandwich,
    hellinger_gap,
    log_factor_densities,
    log_likelihood,
    log_likelihood_parts,
    score_and_curvature,
)
from .model import (
    ConstantResponse,
    ExponentialResponse,
    InvalidParameterError,
    MarketParams,
    PriceResponse,
    TransformedParams,
    adoption_rate,
    from_transformed,
    make_response,
    to_transformed,
    xi,
    xi_transformed,
)
from .pricing import (
    ConstantPolicy,
    FeedbackPolicy,
    History,
    PricePath,
    PricingPolicy,
    SchedulePolicy,
    integrate_x,
    make_policy,
    realize_policy,
)
from .simulate import ObservedPath, SimConfig, simulate, simulate_until_n
from .validation import InsufficientDataError, check_path

__version__ = "0.1.0"

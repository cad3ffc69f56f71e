"""Weak-error laboratory for the left-point Euler scheme of rough volatility models."""
from .errors import BudgetError, FactorizationError, PreconditionError, QuadratureError, RoughVolError
from .kernel import GridSpec, covariance, covariance_C, eta, liouville_K
from .lower_bound import (LowerBoundConstants, b_constants_beta, b_constants_integral, c2_c3,
                          empirical_lower_bound)
from .moments import (ModelSpec, MomentReport, continuous_moment, discrete_moment,
                      discrete_moment_quadrature, discrete_moment_wick, weak_error,
                      weak_error_report)
from .montecarlo import estimate_moment, sample_grid_paths, scheme_terminal
from .rates import WeakErrorCurve, predicted_rate, sweep
from .volatility import Exponential, Linear, ShiftedTanh, parse_volfn
from .words import Word, enumerate_words, expand_word

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "FactorizationError",
    "PreconditionError",
    "QuadratureError",
    "RoughVolError",
    "GridSpec",
    "covariance",
    "covariance_C",
    "eta",
    "liouville_K",
    "LowerBoundConstants",
    "b_constants_beta",
    "b_constants_integral",
    "c2_c3",
    "empirical_lower_bound",
    "ModelSpec",
    "MomentReport",
    "continuous_moment",
    "discrete_moment",
    "discrete_moment_quadrature",
    "discrete_moment_wick",
    "weak_error",
    "weak_error_report",
    "estimate_moment",
    "sample_grid_paths",
    "scheme_terminal",
    "WeakErrorCurve",
    "predicted_rate",
    "sweep",
    "Exponential",
    "Linear",
    "ShiftedTanh",
    "parse_volfn",
    "Word",
    "enumerate_words",
    "expand_word",
]

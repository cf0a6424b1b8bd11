"""Numerics for skew fractional Brownian motion and its stochastic flow."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BudgetError,
    DomainError,
    FactorizationError,
    GridMismatchError,
    NonFiniteStateError,
    RegimeError,
)
from .fbm import HurstParam, PathBatch, PathKind, TimeGrid, sample_fbm  # noqa: E402
from .frac_calc import SampledFunction  # noqa: E402

__all__ = [
    "__version__",
    "BudgetError",
    "DomainError",
    "FactorizationError",
    "GridMismatchError",
    "NonFiniteStateError",
    "RegimeError",
    "HurstParam",
    "PathBatch",
    "PathKind",
    "TimeGrid",
    "sample_fbm",
    "SampledFunction",
]

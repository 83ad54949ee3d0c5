"""Optimal liquidation: multi-venue closed forms, slow stochastic volatility and limit orders."""

from .errors import LiquidatorError, NumericalError, ValidationError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "LiquidatorError", "NumericalError", "ValidationError", "__version__"]

"""Safe Bayesian optimization with Wiener-kernel error bounds."""

__version__ = "0.1.0"

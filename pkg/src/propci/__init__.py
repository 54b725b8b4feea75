"""Binomial proportion confidence intervals and their error evaluation."""
from ._backend import COMPILED

__version__ = "0.1.0"
__all__ = ["COMPILED", "__version__"]

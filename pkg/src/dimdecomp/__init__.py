"""ANOVA, factorized, and hybrid dimensional decompositions.

Builds additive (ANOVA) and multiplicative (factorized) decompositions of
square-integrable functions of independent random inputs, fits hybrid
surrogates mixing the two, and computes truncated second-moment statistics,
global sensitivity indices, effective dimensions and approximation errors.

Hot evaluation kernels live in a compiled extension with a pure NumPy
fallback selected at import time; see ``dimdecomp.kernel_backend()``.
"""

from ._kernels import KERNEL_BACKEND
from .inputs import (
    InputModel,
    Lognormal,
    Normal,
    QuadratureRule1D,
    Uniform,
    gauss_rule,
    marginal_moments,
    uniform_model,
)

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Name of the active kernel implementation: 'cython' or 'python'."""
    return KERNEL_BACKEND


__all__ = [
    "InputModel",
    "Lognormal",
    "Normal",
    "QuadratureRule1D",
    "Uniform",
    "gauss_rule",
    "marginal_moments",
    "uniform_model",
    "kernel_backend",
    "__version__",
]

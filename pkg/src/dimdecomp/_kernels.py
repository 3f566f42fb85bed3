"""Kernel dispatch: compiled Cython core when built, NumPy fallback otherwise."""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised indirectly
    from ._kernels_cy import esym_tables, restriction_log_tables

    KERNEL_BACKEND = "cython"
except ImportError:  # pragma: no cover
    from ._kernels_py import esym_tables, restriction_log_tables

    KERNEL_BACKEND = "python"

from ._kernels_py import esym_scalar  # scalar path: never hot


def assemble_product(L: np.ndarray, neg: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """Combine per-cardinality log tables into prod B_v ** c(|v|).

    `exponents` are the integer powers per cardinality (length S+1); the sign
    is recovered from the per-cardinality negative counts.
    """
    c = np.asarray(exponents, dtype=float)
    k = c.shape[0]
    logv = L[:, :k] @ c
    parity = (neg[:, :k] @ (np.asarray(exponents, dtype=np.int64) % 2)) % 2
    return np.where(parity == 0, 1.0, -1.0) * np.exp(logv)

"""Tensor interpolation grids for numerically built component functions.

Component functions are stored as values on tensor products of per-coordinate
Gauss nodes and evaluated off-grid by barycentric Lagrange interpolation.
The same nodes carry the component's moment integrals, which are then exact
for polynomial integrands within the rule's degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CHUNK = 1 << 14


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def interp_matrix(nodes: np.ndarray, bary_w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rows of Lagrange basis values at x; exact (row of a unit vector) on nodes."""
    x = np.asarray(x, dtype=float)
    d = x[:, None] - nodes[None, :]
    exact_row, exact_col = np.nonzero(d == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = bary_w[None, :] / d
        out = num / num.sum(axis=1, keepdims=True)
    if exact_row.size:
        out[exact_row] = 0.0
        out[exact_row, exact_col] = 1.0
    return out


@dataclass
class GridComponent:
    """One component function on the tensor grid of its coordinate subset."""

    dims: tuple
    nodes: list
    weights: list
    values: np.ndarray

    def __post_init__(self):
        self.dims = tuple(self.dims)
        self._bary = [barycentric_weights(nd) for nd in self.nodes]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Interpolated component values at full points x of shape (n, N)."""
        x = np.asarray(x, dtype=float)
        if not self.dims:
            return np.full(x.shape[0], float(self.values))
        n = x.shape[0]
        out = np.empty(n)
        for lo in range(0, n, _CHUNK):
            hi = min(lo + _CHUNK, n)
            t = self.values[None, ...]
            for k, d in enumerate(self.dims):
                mat = interp_matrix(self.nodes[k], self._bary[k], x[lo:hi, d])
                t = np.einsum("pj,pj...->p...", mat, t)
            out[lo:hi] = t
        return out

    def quadrature(self, integrand_values: np.ndarray) -> float:
        """Tensor-weight quadrature of values given on this component's grid."""
        t = integrand_values
        for w in reversed(self.weights):
            t = t @ w
        return float(t)

    @property
    def variance(self) -> float:
        return self.quadrature(self.values**2)

    @property
    def mean(self) -> float:
        return self.quadrature(self.values)

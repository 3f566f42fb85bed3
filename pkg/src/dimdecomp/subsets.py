"""Subset bookkeeping for the component-function lattice.

Subsets of coordinate indices are canonical ascending tuples of 0-based ints.
Enumeration order everywhere is by cardinality, then lexicographic, which
ensures every proper subset precedes its supersets.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Iterator

import numpy as np

Subset = tuple


def validate_subset(u, dimension: int) -> Subset:
    u = tuple(sorted(int(i) for i in u))
    if len(set(u)) != len(u):
        raise ValueError(f"subset has repeated indices: {u}")
    if u and (u[0] < 0 or u[-1] >= dimension):
        raise ValueError(f"subset {u} out of range for dimension {dimension}")
    return u


def subsets_of_size(dimension: int, size: int) -> Iterator[Subset]:
    return combinations(range(dimension), size)


def subsets_up_to(dimension: int, max_size: int) -> Iterator[Subset]:
    """All subsets with |u| <= max_size, by cardinality then lexicographic."""
    for s in range(max_size + 1):
        yield from combinations(range(dimension), s)


def proper_subsets(u: Subset) -> Iterator[Subset]:
    for s in range(len(u)):
        yield from combinations(u, s)


def count_up_to(dimension: int, max_size: int) -> int:
    return sum(math.comb(dimension, s) for s in range(max_size + 1))


def product_truncation_exponents(dimension: int, order: int) -> np.ndarray:
    """Exponents c_s reducing a truncated factor product to restriction sums.

    The order-S truncation of the multiplicative decomposition equals
    ``prod over |v| <= S of B_v ** c(|v|)`` where B_v(x) is the restriction
    sum of the additive components over subsets of v (equivalently the
    conditional expectation of the function given X_v = x_v) and

        c(t) = (-1)**(S - t) * C(N - 1 - t, S - t).

    This is Moebius inversion of B_v = prod_{w subset-of v} (1 + z_w) on the
    subset lattice, so it needs every B_v to be nonzero but never divides by
    an individual factor.  For S = N all exponents vanish except c(N) = 1,
    i.e. the full product reproduces the function itself.
    """
    if not (0 <= order <= dimension):
        raise ValueError(f"order must be in [0, {dimension}], got {order}")
    out = np.zeros(order + 1, dtype=np.int64)
    for t in range(order + 1):
        a, b = dimension - 1 - t, order - t
        if b == 0:
            out[t] = 1
        elif a >= b:
            out[t] = (-1) ** b * math.comb(a, b)
        else:
            out[t] = 0
    return out

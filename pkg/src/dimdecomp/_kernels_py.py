"""Pure NumPy implementations of the hot evaluation kernels.

`_kernels` re-exports these unless the compiled Cython twin is importable.
Both implementations must agree to floating-point noise; see
tests/test_kernels.py.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def esym_tables(sel: np.ndarray, unsel: np.ndarray, s_max: int) -> np.ndarray:
    """Per-point elementary symmetric mixtures of selected/unselected factors.

    Returns E of shape (n, s_max + 1) with

        E[p, s] = sum over subsets u of {0..N-1} with |u| = s of
                  prod_{i in u} sel[p, i] * prod_{i not in u} unsel[i].

    Computed by the usual one-pass recurrence, O(N * s_max) per point.
    """
    sel = np.ascontiguousarray(sel, dtype=float)
    n, dim = sel.shape
    unsel = np.asarray(unsel, dtype=float)
    out = np.zeros((n, s_max + 1))
    out[:, 0] = 1.0
    for i in range(dim):
        a = unsel[i]
        b = sel[:, i]
        for s in range(min(i + 1, s_max), 0, -1):
            out[:, s] = out[:, s] * a + out[:, s - 1] * b
        out[:, 0] *= a
    return out


def esym_scalar(sel, unsel, s_max: int) -> np.ndarray:
    """Scalar-coefficient variant of `esym_tables` (no per-point data)."""
    sel = np.asarray(sel, dtype=float)
    unsel = np.asarray(unsel, dtype=float)
    out = np.zeros(s_max + 1)
    out[0] = 1.0
    for i in range(sel.shape[0]):
        for s in range(min(i + 1, s_max), 0, -1):
            out[s] = out[s] * unsel[i] + out[s - 1] * sel[i]
        out[0] *= unsel[i]
    return out


def restriction_log_tables(H, G, nu, mu, nu0, mu0, s_max, floor):
    """Log-magnitude tables of the restriction sums B_v for a blended function.

    For y(x) = nu0 * prod_i h_i(x_i) + mu0 + sum_i g_i(x_i), the restriction
    sum over a subset v (the conditional expectation given X_v) is

        B_v(p) = nu0 * prod_{i not in v} nu[i] * prod_{i in v} H[p, i]
                 + mu0 + sum_{i not in v} mu[i] + sum_{i in v} G[p, i].

    Returns (L, neg, bad):
      L[p, s]   = sum over |v| = s of log|B_v(p)|,
      neg[p, s] = count of negative B_v(p)  (int64),
      bad       = None, or (point_index, subset) for the first |B_v| <= floor
                  (L/neg contents are then unspecified).

    H or G may be None when the corresponding part is absent.
    """
    if H is not None:
        H = np.ascontiguousarray(H, dtype=float)
        n, dim = H.shape
    else:
        G = np.ascontiguousarray(G, dtype=float)
        n, dim = G.shape
    if G is not None:
        G = np.ascontiguousarray(G, dtype=float)
    nu = np.asarray(nu, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu_total = nu0 * float(np.prod(nu)) if nu0 != 0.0 else 0.0
    mu_total = mu0 + float(np.sum(mu))

    L = np.zeros((n, s_max + 1))
    neg = np.zeros((n, s_max + 1), dtype=np.int64)
    for s in range(s_max + 1):
        for v in combinations(range(dim), s):
            if nu0 != 0.0:
                pref = nu0
                for i in range(dim):
                    if i not in v:
                        pref *= nu[i]
                b = np.full(n, pref) if s == 0 else pref * H[:, v[0]]
                for i in v[1:]:
                    b = b * H[:, i]
            else:
                b = np.zeros(n)
            addc = mu_total - (mu[list(v)].sum() if s else 0.0)
            b = b + addc
            if G is not None:
                for i in v:
                    b += G[:, i]
            small = np.abs(b) <= floor
            if small.any():
                return L, neg, (int(np.argmax(small)), v)
            L[:, s] += np.log(np.abs(b))
            neg[:, s] += b < 0.0
    return L, neg, None

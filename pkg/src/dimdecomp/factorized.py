"""Multiplicative (factorized) decomposition derived from the additive one.

The function is written as a product over coordinate subsets,
y = prod_u (1 + z_u), and each factor follows from the additive components
through the pointwise recursion

    (1 + z_u)(x) = sum_{v subseteq u} y_v(x_v) / prod_{v subset u} (1 + z_v)(x),

whose numerator B_u is the conditional expectation of y given X_u.  The
order-S truncation keeps factors with |u| <= S; it is evaluated through the
equivalent subset-lattice product  prod_{|v| <= S} B_v ** c(|v|)  (see
`subsets.product_truncation_exponents`), which never divides by an
individual factor and reproduces y exactly at S = N.

A function with mean zero (or nearly so) has no usable factorization; the
builder then shifts the function by a constant before factorizing and the
evaluator subtracts the shift again, leaving variances untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from . import integrate
from ._kernels import assemble_product
from .anova import AnovaDecomposition, _GridCore
from .errors import ConfigError, SingularFactorError, ZeroMeanError
from .integrate import IntegrationSpec, MonteCarlo, RandomizedQmc, TensorGauss
from .subsets import (
    Subset,
    product_truncation_exponents,
    proper_subsets,
    subsets_up_to,
    validate_subset,
)

CONDITIONING_REL = 1e-6
CONDITIONING_SHIFT_FACTOR = 10.0
FACTOR_FLOOR_REL = 1e-12
RESTRICTION_FLOOR_REL = 1e-13


@dataclass
class FddMoments:
    mean: float
    variance: float
    mean_error: float
    variance_error: float
    evaluations: int


class FactorizedDecomposition:
    """Factor evaluators plus truncated product evaluation and moments."""

    def __init__(self, add: AnovaDecomposition, shift: float, max_order: int):
        self.add = add
        self.model = add.model
        self.conditioning_shift = float(shift)
        self.one_plus_z_empty = add.y_empty + self.conditioning_shift
        self.max_order_built = max_order
        self.singularity_floor = FACTOR_FLOOR_REL * abs(self.one_plus_z_empty)
        self._restriction_floor = RESTRICTION_FLOOR_REL * abs(self.one_plus_z_empty)
        self._exponents = {
            s: product_truncation_exponents(self.model.dimension, s)
            for s in range(max_order + 1)
        }
        self.factor_grids: dict = {}
        if isinstance(add._core, _GridCore):
            self._build_factor_grids()

    # -- factors ------------------------------------------------------------

    def _factor_values(self, pts: np.ndarray, u: Subset, memo: dict) -> np.ndarray:
        if u in memo:
            return memo[u]
        if not u:
            vals = np.full(pts.shape[0], self.one_plus_z_empty)
        else:
            b = self.add._core.restriction_points(pts, u, self.conditioning_shift)
            denom = np.ones(pts.shape[0])
            for v in proper_subsets(u):
                denom = denom * self._factor_values(pts, v, memo)
            vals = b / denom
        bad = np.abs(vals) <= self.singularity_floor
        if bad.any():
            p = int(np.argmax(bad))
            raise SingularFactorError(
                f"factor for subset {u} fell below the singularity floor "
                f"{self.singularity_floor:g} at point index {p}: x = {pts[p]}",
                subset=u,
                point=pts[p],
            )
        memo[u] = vals
        return vals

    def factor_values(self, u, x) -> np.ndarray:
        """(1 + z_u) evaluated at subset coordinates x of shape (n, |u|)."""
        u = validate_subset(u, self.model.dimension)
        if len(u) > self.max_order_built:
            raise ConfigError(f"factor {u} beyond built order {self.max_order_built}")
        xu = np.asarray(x, dtype=float)
        if xu.ndim == 1:
            xu = xu[:, None] if len(u) == 1 else xu[None, :]
        pts = np.zeros((xu.shape[0], self.model.dimension))
        pts[:, list(u)] = xu
        return self._factor_values(pts, u, {})

    @property
    def factors(self) -> Mapping[Subset, Callable]:
        return {
            u: (lambda xu, u=u: self.factor_values(u, xu))
            for u in subsets_up_to(self.model.dimension, self.max_order_built)
        }

    def _build_factor_grids(self):
        """Factor values on the source component grids, floor-checked."""
        core = self.add._core
        for u in subsets_up_to(self.model.dimension, self.max_order_built):
            if not u:
                self.factor_grids[u] = np.array(self.one_plus_z_empty)
                continue
            comp = core.comps[u]
            grids = np.meshgrid(*comp.nodes, indexing="ij")
            pts = np.zeros((grids[0].size, self.model.dimension))
            for k, d in enumerate(u):
                pts[:, d] = grids[k].reshape(-1)
            vals = self._factor_values(pts, u, {})
            self.factor_grids[u] = vals.reshape(comp.values.shape)

    # -- truncated evaluation -------------------------------------------------

    def evaluate_truncated_points(self, order: int, pts: np.ndarray) -> np.ndarray:
        self._check_order(order)
        if order == 0:
            return np.full(pts.shape[0], self.add.y_empty)
        L, neg = self.add._core.log_tables(
            pts, order, self.conditioning_shift, self._restriction_floor
        )
        out = assemble_product(L, neg, self._exponents[order])
        return out - self.conditioning_shift

    def evaluate_truncated(self, order: int, x):
        arr = np.asarray(x, dtype=float)
        squeeze = arr.ndim == 1
        pts = self.model.check_points(arr)
        out = self.evaluate_truncated_points(order, pts)
        return float(out[0]) if squeeze else out

    def _check_order(self, order: int):
        if not (0 <= order <= self.max_order_built):
            raise ConfigError(
                f"truncation order {order} outside built range "
                f"[0, {self.max_order_built}]"
            )

    # -- moments ----------------------------------------------------------------

    def moments(
        self,
        order: int,
        int_spec: IntegrationSpec,
        control: Optional[tuple] = None,
    ) -> FddMoments:
        """Mean and variance of the order-S truncation, by the engine.

        `control` is an optional (evaluator, exact_mean, exact_variance)
        triple for the target function itself; when given, the engine
        integrates the differences against the target and adds the exact
        moments back, which removes nearly all sampling error once the
        truncation is close to the target.
        """
        return self.moments_multi([order], int_spec, control)[order]

    def _truncations_on(self, pts: np.ndarray, orders) -> dict:
        """Truncated values for several orders from one shared table pass."""
        top = max(orders)
        if top == 0:
            return {0: np.full(pts.shape[0], self.add.y_empty)}
        L, neg = self.add._core.log_tables(
            pts, top, self.conditioning_shift, self._restriction_floor
        )
        out = {}
        for order in orders:
            if order == 0:
                out[0] = np.full(pts.shape[0], self.add.y_empty)
            else:
                vals = assemble_product(L, neg, self._exponents[order])
                out[order] = vals - self.conditioning_shift
        return out

    def moments_multi(
        self,
        orders,
        int_spec: IntegrationSpec,
        control: Optional[tuple] = None,
    ) -> dict:
        """`moments` for several truncation orders sharing the node sweeps."""
        orders = sorted(set(int(s) for s in orders))
        for order in orders:
            self._check_order(order)
        model = self.model

        def stats_on(pts, w):
            fvals = self._truncations_on(pts, orders)
            yv = None
            if control is not None:
                yv = np.asarray(control[0](pts), dtype=float)
            out = {}
            for order, fv in fvals.items():
                if control is None:
                    m = float(np.add.reduce(w * fv))
                    var = float(np.add.reduce(w * (fv - m) ** 2))
                else:
                    _, mean_y, var_y = control
                    d1 = float(np.add.reduce(w * (fv - yv)))
                    d2 = float(np.add.reduce(w * (fv * fv - yv * yv)))
                    m = mean_y + d1
                    var = (var_y + mean_y**2 + d2) - m * m
                out[order] = (m, var)
            return out

        if isinstance(int_spec, TensorGauss):
            pts, w = integrate.tensor_nodes(model, int_spec.points_per_dim)
            fine = stats_on(pts, w)
            evals = pts.shape[0]
            if int_spec.points_per_dim > 1:
                pts2, w2 = integrate.tensor_nodes(model, int_spec.points_per_dim - 1)
                coarse = stats_on(pts2, w2)
                evals += pts2.shape[0]
                return {
                    s: FddMoments(
                        fine[s][0], fine[s][1],
                        abs(fine[s][0] - coarse[s][0]),
                        abs(fine[s][1] - coarse[s][1]), evals,
                    )
                    for s in orders
                }
            return {
                s: FddMoments(fine[s][0], fine[s][1], 0.0, 0.0, evals)
                for s in orders
            }

        if isinstance(int_spec, RandomizedQmc):
            sets = integrate.rqmc_point_sets(model, int_spec)
            reps = []
            evals = 0
            for pts in sets:
                w = np.full(pts.shape[0], 1.0 / pts.shape[0])
                reps.append(stats_on(pts, w))
                evals += pts.shape[0]
            out = {}
            r = len(reps)
            for s in orders:
                means = np.array([rep[s][0] for rep in reps])
                vares = np.array([rep[s][1] for rep in reps])
                m_err = float(np.std(means, ddof=1) / math.sqrt(r)) if r > 1 else 0.0
                v_err = float(np.std(vares, ddof=1) / math.sqrt(r)) if r > 1 else 0.0
                out[s] = FddMoments(
                    float(means.mean()), float(vares.mean()), m_err, v_err, evals
                )
            return out

        if isinstance(int_spec, MonteCarlo):
            pts = model.sample(int_spec.count, int_spec.seed)
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
            stats = stats_on(pts, w)
            fvals = self._truncations_on(pts, orders)
            out = {}
            for s in orders:
                m, var = stats[s]
                fv = fvals[s]
                se_m = float(np.std(fv, ddof=1) / math.sqrt(int_spec.count))
                se_v = float(np.std((fv - m) ** 2, ddof=1) / math.sqrt(int_spec.count))
                out[s] = FddMoments(m, var, se_m, se_v, int_spec.count)
            return out

        raise ConfigError(f"unknown integration spec: {int_spec!r}")


def fdd_from_add(
    add: AnovaDecomposition,
    max_order: Optional[int] = None,
    conditioning: str = "auto",
) -> FactorizedDecomposition:
    """Derive the multiplicative decomposition from a built additive one.

    `conditioning`: 'auto' shifts the function by 10 * sigma when its mean is
    within 1e-6 * sigma of zero, 'never' raises instead, 'force' always
    shifts.  The shift is recorded and undone on evaluation.
    """
    if max_order is None:
        max_order = add.max_order_built
    if max_order > add.max_order_built:
        raise ConfigError(
            f"additive build covers order {add.max_order_built}, "
            f"requested {max_order}"
        )
    sigma = math.sqrt(add.total_variance) if add.total_variance else 0.0
    shift = 0.0
    near_zero = abs(add.y_empty) < CONDITIONING_REL * sigma or (
        add.y_empty == 0.0 and sigma == 0.0
    )
    if conditioning == "force" or (conditioning == "auto" and near_zero):
        if sigma == 0.0 and add.y_empty == 0.0:
            raise ZeroMeanError("cannot factorize the zero function")
        shift = CONDITIONING_SHIFT_FACTOR * (sigma if sigma > 0 else abs(add.y_empty))
    elif near_zero:
        raise ZeroMeanError(
            "constant term is (nearly) zero; the multiplicative factorization "
            "is ill-conditioned -- rebuild with conditioning='auto' to shift "
            "the function by a nonzero constant first"
        )
    return FactorizedDecomposition(add, shift, max_order)


def univariate_variance_closed_form(y_empty: float, univariate_variances) -> float:
    """Variance of the order-1 truncated product from the component variances.

    sigma_1^2 = y0^2 * (prod_i (1 + s_i^2 / y0^2) - 1), exact because the
    order-1 factors are independent across coordinates.
    """
    if y_empty == 0.0:
        raise ZeroMeanError("closed-form univariate variance needs y_empty != 0")
    y2 = y_empty * y_empty
    prod = 1.0
    for s in univariate_variances:
        prod *= 1.0 + s / y2
    return y2 * (prod - 1.0)

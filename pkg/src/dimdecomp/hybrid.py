"""Hybrid surrogates: least-squares mixtures of the additive and multiplicative
truncations.

With w, w_add, w_mul the centered target, additive truncation and
multiplicative truncation at a common order S, three models are fitted by
mean-squared-error minimization:

* nonlinear, 3 parameters:  alpha*w_add + beta*w_mul
                            + gamma*(w_add*w_mul - E[w_add*w_mul]),
  whose normal equations are a symmetric 3x3 system;
* linear, 2 parameters:     alpha*w_add + beta*w_mul;
* constrained linear:       alpha*w_add + (1-alpha)*w_mul.

All three reproduce the exact mean.  The fits need a handful of cross
moments of (w, w_add, w_mul); those are estimated by the integration engine
on shared node sets, so the assembled Gram matrices stay consistent (and
positive semidefinite) with the right-hand sides.  At order 1 the extra
moments also have closed forms in terms of the univariate component moments,
which are computed and cross-checked against the numeric estimates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import integrate
from .anova import AnovaDecomposition
from .errors import ConfigError
from .factorized import FactorizedDecomposition, univariate_variance_closed_form
from .functions import FunctionSpec
from .integrate import IntegrationSpec, MonteCarlo, RandomizedQmc, TensorGauss

CONDITION_LIMIT = 1e12
DEGENERATE_REL = 1e-12
CLOSED_FORM_CHECK_RTOL = 1e-2

_ENTRY_NAMES = (
    "var_fdd",
    "e_add_fdd",
    "e_w_fdd",
    "e_add2_fdd",
    "e_add_fdd2",
    "e_add2_fdd2",
    "e_w_add_fdd",
    "fdd_mean",
)


@dataclass
class CrossMoments:
    """Second- to fourth-order cross moments of (w, w_add, w_mul) at order S."""

    order: int
    var_add: float
    var_fdd: float
    e_add_fdd: float
    e_w_fdd: float
    e_add2_fdd: float
    e_add_fdd2: float
    e_add2_fdd2: float
    e_w_add_fdd: float
    fdd_mean: float
    provenance: dict = field(default_factory=dict)
    error_indicators: dict = field(default_factory=dict)
    closed_form_values: dict = field(default_factory=dict)

    def check_cauchy_schwarz(self, rtol: float = 1e-9):
        bound = math.sqrt(max(self.var_add, 0.0) * max(self.var_fdd, 0.0))
        if abs(self.e_add_fdd) > bound * (1.0 + rtol) + 1e-300:
            raise ConfigError(
                f"E[w_add w_mul] = {self.e_add_fdd} violates the Cauchy-Schwarz "
                f"bound {bound}"
            )


@dataclass
class HybridModel:
    kind: str  # 'nonlinear3' | 'linear2' | 'linear_constrained1'
    order: int
    alpha: float
    beta: float
    gamma: float
    cross: CrossMoments
    y_empty: float
    condition_estimate: float = 0.0
    degenerate: bool = False
    fallback: bool = False

    def variance(self) -> float:
        return hybrid_variance(self)

    def mean_squared_error(self, total_variance: float) -> float:
        """E[(w - w_model)^2] = sigma^2 - 2 b.theta + theta.M.theta."""
        m, b = _system(self.cross)
        if self.kind == "nonlinear3":
            theta = np.array([self.alpha, self.beta, self.gamma])
        else:
            m, b = m[:2, :2], b[:2]
            theta = np.array([self.alpha, self.beta])
        return float(total_variance - 2.0 * b @ theta + theta @ m @ theta)


def _entries_on(nodes_w, y_vals, t_vals, f_vals, y_empty):
    w = np.asarray(nodes_w, dtype=float)
    m_hat = float(np.add.reduce(w * f_vals))
    wt = t_vals - y_empty
    wy = y_vals - y_empty
    wf = f_vals - m_hat
    wtwf = wt * wf

    def avg(v):
        return float(np.add.reduce(w * v))

    return {
        "var_add_num": avg(wt * wt),
        "var_fdd": avg(wf * wf),
        "e_add_fdd": avg(wtwf),
        "e_w_fdd": avg(wy * wf),
        "e_add2_fdd": avg(wt * wtwf),
        "e_add_fdd2": avg(wtwf * wf),
        "e_add2_fdd2": avg(wtwf * wtwf),
        "e_w_add_fdd": avg(wy * wtwf),
        "fdd_mean": m_hat,
    }


def compute_cross_moments(
    y,
    add: AnovaDecomposition,
    fdd: FactorizedDecomposition,
    order: int,
    int_spec: IntegrationSpec,
    closed_form_check: bool = True,
) -> CrossMoments:
    """Estimate all fit inputs on shared nodes; order-1 closed-form checks.

    `y` is the target function (spec or vectorized callable).  The additive
    truncation variance comes from the decomposition's own bookkeeping; at
    order 1 the identity E[w_add w_mul] = Var[w_add] replaces the numeric
    estimate, and the three higher-order entries are recomputed in closed
    form from univariate component moments and compared against the numeric
    values (mismatch emits a warning carrying both values).
    """
    y_points = y.evaluate_points if isinstance(y, FunctionSpec) else y
    model = add.model
    y_empty = add.y_empty

    def stats_on(pts, w):
        yv = np.asarray(y_points(pts), dtype=float)
        tv = add.evaluate_truncated_points(order, pts)
        fv = fdd.evaluate_truncated_points(order, pts)
        return _entries_on(w, yv, tv, fv, y_empty)

    backend = integrate.describe_spec(int_spec)
    if isinstance(int_spec, TensorGauss):
        pts, w = integrate.tensor_nodes(model, int_spec.points_per_dim)
        entries = stats_on(pts, w)
        if int_spec.points_per_dim > 1:
            pts2, w2 = integrate.tensor_nodes(model, int_spec.points_per_dim - 1)
            coarse = stats_on(pts2, w2)
            errors = {k: abs(entries[k] - coarse[k]) for k in entries}
        else:
            errors = {k: 0.0 for k in entries}
    elif isinstance(int_spec, RandomizedQmc):
        reps = []
        for pts in integrate.rqmc_point_sets(model, int_spec):
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
            reps.append(stats_on(pts, w))
        keys = reps[0].keys()
        entries = {k: float(np.mean([r[k] for r in reps])) for k in keys}
        if len(reps) > 1:
            errors = {
                k: float(np.std([r[k] for r in reps], ddof=1) / math.sqrt(len(reps)))
                for k in keys
            }
        else:
            errors = {k: 0.0 for k in keys}
    elif isinstance(int_spec, MonteCarlo):
        pts = model.sample(int_spec.count, int_spec.seed)
        w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        entries = stats_on(pts, w)
        # batch spread gives usable per-entry error indicators
        nb = min(8, pts.shape[0])
        batches = [
            stats_on(chunk, np.full(chunk.shape[0], 1.0 / chunk.shape[0]))
            for chunk in np.array_split(pts, nb)
        ]
        errors = {
            k: float(np.std([b[k] for b in batches], ddof=1) / math.sqrt(nb))
            if nb > 1
            else 0.0
            for k in entries
        }
    else:
        raise ConfigError(f"unknown integration spec: {int_spec!r}")

    provenance = {k: backend for k in _ENTRY_NAMES}
    var_add = add.truncated_variance(order)
    provenance["var_add"] = add.provenance
    closed_values: dict = {}

    if order == 1:
        # orthogonality identity: E[w_add w_mul] = E[w_add^2] at order 1
        errors["e_add_fdd"] = abs(entries["e_add_fdd"] - var_add)
        entries["e_add_fdd"] = var_add
        provenance["e_add_fdd"] = "closed_form"
        if closed_form_check:
            closed_values = _univariate_closed_entries(add, fdd)
            for key, cf in closed_values.items():
                num = entries[key]
                scale = max(abs(cf), abs(num), 1e-12)
                tol = max(CLOSED_FORM_CHECK_RTOL * scale, 10.0 * errors.get(key, 0.0))
                if abs(cf - num) > tol:
                    warnings.warn(
                        f"order-1 cross moment {key}: closed form {cf!r} vs "
                        f"numeric {num!r} disagree beyond tolerance {tol:g}",
                        stacklevel=2,
                    )
                entries[key] = cf
                provenance[key] = "closed_form"

    cross = CrossMoments(
        order=order,
        var_add=var_add,
        var_fdd=entries["var_fdd"],
        e_add_fdd=entries["e_add_fdd"],
        e_w_fdd=entries["e_w_fdd"],
        e_add2_fdd=entries["e_add2_fdd"],
        e_add_fdd2=entries["e_add_fdd2"],
        e_add2_fdd2=entries["e_add2_fdd2"],
        e_w_add_fdd=entries["e_w_add_fdd"],
        fdd_mean=entries["fdd_mean"],
        provenance=provenance,
        error_indicators=errors,
        closed_form_values=closed_values,
    )
    cross.check_cauchy_schwarz()
    return cross


def _univariate_closed_entries(add: AnovaDecomposition, fdd: FactorizedDecomposition) -> dict:
    """Closed forms of the order-1 higher cross moments.

    Functions of the (possibly shifted) constant y0 and the per-coordinate
    component moments sigma_i^2 = E[y_i^2], m3_i = E[y_i^3], m4_i = E[y_i^4]:

      E[w_add^2 w_mul]   = (2/y0) * sum_{i<j} s_i s_j + sum_i m3_i
      E[w_add w_mul^2]   = (v1 + y0^2) * sum_i a_i - 2 y0 * sum_i s_i
      E[w_add^2 w_mul^2] = (v1 + y0^2) * (sum_i q_i + 2 sum_{i<j} a_i a_j)
                           - y0^2 sum_i s_i - 2 y0 sum_i m3_i
                           - 4 sum_{i<j} s_i s_j

    with s_i = sigma_i^2, a_i = (2 y0 s_i + m3_i) / (s_i + y0^2),
    q_i = (y0^2 s_i + 2 y0 m3_i + m4_i) / (s_i + y0^2), and v1 the
    closed-form variance of the order-1 multiplicative truncation.
    """
    n = add.dimension
    y0 = fdd.one_plus_z_empty
    s = np.array([add.component_variances[(i,)] for i in range(n)])
    m3 = np.array([add._core.univariate_moment(i, 3) for i in range(n)])
    m4 = np.array([add._core.univariate_moment(i, 4) for i in range(n)])
    v1 = univariate_variance_closed_form(y0, s)
    var_add1 = float(s.sum())

    def pair_sum(vec):
        return 0.5 * (vec.sum() ** 2 - (vec**2).sum())

    a = (2.0 * y0 * s + m3) / (s + y0 * y0)
    q = (y0 * y0 * s + 2.0 * y0 * m3 + m4) / (s + y0 * y0)
    e_add2_fdd = 2.0 / y0 * pair_sum(s) + m3.sum()
    e_add_fdd2 = (v1 + y0 * y0) * a.sum() - 2.0 * y0 * var_add1
    e_add2_fdd2 = (
        (v1 + y0 * y0) * (q.sum() + 2.0 * pair_sum(a))
        - y0 * y0 * var_add1
        - 2.0 * y0 * m3.sum()
        - 4.0 * pair_sum(s)
    )
    return {
        "e_add2_fdd": float(e_add2_fdd),
        "e_add_fdd2": float(e_add_fdd2),
        "e_add2_fdd2": float(e_add2_fdd2),
    }


def closed_univariate_cross_moments(
    spec, add: AnovaDecomposition, fdd: FactorizedDecomposition
) -> CrossMoments:
    """Order-1 cross moments of a structured spec, entirely without integration.

    Besides the component-moment entries, E[w w_mul] has a closed form for
    the sum/product family: with y0 the (possibly shifted) constant,
    q_j = c_j * delta_j^2 + eta_j^2 and r_i = c_i * eta_i^2 + lambda_i^2
    (c_i the univariate product prefactors),

        E[y * yhat_1] = nu0 * y0 * prod_j (nu_j + q_j / y0)
                        + mu0 * y0 + sum_i (y0 * mu_i + r_i),
        E[w w_mul]    = E[y * yhat_1] - mean(y) * y0.

    The target's third-order entry E[w w_add w_mul] has no closed form and
    is left NaN; only the linear fits can be run from this object.
    """
    from .anova import _StructuredCore

    core = add._core
    if not isinstance(core, _StructuredCore):
        raise ConfigError("closed cross moments need a structured (closed-form) build")
    y0 = fdd.one_plus_z_empty
    n = add.dimension
    s = np.array([add.component_variances[(i,)] for i in range(n)])
    var_add = float(s.sum())
    var_fdd = univariate_variance_closed_form(y0, s)
    q = core.c * core.delta_sq + core.eta_sq
    r = core.c * core.eta_sq + core.lambda_sq
    e_y_yhat = core.mu0 * y0 + float(np.sum(y0 * core.mu + r))
    if core.nu0 != 0.0:
        e_y_yhat += core.nu0 * y0 * float(np.prod(core.nu + q / y0))
    e_w_fdd = e_y_yhat - add.y_empty * y0
    higher = _univariate_closed_entries(add, fdd)
    cross = CrossMoments(
        order=1,
        var_add=var_add,
        var_fdd=var_fdd,
        e_add_fdd=var_add,
        e_w_fdd=e_w_fdd,
        e_add2_fdd=higher["e_add2_fdd"],
        e_add_fdd2=higher["e_add_fdd2"],
        e_add2_fdd2=higher["e_add2_fdd2"],
        e_w_add_fdd=math.nan,
        fdd_mean=add.y_empty,
        provenance={k: "closed_form" for k in _ENTRY_NAMES + ("var_add",)},
    )
    cross.check_cauchy_schwarz()
    return cross


def _system(cross: CrossMoments):
    """Symmetric normal-equation matrix and right-hand side for the 3-p fit."""
    m33 = cross.e_add2_fdd2 - cross.e_add_fdd**2
    m = np.array(
        [
            [cross.var_add, cross.e_add_fdd, cross.e_add2_fdd],
            [cross.e_add_fdd, cross.var_fdd, cross.e_add_fdd2],
            [cross.e_add2_fdd, cross.e_add_fdd2, m33],
        ]
    )
    b = np.array([cross.var_add, cross.e_w_fdd, cross.e_w_add_fdd])
    return m, b


def fit_linear(cross: CrossMoments, y_empty: float = 0.0) -> HybridModel:
    """Two-parameter linear fit.

    At order 1 the parameters provably sum to one, so beta is computed from
    the scalar projection and alpha as its complement; the general-order
    formulas are the usual 2x2 normal-equation solution.  A (numerically)
    collinear pair degenerates to the pure additive model alpha=1, beta=0.
    """
    va, vf, e = cross.var_add, cross.var_fdd, cross.e_add_fdd
    det = va * vf - e * e
    if det <= DEGENERATE_REL * max(va * vf, e * e, 1e-300):
        return HybridModel(
            "linear2", cross.order, 1.0, 0.0, 0.0, cross, y_empty, degenerate=True
        )
    if cross.order == 1:
        beta = (cross.e_w_fdd - va) / (vf - va)
        alpha = 1.0 - beta
    else:
        alpha = (vf * va - e * cross.e_w_fdd) / det
        beta = (va * cross.e_w_fdd - va * e) / det
    return HybridModel("linear2", cross.order, alpha, beta, 0.0, cross, y_empty)


def fit_linear_constrained(cross: CrossMoments, y_empty: float = 0.0) -> HybridModel:
    """One-parameter fit with alpha + beta = 1 enforced."""
    den = cross.var_add + cross.var_fdd - 2.0 * cross.e_add_fdd
    if den <= DEGENERATE_REL * max(cross.var_add + cross.var_fdd, 1e-300):
        return HybridModel(
            "linear_constrained1",
            cross.order, 1.0, 0.0, 0.0, cross, y_empty, degenerate=True,
        )
    alpha = (
        cross.var_add + cross.var_fdd - cross.e_add_fdd - cross.e_w_fdd
    ) / den
    return HybridModel(
        "linear_constrained1", cross.order, alpha, 1.0 - alpha, 0.0, cross, y_empty
    )


def fit_nonlinear(cross: CrossMoments, y_empty: float = 0.0) -> HybridModel:
    """Three-parameter fit; falls back to the linear fit on an
    ill-conditioned or singular system (condition estimate above 1e12)."""
    m, b = _system(cross)
    cond = float(np.linalg.cond(m))
    if not math.isfinite(cond) or cond > CONDITION_LIMIT:
        lin = fit_linear(cross, y_empty)
        return HybridModel(
            "nonlinear3", cross.order, lin.alpha, lin.beta, 0.0, cross, y_empty,
            condition_estimate=cond, degenerate=lin.degenerate, fallback=True,
        )
    try:
        theta = scipy.linalg.solve(m, b, assume_a="sym")
    except (scipy.linalg.LinAlgError, ValueError):
        lin = fit_linear(cross, y_empty)
        return HybridModel(
            "nonlinear3", cross.order, lin.alpha, lin.beta, 0.0, cross, y_empty,
            condition_estimate=cond, degenerate=lin.degenerate, fallback=True,
        )
    return HybridModel(
        "nonlinear3", cross.order, float(theta[0]), float(theta[1]), float(theta[2]),
        cross, y_empty, condition_estimate=cond,
    )


def hybrid_variance(model: HybridModel) -> float:
    """Variance of the fitted mixture from the stored cross moments."""
    c = model.cross
    a, b, g = model.alpha, model.beta, model.gamma
    var = (
        a * a * c.var_add
        + b * b * c.var_fdd
        + 2.0 * a * b * c.e_add_fdd
    )
    if model.kind == "nonlinear3":
        m33 = c.e_add2_fdd2 - c.e_add_fdd**2
        var += g * g * m33 + 2.0 * a * g * c.e_add2_fdd + 2.0 * b * g * c.e_add_fdd2
    return var


def evaluate(
    model: HybridModel,
    add: AnovaDecomposition,
    fdd: FactorizedDecomposition,
    x,
):
    """y0 + alpha*w_add + beta*w_mul (+ gamma interaction) at x."""
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    pts = add.model.check_points(arr)
    out = evaluate_points(model, add, fdd, pts)
    return float(out[0]) if squeeze else out


def evaluate_points(model, add, fdd, pts: np.ndarray) -> np.ndarray:
    wt = add.evaluate_truncated_points(model.order, pts) - add.y_empty
    wf = fdd.evaluate_truncated_points(model.order, pts) - model.cross.fdd_mean
    out = add.y_empty + model.alpha * wt + model.beta * wf
    if model.kind == "nonlinear3" and model.gamma != 0.0:
        out = out + model.gamma * (wt * wf - model.cross.e_add_fdd)
    return out

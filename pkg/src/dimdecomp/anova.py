"""Additive (ANOVA) decomposition: builders, truncation, sensitivity indices.

The decomposition writes y as a sum of 2^N component functions indexed by
coordinate subsets: the constant is the mean of y, and each non-constant
component is the conditional expectation over its subset minus all proper
sub-components.  Components have zero mean and are mutually orthogonal under
the product measure, so variances split additively across subsets.

Two builders:

* `build_closed_form` for the structured sum/product family, where every
  component and variance is available analytically;
* `build_numeric` for arbitrary functions, storing components as values on
  per-subset tensor Gauss grids (interpolated off-grid), with the conditional
  expectations computed by the integration engine.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping, Optional

import numpy as np

from . import integrate
from ._kernels import esym_scalar, esym_tables, restriction_log_tables
from .errors import (
    ConfigError,
    DimensionMismatchError,
    SingularFactorError,
    ZeroVarianceError,
)
from .functions import FunctionSpec, StructuredSpec
from .grids import GridComponent, interp_matrix, barycentric_weights
from .inputs import InputModel
from .integrate import IntegrationSpec, TensorGauss, tensor_nodes
from .subsets import Subset, subsets_up_to, validate_subset

NEGLIGIBLE_REL = 1e-14


class _StructuredCore:
    """Closed-form components of nu0*prod(h) + mu0 + sum(g)."""

    def __init__(self, spec: StructuredSpec, model: InputModel):
        self.spec = spec
        self.model = model
        self.n = spec.dimension
        self.nu0 = spec.nu0
        self.mu0 = spec.mu0
        self.nu = spec._nu
        self.mu = spec._mu
        self.delta_sq = spec._delta_sq
        self.lambda_sq = spec._lambda_sq
        self.eta_sq = spec._eta_sq
        self.y_empty = spec.constant_term()
        # univariate prefactors nu0 * prod_{j != i} nu_j
        self.c = np.zeros(self.n)
        if spec.has_product_part:
            for i in range(self.n):
                self.c[i] = self.nu0 * np.prod(np.delete(self.nu, i))

    def batch(self, pts: np.ndarray):
        return self.spec.h_values(pts), self.spec.g_values(pts)

    def y_points(self, pts: np.ndarray) -> np.ndarray:
        return self.spec.evaluate_points(pts)

    def truncated_points(self, pts: np.ndarray, order: int, batch=None) -> np.ndarray:
        H, G = batch if batch is not None else self.batch(pts)
        out = np.full(pts.shape[0], self.y_empty)
        if G is not None:
            out = out + (G - self.mu).sum(axis=1)
        if self.nu0 != 0.0 and order >= 1:
            tables = esym_tables(H - self.nu, self.nu, order)
            out = out + self.nu0 * tables[:, 1:].sum(axis=1)
        return out

    def component_sub(self, u: Subset, xu: np.ndarray) -> np.ndarray:
        xu = np.asarray(xu, dtype=float)
        if xu.ndim == 1:
            xu = xu[:, None]
        if xu.shape[1] != len(u):
            raise DimensionMismatchError(
                f"component over {u} expects {len(u)} columns, got {xu.shape[1]}"
            )
        if len(u) == 1:
            i = u[0]
            t = self.spec.terms[i]
            out = np.zeros(xu.shape[0])
            if t.h is not None and self.nu0 != 0.0:
                out += self.c[i] * (np.asarray(t.h(xu[:, 0]), float) - self.nu[i])
            if t.g is not None:
                out += np.asarray(t.g(xu[:, 0]), float) - self.mu[i]
            return out
        if self.nu0 == 0.0:
            return np.zeros(xu.shape[0])
        pref = self.nu0 * np.prod(self.nu[[j for j in range(self.n) if j not in u]])
        out = np.full(xu.shape[0], pref)
        for k, i in enumerate(u):
            t = self.spec.terms[i]
            out = out * (np.asarray(t.h(xu[:, k]), float) - self.nu[i])
        return out

    def component_variance(self, u: Subset) -> float:
        if len(u) == 1:
            i = u[0]
            var = (
                self.c[i] ** 2 * self.delta_sq[i]
                + self.lambda_sq[i]
                + 2.0 * self.c[i] * self.eta_sq[i]
            )
            return max(var, 0.0)
        if self.nu0 == 0.0:
            return 0.0
        out = self.nu0**2
        for j in range(self.n):
            out *= self.delta_sq[j] if j in u else self.nu[j] ** 2
        return out

    def order_variances(self, max_order: int) -> np.ndarray:
        """Total component variance per cardinality s = 0..max_order."""
        out = np.zeros(max_order + 1)
        if max_order >= 1:
            out[1] = float(
                np.sum(
                    self.c**2 * self.delta_sq
                    + self.lambda_sq
                    + 2.0 * self.c * self.eta_sq
                )
            )
        if self.nu0 != 0.0 and max_order >= 2:
            tab = esym_scalar(self.delta_sq, self.nu**2, max_order)
            out[2:] = self.nu0**2 * tab[2:]
        return out

    def log_tables(self, pts, order, shift, floor, batch=None):
        H, G = batch if batch is not None else self.batch(pts)
        L, neg, bad = restriction_log_tables(
            H, G, self.nu, self.mu, self.nu0, self.mu0 + shift, order, floor
        )
        if bad is not None:
            p, v = bad
            raise SingularFactorError(
                f"restriction sum within floor {floor:g} of zero for subset "
                f"{v} at point index {p}: x = {pts[p]}",
                subset=v,
                point=pts[p],
            )
        return L, neg

    def restriction_points(self, pts, v: Subset, shift: float) -> np.ndarray:
        """B_v = conditional expectation of y (+shift) given X_v."""
        out = np.full(pts.shape[0], self.mu0 + shift + self.mu.sum())
        for i in v:
            t = self.spec.terms[i]
            if t.g is not None:
                out += np.asarray(t.g(pts[:, i]), float) - self.mu[i]
        if self.nu0 != 0.0:
            pref = self.nu0 * np.prod(
                self.nu[[j for j in range(self.n) if j not in v]]
            )
            prod = np.full(pts.shape[0], pref)
            for i in v:
                prod = prod * np.asarray(self.spec.terms[i].h(pts[:, i]), float)
            out = out + prod
        return out

    def univariate_moment(self, i: int, power: int, quad_points: int = 48) -> float:
        """E[y_{i}(X_i)^power] by per-coordinate Gauss quadrature."""
        rule = self.model.marginals[i].gauss_rule(quad_points)
        vals = self.component_sub((i,), rule.nodes[:, None])
        return float(rule.weights @ vals**power)


class _GridCore:
    """Components stored on per-subset tensor grids."""

    def __init__(self, model, y_empty, comps, total_variance):
        self.model = model
        self.y_empty = y_empty
        self.comps = comps  # dict subset -> GridComponent
        self.total_variance = total_variance

    def _component_values(self, pts, order):
        vals = {}
        for u, comp in self.comps.items():
            if len(u) <= order:
                vals[u] = comp.evaluate(pts)
        return vals

    def truncated_points(self, pts, order, batch=None) -> np.ndarray:
        out = np.full(pts.shape[0], self.y_empty)
        for vals in self._component_values(pts, order).values():
            out = out + vals
        return out

    def component_sub(self, u: Subset, xu: np.ndarray) -> np.ndarray:
        xu = np.asarray(xu, dtype=float)
        if xu.ndim == 1:
            xu = xu[:, None]
        comp = self.comps[u]
        full = np.zeros((xu.shape[0], self.model.dimension))
        full[:, list(u)] = xu
        return comp.evaluate(full)

    def component_variance(self, u: Subset) -> float:
        return self.comps[u].variance

    def log_tables(self, pts, order, shift, floor, batch=None):
        vals = self._component_values(pts, order)
        base = self.y_empty + shift
        n = pts.shape[0]
        L = np.zeros((n, order + 1))
        neg = np.zeros((n, order + 1), dtype=np.int64)
        for v in subsets_up_to(self.model.dimension, order):
            b = np.full(n, base)
            for w, wv in vals.items():
                if set(w) <= set(v):
                    b = b + wv
            small = np.abs(b) <= floor
            if small.any():
                p = int(np.argmax(small))
                raise SingularFactorError(
                    f"restriction sum within floor {floor:g} of zero for "
                    f"subset {v} at point index {p}: x = {pts[p]}",
                    subset=v,
                    point=pts[p],
                )
            L[:, len(v)] += np.log(np.abs(b))
            neg[:, len(v)] += b < 0.0
        return L, neg

    def restriction_points(self, pts, v: Subset, shift: float) -> np.ndarray:
        out = np.full(pts.shape[0], self.y_empty + shift)
        for w, comp in self.comps.items():
            if set(w) <= set(v):
                out = out + comp.evaluate(pts)
        return out

    def univariate_moment(self, i: int, power: int, quad_points: int = 48) -> float:
        comp = self.comps[(i,)]
        rule = self.model.marginals[i].gauss_rule(quad_points)
        mat = interp_matrix(comp.nodes[0], barycentric_weights(comp.nodes[0]), rule.nodes)
        vals = mat @ comp.values
        return float(rule.weights @ vals**power)


class AnovaDecomposition:
    """Constant term, component evaluators and variances, truncation order."""

    def __init__(self, model, core, max_order_built, provenance, total_variance):
        self.model = model
        self._core = core
        self.y_empty = core.y_empty
        self.max_order_built = max_order_built
        self.provenance = provenance
        self.total_variance = total_variance
        self._variances: dict = {}
        self._negligible: set = set()

    @property
    def dimension(self) -> int:
        return self.model.dimension

    @property
    def component_variances(self) -> Mapping[Subset, float]:
        return dict(self._variances)

    @property
    def components(self) -> Mapping[Subset, Callable]:
        return {
            u: (lambda xu, u=u: self._core.component_sub(u, xu))
            for u in self._variances
        }

    def component_values(self, u, xu) -> np.ndarray:
        u = validate_subset(u, self.dimension)
        return self._core.component_sub(u, xu)

    def negligible(self, u) -> bool:
        """True when sigma_u^2 fell below the zero-variance guard at build."""
        return tuple(u) in self._negligible

    def _check_order(self, order: int):
        if not (0 <= order <= self.max_order_built):
            raise ConfigError(
                f"truncation order {order} outside built range "
                f"[0, {self.max_order_built}]"
            )

    def truncated_variance(self, order: int) -> float:
        self._check_order(order)
        return sum(v for u, v in self._variances.items() if len(u) <= order)

    def evaluate_truncated(self, order: int, x):
        self._check_order(order)
        arr = np.asarray(x, dtype=float)
        squeeze = arr.ndim == 1
        pts = self.model.check_points(arr)
        out = self._core.truncated_points(pts, order)
        return float(out[0]) if squeeze else out

    def evaluate_truncated_points(self, order: int, pts: np.ndarray) -> np.ndarray:
        self._check_order(order)
        return self._core.truncated_points(pts, order)

    def sensitivity_indices(self) -> dict:
        if self.total_variance is None:
            raise ZeroVarianceError("total variance unavailable for this build")
        if self.total_variance <= 0.0:
            raise ZeroVarianceError("total variance is zero")
        return {u: v / self.total_variance for u, v in self._variances.items()}

    def _register(self, u: Subset, variance: float):
        self._variances[u] = variance
        if (
            self.total_variance is not None
            and self.total_variance > 0
            and variance < NEGLIGIBLE_REL * self.total_variance
        ):
            self._negligible.add(u)


def build_closed_form(spec: StructuredSpec, model: InputModel) -> AnovaDecomposition:
    """All components and variances of a structured spec, in closed form."""
    if not isinstance(spec, StructuredSpec):
        raise ConfigError(
            "closed-form builder needs a structured (sum/product) spec"
        )
    if spec.dimension != model.dimension:
        raise DimensionMismatchError(
            f"spec has {spec.dimension} coordinates, model {model.dimension}"
        )
    if model.dimension > 20:
        raise ConfigError("closed-form subset map capped at 20 coordinates")
    core = _StructuredCore(spec, model)
    decomp = AnovaDecomposition(
        model,
        core,
        max_order_built=model.dimension,
        provenance="closed_form",
        total_variance=spec.exact_variance(),
    )
    for u in subsets_up_to(model.dimension, model.dimension):
        if u:
            decomp._register(u, core.component_variance(u))
    return decomp


def _as_callable(f) -> Callable:
    if isinstance(f, FunctionSpec):
        return f.evaluate_points
    return f


def build_numeric(
    f,
    model: InputModel,
    max_order: int,
    int_spec: IntegrationSpec,
    grid_points: int = 12,
) -> AnovaDecomposition:
    """Numeric build on tensor interpolation grids.

    With a TensorGauss backend whose unified grid fits the node cap, the
    function is evaluated once on the full tensor grid and every conditional
    expectation is a weight contraction of that value tensor.  Otherwise each
    subset's conditional expectations are integrated separately over the
    complementary coordinates.
    """
    if not (0 <= max_order <= model.dimension):
        raise ConfigError(f"max_order must be in [0, {model.dimension}]")
    fvals = _as_callable(f)
    n = model.dimension

    unified = (
        isinstance(int_spec, TensorGauss)
        and max(grid_points, int_spec.points_per_dim) ** n <= integrate.NODE_CAP
    )
    if unified:
        p = max(grid_points, int_spec.points_per_dim)
        rules = model.gauss_rules(p)
        nodes = [r.nodes for r in rules]
        weights = [r.weights for r in rules]
        pts, _ = tensor_nodes(model, p)
        v_tensor = np.asarray(fvals(pts), dtype=float).reshape((p,) * n)
        y_empty = float(_contract_out(v_tensor, weights, keep=()))
        comps: dict = {}
        for u in subsets_up_to(n, max_order):
            if not u:
                continue
            m_u = _contract_out(v_tensor, weights, keep=u)
            vals = np.array(m_u, copy=True)
            vals -= y_empty
            for v, comp in comps.items():
                if set(v) < set(u):
                    vals -= _broadcast_into(comp.values, v, u)
            comps[u] = GridComponent(
                dims=u,
                nodes=[nodes[d] for d in u],
                weights=[weights[d] for d in u],
                values=vals,
            )
        centered = v_tensor - y_empty
        total = float(_contract_out(centered**2, weights, keep=()))
    else:
        rules = model.gauss_rules(grid_points)
        nodes = [r.nodes for r in rules]
        weights = [r.weights for r in rules]
        if isinstance(f, FunctionSpec) and f.exact_moments(model) is not None:
            em = f.exact_moments(model)
            y_empty, total = em.mean, em.variance
        else:
            est = integrate.expectation(fvals, model, int_spec)
            y_empty = float(est.value)
            total = float(
                integrate.expectation(
                    lambda x: (np.asarray(fvals(x), float) - y_empty) ** 2,
                    model,
                    int_spec,
                ).value
            )
        comps = {}
        for u in subsets_up_to(n, max_order):
            if not u:
                continue
            m_u = _conditional_means_on_grid(fvals, model, u, nodes, int_spec)
            vals = m_u - y_empty
            for v, comp in comps.items():
                if set(v) < set(u):
                    vals -= _broadcast_into(comp.values, v, u)
            comps[u] = GridComponent(
                dims=u,
                nodes=[nodes[d] for d in u],
                weights=[weights[d] for d in u],
                values=vals,
            )

    core = _GridCore(model, y_empty, comps, total)
    decomp = AnovaDecomposition(
        model,
        core,
        max_order_built=max_order,
        provenance=f"numeric[{integrate.describe_spec(int_spec)}]",
        total_variance=total,
    )
    for u, comp in comps.items():
        decomp._register(u, comp.variance)
    return decomp


def _contract_out(tensor: np.ndarray, weights_per_dim, keep) -> np.ndarray:
    """Weight-contract every axis not in `keep`; kept axes stay ascending."""
    keep = set(keep)
    cur = list(range(tensor.ndim))
    out = tensor
    for d in sorted(set(cur) - keep, reverse=True):
        out = np.tensordot(out, weights_per_dim[d], axes=(cur.index(d), 0))
        cur.remove(d)
    return out


def _broadcast_into(values: np.ndarray, v: Subset, u: Subset) -> np.ndarray:
    """View values over v-grid as a broadcastable tensor over the u-grid."""
    idx = tuple(slice(None) if d in v else None for d in u)
    return values[idx]


def _conditional_means_on_grid(fvals, model, u, nodes, int_spec):
    """E[y | X_u = grid point] on the tensor grid of u, via the engine."""
    free = [i for i in range(model.dimension) if i not in u]
    grid_shape = tuple(nodes[d].size for d in u)
    out = np.empty(grid_shape)

    if isinstance(int_spec, TensorGauss):
        pts_c, w_c = tensor_nodes(model, int_spec.points_per_dim, dims=free)
        blocks = [(pts_c, w_c)]
    else:
        sub = InputModel([model.marginals[i] for i in free])
        if isinstance(int_spec, integrate.RandomizedQmc):
            sets = integrate.rqmc_point_sets(sub, int_spec)
            blocks = [(p, np.full(p.shape[0], 1.0 / p.shape[0] / len(sets))) for p in sets]
        else:
            p = sub.sample(int_spec.count, int_spec.seed)
            blocks = [(p, np.full(p.shape[0], 1.0 / p.shape[0]))]

    full_blocks = []
    for pts_c, w_c in blocks:
        full = np.empty((pts_c.shape[0], model.dimension))
        full[:, free] = pts_c
        full_blocks.append((full, w_c))

    for flat_idx in range(out.size):
        idx = np.unravel_index(flat_idx, grid_shape)
        acc = 0.0
        for full, w_c in full_blocks:
            for k, d in enumerate(u):
                full[:, d] = nodes[d][idx[k]]
            acc += float(np.add.reduce(w_c * np.asarray(fvals(full), float)))
        out[idx] = acc
    return out


def sensitivity_indices(decomp: AnovaDecomposition) -> dict:
    return decomp.sensitivity_indices()


def truncated_variance(decomp: AnovaDecomposition, order: int) -> float:
    return decomp.truncated_variance(order)

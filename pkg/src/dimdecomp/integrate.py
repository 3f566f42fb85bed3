"""Multidimensional expectation engine.

Every expectation in the decomposition pipeline goes through one of three
backends:

* TensorGauss(p): tensor product of the per-marginal p-point Gauss rules.
  Exact for integrands of per-coordinate polynomial degree <= 2p - 1; the
  error indicator is the difference against the (p-1)-point rule.
* MonteCarlo(count, seed): plain seeded sampling; standard-error indicator.
* RandomizedQmc(count, seed, replicates): scrambled Sobol points mapped
  through the marginal quantiles, independently scrambled replicates; the
  indicator is the standard error over replicate means.

All reductions use NumPy's pairwise summation in a fixed order, so results
are bit-stable for a given spec regardless of the host.  Integrands are
vectorized callables mapping an (n, N) point block to shape (n,) or (n, k);
vector-valued integrands produce vector-valued estimates (one shared node
set, which the cross-moment code relies on).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, NodeBudgetError, NonFiniteEvaluationError
from .inputs import InputModel

NODE_CAP = 10**7


@dataclass(frozen=True)
class TensorGauss:
    points_per_dim: int
    target_rel_tolerance: Optional[float] = None

    def __post_init__(self):
        if not (1 <= self.points_per_dim <= 64):
            raise ConfigError(
                f"points_per_dim must be in [1, 64], got {self.points_per_dim}"
            )


@dataclass(frozen=True)
class MonteCarlo:
    count: int
    seed: int
    target_rel_tolerance: Optional[float] = None

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class RandomizedQmc:
    count: int
    seed: int
    replicates: int = 8
    target_rel_tolerance: Optional[float] = None

    def __post_init__(self):
        if self.count < 1 or self.replicates < 1:
            raise ConfigError("count and replicates must be >= 1")


IntegrationSpec = Union[TensorGauss, MonteCarlo, RandomizedQmc]


@dataclass(frozen=True)
class Estimate:
    value: float
    error_indicator: float
    evaluations_used: int


def _reduce(weights: np.ndarray, values: np.ndarray):
    """Weighted sum with NumPy's deterministic pairwise reduction."""
    if values.ndim == 1:
        return np.add.reduce(weights * values)
    return np.add.reduce(weights[:, None] * values, axis=0)


def _check_finite(values: np.ndarray, points: np.ndarray):
    if np.isfinite(values).all():
        return
    bad = np.argwhere(~np.isfinite(np.atleast_2d(values.T).T))[0][0]
    raise NonFiniteEvaluationError(
        f"integrand returned a non-finite value at point index {bad}: "
        f"{points[bad]}",
        point=points[bad],
    )


def tensor_nodes(model: InputModel, points_per_dim: int, dims: Optional[Sequence[int]] = None):
    """Tensor-product Gauss nodes/weights over the given dims (default: all)."""
    if dims is None:
        dims = range(model.dimension)
    dims = list(dims)
    rules = [model.marginals[d].gauss_rule(points_per_dim) for d in dims]
    total = 1
    for r in rules:
        total *= r.nodes.size
        if total > NODE_CAP:
            raise NodeBudgetError(
                f"tensor rule needs {points_per_dim}^{len(dims)} nodes, "
                f"cap is {NODE_CAP}"
            )
    grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=-1)
    w = rules[0].weights
    for r in rules[1:]:
        w = np.multiply.outer(w, r.weights)
    return pts, w.reshape(-1)


def _sobol_uniforms(dim: int, count: int, seed) -> np.ndarray:
    """Scrambled Sobol block of at least `count` points (next power of two)."""
    m = max(1, math.ceil(math.log2(count)))
    gen = np.random.Generator(np.random.Philox(seed))
    eng = qmc.Sobol(d=dim, scramble=True, seed=gen)
    return eng.random_base2(m)


def rqmc_point_sets(model: InputModel, spec: RandomizedQmc) -> list:
    """One transformed point block per replicate, independently scrambled."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.replicates)
    return [
        model.transform(_sobol_uniforms(model.dimension, spec.count, child))
        for child in children
    ]


def _check_target(spec: IntegrationSpec, est: Estimate) -> Estimate:
    tol = getattr(spec, "target_rel_tolerance", None)
    if tol is not None:
        scale = np.max(np.abs(np.atleast_1d(est.value))) or 1.0
        if np.max(np.atleast_1d(est.error_indicator)) > tol * scale:
            warnings.warn(
                f"integration error indicator exceeds the requested relative "
                f"tolerance {tol:g}",
                stacklevel=3,
            )
    return est


def expectation(f: Callable, model: InputModel, spec: IntegrationSpec) -> Estimate:
    """Estimate E[f(X)] under the model's product measure."""
    if isinstance(spec, TensorGauss):
        pts, w = tensor_nodes(model, spec.points_per_dim)
        vals = np.asarray(f(pts), dtype=float)
        _check_finite(vals, pts)
        value = _reduce(w, vals)
        evals = pts.shape[0]
        if spec.points_per_dim == 1:
            err = np.zeros_like(value) if np.ndim(value) else 0.0
        else:
            pts2, w2 = tensor_nodes(model, spec.points_per_dim - 1)
            coarse = _reduce(w2, np.asarray(f(pts2), dtype=float))
            err = np.abs(value - coarse)
            evals += pts2.shape[0]
        return _check_target(spec, Estimate(value, err, evals))

    if isinstance(spec, MonteCarlo):
        pts = model.sample(spec.count, spec.seed)
        vals = np.asarray(f(pts), dtype=float)
        _check_finite(vals, pts)
        value = np.add.reduce(vals, axis=0) / spec.count
        se = np.std(vals, axis=0, ddof=1) / math.sqrt(spec.count) if spec.count > 1 else 0.0
        return _check_target(spec, Estimate(value, se, spec.count))

    if isinstance(spec, RandomizedQmc):
        means = []
        evals = 0
        for pts in rqmc_point_sets(model, spec):
            vals = np.asarray(f(pts), dtype=float)
            _check_finite(vals, pts)
            means.append(np.add.reduce(vals, axis=0) / pts.shape[0])
            evals += pts.shape[0]
        means = np.stack(means, axis=0)
        value = np.add.reduce(means, axis=0) / spec.replicates
        if spec.replicates > 1:
            err = np.std(means, axis=0, ddof=1) / math.sqrt(spec.replicates)
        else:
            err = np.zeros_like(value) if np.ndim(value) else 0.0
        return _check_target(spec, Estimate(value, err, evals))

    raise ConfigError(f"unknown integration spec: {spec!r}")


def conditional_expectation(
    f: Callable,
    model: InputModel,
    fixed: Sequence[int],
    values: Sequence[float],
    spec: IntegrationSpec,
) -> Estimate:
    """E[f(X) | X_u = x_u]: integrate only over the complementary coordinates."""
    fixed = tuple(int(i) for i in fixed)
    values = np.asarray(values, dtype=float)
    if values.shape != (len(fixed),):
        raise ConfigError("values must match the fixed index subset")
    free = [i for i in range(model.dimension) if i not in fixed]
    if not free:
        x = np.zeros(model.dimension)
        x[list(fixed)] = values
        out = np.asarray(f(x[None, :]), dtype=float)
        return Estimate(float(out[0]), 0.0, 1)

    def assemble(block: np.ndarray) -> np.ndarray:
        full = np.empty((block.shape[0], model.dimension))
        full[:, free] = block
        full[:, list(fixed)] = values
        return full

    if isinstance(spec, TensorGauss):
        pts, w = tensor_nodes(model, spec.points_per_dim, dims=free)
        full = assemble(pts)
        vals = np.asarray(f(full), dtype=float)
        _check_finite(vals, full)
        value = _reduce(w, vals)
        evals = pts.shape[0]
        if spec.points_per_dim == 1:
            err = 0.0
        else:
            pts2, w2 = tensor_nodes(model, spec.points_per_dim - 1, dims=free)
            coarse = _reduce(w2, np.asarray(f(assemble(pts2)), dtype=float))
            err = np.abs(value - coarse)
            evals += pts2.shape[0]
        return Estimate(value, err, evals)

    sub = InputModel([model.marginals[i] for i in free])
    wrapped = lambda block: f(assemble(block))  # noqa: E731
    if isinstance(spec, MonteCarlo):
        return expectation(wrapped, sub, spec)
    if isinstance(spec, RandomizedQmc):
        return expectation(wrapped, sub, spec)
    raise ConfigError(f"unknown integration spec: {spec!r}")


def default_backend(dimension: int, seed: int = 20240) -> IntegrationSpec:
    """Substitution policy for the paper-scale integrals.

    Tensor Gauss up to 8 coordinates, scrambled-Sobol RQMC above that.
    """
    if dimension <= 8:
        return TensorGauss(10 if dimension <= 6 else 7)
    return RandomizedQmc(count=1 << 14, seed=seed, replicates=8)


def integration_spec_from_config(record: dict) -> IntegrationSpec:
    try:
        backend = record["backend"]
    except (TypeError, KeyError):
        raise ConfigError(f"integration record needs a 'backend': {record!r}") from None
    tol = record.get("target_rel_tolerance")
    tol = float(tol) if tol is not None else None
    if backend in ("tensor_gauss", "gauss"):
        return TensorGauss(int(record["points_per_dim"]), tol)
    if backend in ("monte_carlo", "mc"):
        return MonteCarlo(int(record["count"]), int(record.get("seed", 0)), tol)
    if backend == "rqmc":
        return RandomizedQmc(
            int(record["count"]), int(record.get("seed", 0)),
            int(record.get("replicates", 8)), tol,
        )
    raise ConfigError(f"unknown integration backend {backend!r}")


def describe_spec(spec: IntegrationSpec) -> str:
    """Short provenance id, e.g. 'tensor_gauss(p=8)' or 'rqmc(n=65536,r=8)'."""
    if isinstance(spec, TensorGauss):
        return f"tensor_gauss(p={spec.points_per_dim})"
    if isinstance(spec, MonteCarlo):
        return f"monte_carlo(n={spec.count},seed={spec.seed})"
    if isinstance(spec, RandomizedQmc):
        return f"rqmc(n={spec.count},r={spec.replicates},seed={spec.seed})"
    return repr(spec)

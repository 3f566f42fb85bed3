"""Frozen desk-scale study configurations behind the CLI `reproduce` command.

Each recipe returns (rows, metadata): rows are flat dicts sharing the CSV
column set (method, S, N, value, error_indicator, provenance, plus function
and, for distribution data, x), metadata echoes the effective configuration.
Numbers that have closed forms are emitted from them; everything else goes
through the integration engine with the seeds and backends recorded.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from . import analysis, anova, hybrid
from . import functions as fn
from .errors import ConfigError
from .factorized import fdd_from_add, univariate_variance_closed_form
from .inputs import uniform_model
from .integrate import IntegrationSpec, RandomizedQmc, TensorGauss, describe_spec

DEFAULT_SEED = 20240
ROW_FIELDS = ("function", "method", "S", "N", "value", "error_indicator", "provenance")


def _row(function, method, order, dim, value, err, provenance, x=None):
    row = {
        "function": function,
        "method": method,
        "S": order,
        "N": dim,
        "value": float(value),
        "error_indicator": float(err),
        "provenance": provenance,
    }
    if x is not None:
        row["x"] = float(x)
    return row


def table1_rows(seed: int = DEFAULT_SEED, int_spec: Optional[IntegrationSpec] = None):
    """Additive-truncation variance errors of the product function, closed form."""
    rows = []
    for dim in range(6, 11):
        spec = fn.get_function("example1-y1", N=dim)
        model = uniform_model(dim)
        sigma2 = spec.exact_moments(model).variance
        add = anova.build_closed_form(spec, model)
        for order in range(1, dim + 1):
            err = analysis.relative_variance_error(sigma2, add.truncated_variance(order))
            rows.append(
                _row("example1-y1", "add", order, dim, err, 0.0, "closed_form")
            )
    return rows, {"seed": seed, "backend": "closed_form"}


def table2_rows(seed: int = DEFAULT_SEED, int_spec: Optional[IntegrationSpec] = None):
    """Multiplicative-truncation variance errors of the sum function, numeric.

    Backend policy unless overridden: tensor Gauss through 8 coordinates,
    scrambled-Sobol RQMC above, with the target's exact moments as a control
    variate in both cases.
    """
    rows = []
    for dim in range(6, 11):
        spec = fn.get_function("example1-y2", N=dim)
        model = uniform_model(dim)
        em = spec.exact_moments(model)
        add = anova.build_closed_form(spec, model)
        fdd = fdd_from_add(add)
        if int_spec is not None:
            backend = int_spec
        elif dim <= 7:
            backend = TensorGauss(8)
        elif dim == 8:
            backend = TensorGauss(7)
        else:
            backend = RandomizedQmc(1 << 20, seed=seed, replicates=8)
        control = (spec.evaluate_points, em.mean, em.variance)
        moments = fdd.moments_multi(range(1, 6), backend, control=control)
        for order in range(1, 6):
            mom = moments[order]
            err = analysis.relative_variance_error(em.variance, mom.variance)
            rows.append(
                _row(
                    "example1-y2", "fdd", order, dim, err,
                    mom.variance_error / em.variance, describe_spec(backend),
                )
            )
    return rows, {
        "seed": seed,
        "backend": describe_spec(int_spec) if int_spec else "policy(tg<=8,rqmc)",
    }


def _example2_models(order, add, fdd, spec, backend):
    cross = hybrid.compute_cross_moments(spec, add, fdd, order, backend)
    lin = hybrid.fit_linear(cross, add.y_empty)
    con = hybrid.fit_linear_constrained(cross, add.y_empty)
    return cross, lin, con


def table3_rows(seed: int = DEFAULT_SEED, int_spec: Optional[IntegrationSpec] = None):
    """Variance errors of all four approximations of the standardized blend."""
    spec = fn.get_function("example2")
    model = uniform_model(5)
    em = spec.exact_moments(model)
    add = anova.build_closed_form(spec, model)
    fdd = fdd_from_add(add)
    backend = int_spec or TensorGauss(16)
    tag = describe_spec(backend)
    rows = []
    for order in range(1, 5):
        add_err = analysis.relative_variance_error(
            em.variance, add.truncated_variance(order)
        )
        rows.append(_row("example2", "add", order, 5, add_err, 0.0, "closed_form"))
        cross, lin, con = _example2_models(order, add, fdd, spec, backend)
        pairs = [
            ("fdd", cross.var_fdd, cross.error_indicators["var_fdd"]),
            ("hdd_linear", lin.variance(), 0.0),
            ("hdd_constrained", con.variance(), 0.0),
        ]
        for method, var, err in pairs:
            rows.append(
                _row(
                    "example2", method, order, 5,
                    analysis.relative_variance_error(em.variance, var),
                    err / em.variance, tag,
                )
            )
    return rows, {"seed": seed, "backend": tag}


def example2_fdd_means(
    seed: int = DEFAULT_SEED, int_spec: Optional[IntegrationSpec] = None
):
    """Numeric means of the order-1..4 multiplicative truncations (all ~ 5)."""
    spec = fn.get_function("example2")
    model = uniform_model(5)
    add = anova.build_closed_form(spec, model)
    fdd = fdd_from_add(add)
    backend = int_spec or TensorGauss(16)
    rows = []
    for order in range(1, 5):
        mom = fdd.moments(order, backend)
        rows.append(
            _row(
                "example2", "fdd", order, 5, mom.mean, mom.mean_error,
                describe_spec(backend),
            )
        )
    return rows, {"seed": seed, "backend": describe_spec(backend)}


def table4_rows(p: float = 0.99, seed: int = DEFAULT_SEED,
                int_spec: Optional[IntegrationSpec] = None):
    """The nine effective dimensions of the three study functions."""
    rows = []

    def scan(tag, dim, method, provider, sigma2, provenance):
        s_eff, _ = analysis.effective_dimension_scan(provider, dim, sigma2, p, method)
        rows.append(_row(tag, method, None, dim, s_eff, 0.0, provenance))

    # product function, N = 6
    spec = fn.get_function("example1-y1", N=6)
    model = uniform_model(6)
    em = spec.exact_moments(model)
    add = anova.build_closed_form(spec, model)
    fdd = fdd_from_add(add)
    backend = int_spec or TensorGauss(8)
    tag6 = describe_spec(backend)
    scan("example1-y1", 6, "add", add.truncated_variance, em.variance, "closed_form")
    scan(
        "example1-y1", 6, "fdd",
        lambda s: fdd.moments(s, backend).variance, em.variance, tag6,
    )
    scan(
        "example1-y1", 6, "hdd_linear",
        lambda s: hybrid.fit_linear(
            hybrid.compute_cross_moments(spec, add, fdd, s, backend), add.y_empty
        ).variance(),
        em.variance, tag6,
    )

    # sum function, N = 10
    spec = fn.get_function("example1-y2", N=10)
    model = uniform_model(10)
    em = spec.exact_moments(model)
    add = anova.build_closed_form(spec, model)
    fdd = fdd_from_add(add)
    backend10 = int_spec or RandomizedQmc(1 << 16, seed=seed, replicates=8)
    tag10 = describe_spec(backend10)
    control = (spec.evaluate_points, em.mean, em.variance)
    scan("example1-y2", 10, "add", add.truncated_variance, em.variance, "closed_form")
    scan(
        "example1-y2", 10, "fdd",
        lambda s: fdd.moments(s, backend10, control=control).variance,
        em.variance, tag10,
    )
    scan(
        "example1-y2", 10, "hdd_linear",
        lambda s: hybrid.fit_linear(
            hybrid.compute_cross_moments(spec, add, fdd, s, backend10), add.y_empty
        ).variance(),
        em.variance, tag10,
    )

    # standardized blend, N = 5
    spec = fn.get_function("example2")
    model = uniform_model(5)
    em = spec.exact_moments(model)
    add = anova.build_closed_form(spec, model)
    fdd = fdd_from_add(add)
    backend5 = int_spec or TensorGauss(16)
    tag5 = describe_spec(backend5)
    scan("example2", 5, "add", add.truncated_variance, em.variance, "closed_form")
    scan(
        "example2", 5, "fdd",
        lambda s: fdd.moments(s, backend5).variance, em.variance, tag5,
    )
    scan(
        "example2", 5, "hdd_linear",
        lambda s: hybrid.fit_linear(
            hybrid.compute_cross_moments(spec, add, fdd, s, backend5), add.y_empty
        ).variance(),
        em.variance, tag5,
    )
    return rows, {"seed": seed, "p": p}


def power_mean_univariate_models(m: int, dim: int = 10, seed: int = DEFAULT_SEED,
                                 int_spec: Optional[IntegrationSpec] = None):
    """Order-1 pipeline for the power-of-mean family: decompositions + fits."""
    spec = fn.PowerMean(m, dim)
    model = uniform_model(dim)
    em = spec.exact_moments(model)
    # conditional means of a degree-m polynomial integrate exactly with
    # ceil((m+1)/2) Gauss points per complementary coordinate
    p_int = (m + 2) // 2
    add = anova.build_numeric(
        spec, model, 1, TensorGauss(p_int), grid_points=max(12, m + 2)
    )
    fdd = fdd_from_add(add)
    backend = int_spec or RandomizedQmc(1 << 16, seed=seed, replicates=8)
    cross = hybrid.compute_cross_moments(spec, add, fdd, 1, backend)
    lin = hybrid.fit_linear(cross, add.y_empty)
    non = hybrid.fit_nonlinear(cross, add.y_empty)
    return spec, model, em, add, fdd, cross, lin, non, backend


def example4_error_rows(
    seed: int = DEFAULT_SEED,
    int_spec: Optional[IntegrationSpec] = None,
    exponents: Iterable[int] = range(2, 9),
):
    """Order-1 variance errors of all four approximations vs the exponent."""
    rows = []
    for m in exponents:
        spec, model, em, add, fdd, cross, lin, non, backend = (
            power_mean_univariate_models(m, 10, seed, int_spec)
        )
        v_add = add.truncated_variance(1)
        v_mul = univariate_variance_closed_form(
            fdd.one_plus_z_empty,
            [add.component_variances[(i,)] for i in range(10)],
        )
        tag = describe_spec(backend)
        for method, var, prov in (
            ("add", v_add, add.provenance),
            ("fdd", v_mul, add.provenance),
            ("hdd_linear", lin.variance(), tag),
            ("hdd_nonlinear", non.variance(), tag),
        ):
            rows.append(
                _row(
                    "example4", method, 1, 10,
                    analysis.relative_variance_error(em.variance, var),
                    0.0, prov, x=m,
                )
            )
    return rows, {"seed": seed, "m": list(exponents)}


def example4_ccdf_rows(
    m: int = 8,
    count: int = 10_000_000,
    seed: int = DEFAULT_SEED,
    levels: int = 60,
    int_spec: Optional[IntegrationSpec] = None,
):
    """Upper-tail CCDF of the target and its four order-1 approximations."""
    spec, model, em, add, fdd, cross, lin, non, backend = (
        power_mean_univariate_models(m, 10, seed, int_spec)
    )
    evaluators = {
        "exact": spec.evaluate_points,
        "add": lambda x: add.evaluate_truncated_points(1, x),
        "fdd": lambda x: fdd.evaluate_truncated_points(1, x),
        "hdd_linear": lambda x: hybrid.evaluate_points(lin, add, fdd, x),
        "hdd_nonlinear": lambda x: hybrid.evaluate_points(non, add, fdd, x),
    }
    dists = {
        name: analysis.empirical_distribution(ev, model, count, seed + 1, bins=200)
        for name, ev in evaluators.items()
    }
    p_min = max(10.0 / count, 1e-9)
    ps = np.logspace(math.log10(0.5), math.log10(p_min), levels)
    thresholds = dists["exact"].quantile(1.0 - ps)
    prov = f"monte_carlo(n={count},seed={seed + 1})"
    rows = []
    for name, dist in dists.items():
        cc = dist.ccdf(thresholds)
        for t, c in zip(thresholds, cc):
            rows.append(_row("example4", name, 1, 10, c, 0.0, prov, x=t))
    return rows, {"seed": seed, "m": m, "count": count}


def example2_pdf_rows(
    count: int = 1_000_000,
    seed: int = DEFAULT_SEED,
    bins: int = 60,
    int_spec: Optional[IntegrationSpec] = None,
):
    """Normalized histograms of the blend and its order-1..4 approximations."""
    spec = fn.get_function("example2")
    model = uniform_model(5)
    add = anova.build_closed_form(spec, model)
    fdd = fdd_from_add(add)
    backend = int_spec or TensorGauss(16)
    samples = model.sample(count, seed + 2)
    exact_vals = spec.evaluate_points(samples)
    edges = np.histogram_bin_edges(exact_vals, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    prov = f"monte_carlo(n={count},seed={seed + 2})"
    rows = []

    def emit(name, order, values):
        heights, _ = np.histogram(values, bins=edges, density=True)
        for x, h in zip(centers, heights):
            rows.append(_row("example2", name, order, 5, h, 0.0, prov, x=x))

    emit("exact", None, exact_vals)
    for order in range(1, 5):
        cross, lin, _ = _example2_models(order, add, fdd, spec, backend)
        emit("add", order, add.evaluate_truncated_points(order, samples))
        emit("fdd", order, fdd.evaluate_truncated_points(order, samples))
        emit("hdd_linear", order, hybrid.evaluate_points(lin, add, fdd, samples))
    return rows, {"seed": seed, "count": count, "bins": bins}


REPRODUCE = {
    "table1": table1_rows,
    "table2": table2_rows,
    "table3": table3_rows,
    "table4": table4_rows,
    "example4-errors": example4_error_rows,
    "example4-ccdf": example4_ccdf_rows,
    "example2-pdf": example2_pdf_rows,
}


def run_reproduce(name: str, **overrides):
    try:
        recipe = REPRODUCE[name]
    except KeyError:
        raise ConfigError(
            f"unknown reproduce target {name!r}; known: {', '.join(sorted(REPRODUCE))}"
        ) from None
    return recipe(**overrides)

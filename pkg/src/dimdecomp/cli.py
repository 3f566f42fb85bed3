"""Command-line front end.

Two commands:

* ``dimdecomp reproduce <target>`` runs one of the frozen study recipes
  (table1..table4, example4-errors, example4-ccdf, example2-pdf) and writes
  the result table; ``--seed``, ``--backend`` and ``--out`` override the
  frozen configuration.
* ``dimdecomp analyze`` runs a configured analysis (variance_table,
  effective_dimension, univariate_errors, distribution) on a registered or
  inline-defined function; settings come from a JSON config file with flags
  taking precedence.

Outputs are CSV (6 significant digits) or JSON; identical configurations
produce byte-identical files.  Exit codes: 0 success, 2 configuration error,
3 numeric failure; errors are emitted as a JSON record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import numpy as np

from . import analysis, anova, hybrid, recipes
from . import functions as fn
from .errors import ConfigError, DimdecompError
from .factorized import fdd_from_add
from .inputs import InputModel, marginal_from_config, uniform_model
from .integrate import (
    IntegrationSpec,
    MonteCarlo,
    RandomizedQmc,
    TensorGauss,
    default_backend,
    describe_spec,
    expectation,
    integration_spec_from_config,
)

CSV_COLUMNS = ["function", "method", "S", "N", "x", "value", "error_indicator", "provenance"]
ANALYSES = ("variance_table", "effective_dimension", "univariate_errors", "distribution")
METHODS = ("add", "fdd", "hdd_linear", "hdd_constrained", "hdd_nonlinear")


def parse_backend(text: str) -> IntegrationSpec:
    """Parse 'tensor_gauss:16', 'rqmc:65536:8:SEED' or 'mc:10000:SEED'."""
    parts = text.split(":")
    name = parts[0]
    try:
        if name in ("tensor_gauss", "gauss", "tg"):
            return TensorGauss(int(parts[1]))
        if name == "rqmc":
            count = int(parts[1])
            replicates = int(parts[2]) if len(parts) > 2 else 8
            seed = int(parts[3]) if len(parts) > 3 else recipes.DEFAULT_SEED
            return RandomizedQmc(count, seed, replicates)
        if name in ("mc", "monte_carlo"):
            seed = int(parts[2]) if len(parts) > 2 else recipes.DEFAULT_SEED
            return MonteCarlo(int(parts[1]), seed)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"cannot parse backend {text!r}: {exc}") from None
    raise ConfigError(f"unknown backend {text!r}")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_rows(rows, metadata, path: Optional[str], fmt: str):
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for row in rows:
            lines.append(",".join(_fmt(row.get(col)) for col in CSV_COLUMNS))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        text = json.dumps(
            {"metadata": metadata, "rows": rows}, sort_keys=True, indent=1
        ) + "\n"
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    if path:
        with open(path, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# analyze


def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path) as handle:
            cfg = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def resolve_run(cfg: dict):
    """Turn a merged config dict into (spec, model, settings)."""
    if "input_model" in cfg:
        model = InputModel([marginal_from_config(r) for r in cfg["input_model"]])
    else:
        model = None

    func = cfg.get("function")
    if func is None:
        raise ConfigError("config needs a 'function' (name or inline record)")
    params = dict(cfg.get("params", {}))
    if isinstance(func, str):
        spec = fn.get_function(func, **params)
        if model is None:
            model = uniform_model(spec.dimension)
    else:
        if model is None:
            raise ConfigError("inline function records need an 'input_model'")
        spec = fn.spec_from_config(func, model)
    if model.dimension != spec.dimension:
        raise ConfigError(
            f"input model has {model.dimension} coordinates, function needs "
            f"{spec.dimension}"
        )

    kind = cfg.get("analysis", "variance_table")
    if kind not in ANALYSES:
        raise ConfigError(f"unknown analysis {kind!r}; known: {', '.join(ANALYSES)}")
    methods = cfg.get("methods", ["add", "fdd", "hdd_linear"])
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; known: {', '.join(METHODS)}")

    truncations = cfg.get("truncations")
    if truncations is None:
        truncations = [1]
    elif isinstance(truncations, dict):
        truncations = list(range(int(truncations["min"]), int(truncations["max"]) + 1))
    truncations = [int(s) for s in truncations]
    if any(s < 0 or s > spec.dimension for s in truncations):
        raise ConfigError(
            f"truncations must lie in [0, {spec.dimension}], got {truncations}"
        )

    seed = int(cfg.get("seed", recipes.DEFAULT_SEED))
    if "integration" in cfg:
        backend = integration_spec_from_config(cfg["integration"])
    else:
        backend = default_backend(model.dimension, seed)
    settings = {
        "analysis": kind,
        "methods": methods,
        "truncations": truncations,
        "seed": seed,
        "backend": backend,
        "count": int(cfg.get("count", 1_000_000)),
        "bins": int(cfg.get("bins", 100)),
        "statistic": cfg.get("statistic", "pdf"),
        "p": float(cfg.get("p", 0.99)),
        "grid_points": int(cfg.get("grid_points", 12)),
    }
    return spec, model, settings


def _build_decompositions(spec, model, max_order, settings):
    if isinstance(spec, fn.StructuredSpec):
        add = anova.build_closed_form(spec, model)
    else:
        add = anova.build_numeric(
            spec, model, max_order, settings["backend"],
            grid_points=settings["grid_points"],
        )
    return add, fdd_from_add(add)


def _exact_moments_or_estimate(spec, model, backend):
    em = spec.exact_moments(model)
    if em is not None:
        return em.mean, em.variance, "closed_form"
    mean = float(expectation(spec.evaluate_points, model, backend).value)
    var = float(
        expectation(
            lambda x: (spec.evaluate_points(x) - mean) ** 2, model, backend
        ).value
    )
    return mean, var, describe_spec(backend)


def _hybrid_for(method, spec, add, fdd, order, backend):
    cross = hybrid.compute_cross_moments(spec, add, fdd, order, backend)
    if method == "hdd_linear":
        return hybrid.fit_linear(cross, add.y_empty)
    if method == "hdd_constrained":
        return hybrid.fit_linear_constrained(cross, add.y_empty)
    return hybrid.fit_nonlinear(cross, add.y_empty)


def run_analyze(cfg: dict):
    spec, model, st = resolve_run(cfg)
    backend = st["backend"]
    name = spec.name or "inline"
    max_order = max(st["truncations"], default=1) or 1
    add, fdd = _build_decompositions(spec, model, max_order, st)
    mean, sigma2, sigma_prov = _exact_moments_or_estimate(spec, model, backend)
    tag = describe_spec(backend)
    rows = []

    if st["analysis"] == "variance_table":
        for order in st["truncations"]:
            for method in st["methods"]:
                if method == "add":
                    var, err, prov = add.truncated_variance(order), 0.0, add.provenance
                elif method == "fdd":
                    mom = fdd.moments(order, backend)
                    var, err, prov = mom.variance, mom.variance_error, tag
                else:
                    mod = _hybrid_for(method, spec, add, fdd, order, backend)
                    var, err, prov = mod.variance(), 0.0, tag
                rows.append(
                    recipes._row(
                        name, method, order, model.dimension,
                        analysis.relative_variance_error(sigma2, var),
                        err / sigma2, prov,
                    )
                )
    elif st["analysis"] == "effective_dimension":
        for method in st["methods"]:
            if method == "add":
                provider, prov = add.truncated_variance, add.provenance
            elif method == "fdd":
                provider = lambda s: fdd.moments(s, backend).variance  # noqa: E731
                prov = tag
            else:
                provider = (
                    lambda s, m=method: _hybrid_for(m, spec, add, fdd, s, backend).variance()
                )
                prov = tag
            s_eff, _ = analysis.effective_dimension_scan(
                provider, model.dimension, sigma2, st["p"], method
            )
            rows.append(
                recipes._row(name, method, None, model.dimension, s_eff, 0.0, prov)
            )
    elif st["analysis"] == "univariate_errors":
        lin = _hybrid_for("hdd_linear", spec, add, fdd, 1, backend)
        non = (
            _hybrid_for("hdd_nonlinear", spec, add, fdd, 1, backend)
            if "hdd_nonlinear" in st["methods"]
            else None
        )
        report = analysis.univariate_errors(sigma2, add, fdd, lin, non)
        values = {
            "add": report.e_add_1,
            "fdd": report.e_fdd_1,
            "hdd_linear": report.e_hdd_1_linear,
            "hdd_nonlinear": report.e_hdd_1_nonlinear,
        }
        for method in st["methods"]:
            if method == "hdd_constrained":
                continue  # coincides with hdd_linear at order 1
            if values.get(method) is None:
                continue
            rows.append(
                recipes._row(name, method, 1, model.dimension, values[method], 0.0, tag)
            )
    else:  # distribution
        order = st["truncations"][0]
        evaluators = {"exact": spec.evaluate_points}
        for method in st["methods"]:
            if method == "add":
                evaluators["add"] = lambda x: add.evaluate_truncated_points(order, x)
            elif method == "fdd":
                evaluators["fdd"] = lambda x: fdd.evaluate_truncated_points(order, x)
            else:
                mod = _hybrid_for(method, spec, add, fdd, order, backend)
                evaluators[method] = (
                    lambda x, m=mod: hybrid.evaluate_points(m, add, fdd, x)
                )
        prov = f"monte_carlo(n={st['count']},seed={st['seed']})"
        dists = {
            method: analysis.empirical_distribution(
                ev, model, st["count"], st["seed"], bins=st["bins"]
            )
            for method, ev in evaluators.items()
        }
        if st["statistic"] == "ccdf":
            # thresholds at log-spaced exceedance levels of the target
            p_min = max(10.0 / st["count"], 1e-9)
            ps = np.logspace(np.log10(0.5), np.log10(p_min), st["bins"])
            thresholds = dists["exact"].quantile(1.0 - ps)
            for method, dist in dists.items():
                for x, c in zip(thresholds, dist.ccdf(thresholds)):
                    rows.append(
                        recipes._row(
                            name, method, order if method != "exact" else None,
                            model.dimension, c, 0.0, prov, x=x,
                        )
                    )
        else:
            for method, dist in dists.items():
                centers = 0.5 * (dist.bin_edges[:-1] + dist.bin_edges[1:])
                for x, h in zip(centers, dist.pdf_heights):
                    rows.append(
                        recipes._row(
                            name, method, order if method != "exact" else None,
                            model.dimension, h, 0.0, prov, x=x,
                        )
                    )

    meta = {
        "function": name,
        "analysis": st["analysis"],
        "seed": st["seed"],
        "backend": tag,
        "exact_variance": sigma2,
        "exact_variance_provenance": sigma_prov,
        "tolerances": {"csv_digits": 6},
    }
    return rows, meta


# ---------------------------------------------------------------------------
# argument parsing / entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dimdecomp",
        description="Additive, multiplicative and hybrid dimensional "
        "decompositions for second-moment uncertainty analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rep = sub.add_parser("reproduce", help="run a frozen study recipe")
    rep.add_argument("target", choices=sorted(recipes.REPRODUCE))
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--backend", type=str, default=None,
                     help="e.g. tensor_gauss:16 or rqmc:65536:8:SEED")
    rep.add_argument("--out", type=str, default=None)
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    rep.add_argument("--p", type=float, default=None, help="threshold for table4")
    rep.add_argument("--m", type=int, default=None, help="exponent for example4-ccdf")
    rep.add_argument("--count", type=int, default=None,
                     help="sample count for distribution recipes")

    ana = sub.add_parser("analyze", help="run a configured analysis")
    ana.add_argument("--config", type=str, default=None, help="JSON config file")
    ana.add_argument("--function", type=str, default=None)
    ana.add_argument("--analysis", choices=ANALYSES, default=None)
    ana.add_argument("--methods", type=str, default=None,
                     help="comma-separated subset of " + ",".join(METHODS))
    ana.add_argument("--truncations", type=str, default=None,
                     help="comma-separated orders, e.g. 1,2,3")
    ana.add_argument("--m", type=int, default=None, help="exponent parameter")
    ana.add_argument("--N", type=int, default=None, help="dimension parameter")
    ana.add_argument("--count", type=int, default=None)
    ana.add_argument("--bins", type=int, default=None)
    ana.add_argument("--statistic", choices=("pdf", "ccdf"), default=None,
                     help="distribution analysis output kind")
    ana.add_argument("--p", type=float, default=None)
    ana.add_argument("--seed", type=int, default=None)
    ana.add_argument("--backend", type=str, default=None)
    ana.add_argument("--out", type=str, default=None)
    ana.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "reproduce":
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.backend is not None:
                overrides["int_spec"] = parse_backend(args.backend)
            if args.p is not None:
                if args.target != "table4":
                    raise ConfigError("--p applies to table4 only")
                overrides["p"] = args.p
            if args.m is not None:
                if args.target != "example4-ccdf":
                    raise ConfigError("--m applies to example4-ccdf only")
                overrides["m"] = args.m
            if args.count is not None:
                if args.target not in ("example4-ccdf", "example2-pdf"):
                    raise ConfigError("--count applies to distribution recipes only")
                overrides["count"] = args.count
            rows, meta = recipes.run_reproduce(args.target, **overrides)
            meta = {"target": args.target, **meta}
            write_rows(rows, meta, args.out, args.format)
        else:
            cfg = load_config(args.config)
            if args.function is not None:
                cfg["function"] = args.function
            if args.analysis is not None:
                cfg["analysis"] = args.analysis
            if args.methods is not None:
                cfg["methods"] = args.methods.split(",")
            if args.truncations is not None:
                cfg["truncations"] = [int(s) for s in args.truncations.split(",")]
            params = dict(cfg.get("params", {}))
            if args.m is not None:
                params["m"] = args.m
            if args.N is not None:
                params["N"] = args.N
            if params:
                cfg["params"] = params
            for key in ("count", "bins", "p", "seed", "statistic"):
                val = getattr(args, key)
                if val is not None:
                    cfg[key] = val
            if args.backend is not None:
                cfg["integration"] = _backend_record(parse_backend(args.backend))
            rows, meta = run_analyze(cfg)
            write_rows(rows, meta, args.out, args.format)
        return 0
    except ConfigError as exc:
        _emit_error("config_error", exc)
        return 2
    except DimdecompError as exc:
        _emit_error("numeric_error", exc)
        return 3
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        _emit_error("numeric_error", exc)
        return 3


def _backend_record(spec: IntegrationSpec) -> dict:
    if isinstance(spec, TensorGauss):
        return {"backend": "tensor_gauss", "points_per_dim": spec.points_per_dim}
    if isinstance(spec, MonteCarlo):
        return {"backend": "monte_carlo", "count": spec.count, "seed": spec.seed}
    return {
        "backend": "rqmc",
        "count": spec.count,
        "seed": spec.seed,
        "replicates": spec.replicates,
    }


def _emit_error(kind: str, exc: Exception):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with -s or check captured output).

Criterion 2 compares numeric results against upstream reference values whose
own integration error exceeds the stated tolerance on the smallest entries;
it is expected to fail and is marked `reference_gap` so it can be deselected
with `-m "not reference_gap"`.  Two independent converged backends agree
with each other on those entries; the diagnostics below print both.
"""

import math
import time

import numpy as np
import pytest

from dimdecomp import analysis, anova, hybrid, recipes
from dimdecomp import functions as fn
from dimdecomp.factorized import fdd_from_add, univariate_variance_closed_form
from dimdecomp.inputs import InputModel, Normal, Uniform, uniform_model
from dimdecomp.integrate import TensorGauss, tensor_nodes
from dimdecomp.subsets import subsets_up_to

# printed reference values ------------------------------------------------

TABLE1 = {  # additive-truncation variance errors of the product function
    6: [0.566974, 0.206118, 4.5738e-2, 5.6430e-3, 2.9700e-4, 0.0],
    7: [0.640558, 0.281116, 8.1426e-2, 1.4862e-2, 1.5496e-3, 7.0437e-5, 0.0],
    8: [0.703332, 0.357219, 0.126477, 3.0335e-2, 4.6969e-3, 4.2391e-4,
        1.6956e-5, 0.0],
    9: [0.75646, 0.43174, 0.179179, 5.2899e-2, 1.0806e-2, 1.4518e-3,
        1.1548e-4, 4.1244e-6, 0.0],
    10: [0.801087, 0.502717, 0.237499, 8.2789e-2, 2.0905e-2, 3.7149e-3,
         4.4062e-4, 3.1328e-5, 1.0106e-6, 0.0],
}

TABLE2 = {  # multiplicative-truncation variance errors of the sum function
    6: [2.3436e-2, 1.1620e-3, 1.0918e-4, 1.7728e-5, 2.5480e-6],
    7: [2.0641e-2, 9.2133e-4, 7.8170e-5, 1.3099e-5, 2.5579e-6],
    8: [1.8420e-2, 7.4728e-4, 5.5198e-5, 9.3640e-6, 1.9704e-6],
    9: [1.6620e-2, 6.1788e-4, 4.2094e-5, 6.7126e-6, 1.4152e-6],
    10: [1.5134e-2, 5.1923e-4, 3.2728e-5, 4.8768e-6, 9.9971e-7],
}

TABLE3 = {  # standardized blend, N = 5: method -> errors at S = 1..4
    "add": [0.139942, 3.9452e-2, 5.9550e-3, 3.7219e-4],
    "fdd": [9.8251e-2, 2.8834e-2, 3.1717e-3, 3.7008e-4],
    "hdd_linear": [2.2734e-2, 1.5503e-3, 1.8656e-4, 1.4099e-5],
    "hdd_constrained": [2.2734e-2, 5.5528e-3, 5.7923e-3, 5.0992e-4],
}

TABLE4 = {  # (function, method) -> effective dimension at p = 0.99
    ("example1-y1", "add"): 4,
    ("example1-y1", "fdd"): 1,
    ("example1-y1", "hdd_linear"): 1,
    ("example1-y2", "add"): 1,
    ("example1-y2", "fdd"): 2,
    ("example1-y2", "hdd_linear"): 1,
    ("example2", "add"): 3,
    ("example2", "fdd"): 3,
    ("example2", "hdd_linear"): 2,
}


def record(num, desc, ok, detail=""):
    tail = f"  [{detail}]" if detail else ""
    print(f"\nACCEPTANCE criterion {num}: {'PASS' if ok else 'FAIL'} - {desc}{tail}")


def within_5_significant_digits(ours, printed):
    # standard significant-digit agreement: relative error <= 0.5 * 10^(1-5)
    if printed == 0.0:
        return abs(ours) <= 1e-12
    return abs(ours - printed) / abs(printed) <= 0.5e-4


def test_criterion_1_table1_closed_form():
    t0 = time.perf_counter()
    rows, _ = recipes.table1_rows()
    elapsed = time.perf_counter() - t0
    got = {(r["N"], r["S"]): r["value"] for r in rows}
    bad = []
    for dim, col in TABLE1.items():
        for order, printed in enumerate(col, start=1):
            if not within_5_significant_digits(got[(dim, order)], printed):
                bad.append((dim, order, got[(dim, order)], printed))
    ok = not bad and elapsed < 1.0 and len(got) == 40
    record(1, "table1: 40 closed-form entries to 5 significant digits",
           ok, f"{elapsed:.2f}s")
    assert not bad, bad
    assert elapsed < 1.0
    assert len(got) == 40


@pytest.mark.reference_gap
def test_criterion_2_table2_numeric_fdd():
    t0 = time.perf_counter()
    rows, _ = recipes.table2_rows()  # frozen config: scrambled Sobol 2^16 x 8
    elapsed = time.perf_counter() - t0
    got = {(r["N"], r["S"]): (r["value"], r["error_indicator"]) for r in rows}
    deviations = []
    for dim, col in TABLE2.items():
        for order, printed in enumerate(col, start=1):
            ours, err = got[(dim, order)]
            deviations.append((dim, order, printed, ours, ours / printed - 1.0, err))
    bad = [d for d in deviations if abs(d[4]) > 0.02]
    ok = not bad and elapsed < 300.0
    record(2, "table2: 25 numeric entries within 2% of printed values",
           ok, f"{elapsed:.1f}s, {len(bad)} beyond 2%")
    print("  N  S   printed      computed     deviation  indicator")
    for dim, order, printed, ours, dev, err in deviations:
        flag = "  <-- beyond 2%" if abs(dev) > 0.02 else ""
        print(f"  {dim:2d} {order:2d}  {printed:.4e}  {ours:.4e}  {dev:+8.1%}  "
              f"{err:.1e}{flag}")
    assert elapsed < 300.0
    assert not bad, (
        "entries beyond the 2% band; converged tensor-Gauss and scrambled-"
        "Sobol recomputations agree with each other but not with the printed "
        f"values on these entries: {[(d[0], d[1]) for d in bad]}"
    )


def test_criterion_3_table3_blend():
    rows, _ = recipes.table3_rows()  # frozen config: tensor Gauss p=16
    got = {(r["method"], r["S"]): r["value"] for r in rows}
    bad = []
    for order in range(1, 5):
        if not within_5_significant_digits(got[("add", order)], TABLE3["add"][order - 1]):
            bad.append(("add", order))
        for method in ("fdd", "hdd_linear", "hdd_constrained"):
            printed = TABLE3[method][order - 1]
            if abs(got[(method, order)] / printed - 1.0) > 0.05:
                bad.append((method, order))
    orderings = all(
        got[("hdd_linear", s)] < got[("add", s)]
        and got[("hdd_linear", s)] < got[("fdd", s)]
        for s in range(1, 5)
    )
    degrades = got[("hdd_constrained", 3)] > got[("hdd_constrained", 2)]
    ok = not bad and orderings and degrades
    record(3, "table3: blend errors (add exact, others within 5%, orderings)", ok)
    assert not bad, bad
    assert orderings
    assert degrades


def test_criterion_4_table4_effective_dimensions():
    rows, _ = recipes.table4_rows(p=0.99)
    got = {(r["function"], r["method"]): int(r["value"]) for r in rows}
    ok = got == TABLE4
    record(4, "table4: nine effective dimensions match exactly", ok, str(got))
    assert got == TABLE4


def _random_spec(rng):
    dim = int(rng.integers(2, 9))
    marginals = []
    for _ in range(dim):
        if rng.random() < 0.7:
            a = rng.uniform(-0.5, 0.5)
            marginals.append(Uniform(a, a + rng.uniform(0.5, 2.0)))
        else:
            marginals.append(Normal(rng.uniform(-0.5, 0.5), rng.uniform(0.3, 1.0)))
    model = InputModel(marginals)
    h_coeffs = rng.uniform(0.3, 1.2, size=(dim, 3))
    g_coeffs = rng.uniform(-0.6, 0.6, size=(dim, 3))
    terms = [
        fn.term_from_callables(
            i, model.marginals[i],
            h=fn._poly_callable(h_coeffs[i]),
            g=fn._poly_callable(g_coeffs[i]),
        )
        for i in range(dim)
    ]
    nu0 = rng.uniform(0.5, 2.0) * (1 if rng.random() < 0.8 else -1)
    mu0 = rng.uniform(-1.0, 1.0)
    spec = fn.Blended(nu0, mu0, terms)
    if abs(spec.constant_term()) < 0.3:
        spec = fn.Blended(nu0, mu0 + 2.0, terms)
    return spec, model, (h_coeffs, g_coeffs)


def test_criterion_5_property_suite():
    rng = np.random.default_rng(20240)
    trials = 200
    failures = []
    for trial in range(trials):
        spec, model, (h_coeffs, g_coeffs) = _random_spec(rng)
        dim = model.dimension
        sigma2 = spec.exact_variance()
        scale = max(sigma2, 1.0)
        add = anova.build_closed_form(spec, model)
        fdd = fdd_from_add(add)

        # zero means and orthogonality, checked by quadrature on sampled subsets
        probes = [(0,), (dim - 1,), (0, dim - 1)]
        if dim >= 3:
            probes.append((0, 1, 2))
        for u in probes:
            rules = [model.marginals[d].gauss_rule(8) for d in u]
            grids = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
            pts = np.stack([g.reshape(-1) for g in grids], axis=-1)
            w = rules[0].weights
            for r in rules[1:]:
                w = np.multiply.outer(w, r.weights)
            w = w.reshape(-1)
            vals = add.component_values(u, pts)
            if abs(w @ vals) > 1e-8 * scale:
                failures.append((trial, "zero_mean", u, float(w @ vals)))
            for v in [(u[0],), u[:2]]:
                if v != u and set(v) <= set(u):
                    other = add.component_values(v, pts[:, [u.index(d) for d in v]])
                    if abs(w @ (vals * other)) > 1e-8 * scale:
                        failures.append((trial, "orthogonality", (u, v)))

        # order-1 variance inequality and error dominance
        cross = hybrid.closed_univariate_cross_moments(spec, add, fdd)
        if cross.var_fdd < cross.var_add - 1e-12 * scale:
            failures.append((trial, "variance_inequality"))
        lin = hybrid.fit_linear(cross, add.y_empty)
        if abs(lin.alpha + lin.beta - 1.0) > 1e-12:
            failures.append((trial, "weights_sum", lin.alpha + lin.beta))
        report = analysis.univariate_errors(sigma2, add, fdd, lin)
        if report.e_hdd_1_linear > min(report.e_add_1, report.e_fdd_1) + 1e-10:
            failures.append((trial, "error_dominance"))
        if not (report.lemma_holds and report.theorem_holds):
            failures.append((trial, "report_flags"))

        # variance formula of the 3-parameter model at zero interaction
        # weight must equal the 2-parameter formula
        non0 = hybrid.HybridModel(
            "nonlinear3", 1, lin.alpha, lin.beta, 0.0, cross, add.y_empty
        )
        if abs(hybrid.hybrid_variance(non0) - hybrid.hybrid_variance(lin)) > 1e-12 * scale:
            failures.append((trial, "gamma_zero_reduction"))

        # exact-reproduction cases from the same draws
        if trial % 4 == 0:
            g_terms = [
                fn.term_from_callables(i, model.marginals[i], g=fn._poly_callable(g_coeffs[i]))
                for i in range(dim)
            ]
            add_spec = fn.PurelyAdditive(2.0, g_terms)
            if add_spec.exact_variance() > 1e-12:
                a2 = anova.build_closed_form(add_spec, model)
                f2 = fdd_from_add(a2)
                c2 = hybrid.closed_univariate_cross_moments(add_spec, a2, f2)
                m2 = hybrid.fit_linear(c2, a2.y_empty)
                if not m2.degenerate and (
                    abs(m2.alpha - 1.0) > 1e-8 or abs(m2.beta) > 1e-8
                ):
                    failures.append((trial, "reproduce_additive", m2.alpha, m2.beta))
            h_terms = [
                fn.term_from_callables(i, model.marginals[i], h=fn._poly_callable(h_coeffs[i]))
                for i in range(dim)
            ]
            mul_spec = fn.PurelyMultiplicative(1.5, h_terms)
            a3 = anova.build_closed_form(mul_spec, model)
            f3 = fdd_from_add(a3)
            c3 = hybrid.closed_univariate_cross_moments(mul_spec, a3, f3)
            m3 = hybrid.fit_linear(c3, a3.y_empty)
            if not m3.degenerate and (
                abs(m3.alpha) > 1e-8 or abs(m3.beta - 1.0) > 1e-8
            ):
                failures.append((trial, "reproduce_multiplicative", m3.alpha, m3.beta))

    ok = not failures
    record(5, f"property suite over {trials} randomized structured specs",
           ok, f"{len(failures)} failures")
    assert not failures, failures[:10]


def test_criterion_6_oracle_equivalence():
    rng = np.random.default_rng(777)
    bad = []
    for dim in (2, 3, 4):
        for _ in range(2):
            model = uniform_model(dim)
            terms = [
                fn.term_from_callables(
                    i, model.marginals[i],
                    h=fn._poly_callable(rng.uniform(0.2, 1.0, size=3)),
                    g=fn._poly_callable(rng.uniform(-0.5, 0.5, size=3)),
                )
                for i in range(dim)
            ]
            spec = fn.Blended(rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5), terms)
            closed = anova.build_closed_form(spec, model)
            numeric = anova.build_numeric(
                spec, model, dim, TensorGauss(10), grid_points=10
            )
            for u in subsets_up_to(dim, dim):
                if not u:
                    continue
                ref = closed.component_variances[u]
                got = numeric.component_variances[u]
                if abs(got - ref) > 1e-8 * max(abs(ref), 1e-8):
                    bad.append(("variance", dim, u, ref, got))
            x = rng.random((100, dim))
            y = spec.evaluate_points(x)
            add_rec = numeric.evaluate_truncated_points(dim, x)
            fdd_rec = fdd_from_add(numeric).evaluate_truncated_points(dim, x)
            if np.max(np.abs(add_rec - y) / np.maximum(np.abs(y), 1.0)) > 1e-9:
                bad.append(("add_reconstruction", dim))
            if np.max(np.abs(fdd_rec - y) / np.maximum(np.abs(y), 1.0)) > 1e-9:
                bad.append(("fdd_reconstruction", dim))
    ok = not bad
    record(6, "numeric builder matches closed forms (N <= 4, all orders)", ok)
    assert not bad, bad


def test_criterion_7_power_mean_univariate_study():
    t0 = time.perf_counter()
    rows, _ = recipes.example4_error_rows()  # frozen: RQMC 2^16 x 8
    elapsed = time.perf_counter() - t0
    err = {(int(r["x"]), r["method"]): r["value"] for r in rows}
    ms = range(2, 9)
    hybrid_below = all(
        err[(m, meth)] < min(err[(m, "add")], err[(m, "fdd")])
        for m in ms
        for meth in ("hdd_linear", "hdd_nonlinear")
    )
    add_first = all(err[(m, "add")] < err[(m, "fdd")] for m in (2, 3))
    fdd_later = all(err[(m, "fdd")] < err[(m, "add")] for m in range(4, 9))
    non_best_at_8 = err[(8, "hdd_nonlinear")] <= err[(8, "hdd_linear")]
    ok = hybrid_below and add_first and fdd_later and non_best_at_8 and elapsed < 600
    record(7, "power-mean study: hybrid strictly best, add/fdd crossover, "
              "nonlinear <= linear at m=8", ok, f"{elapsed:.0f}s")
    assert hybrid_below
    assert add_first
    assert fdd_later
    assert non_best_at_8
    assert elapsed < 600


def test_criterion_8_blend_product_truncation_means():
    rows, _ = recipes.example2_fdd_means()  # frozen: tensor Gauss p=16
    devs = {r["S"]: abs(r["value"] - 5.0) for r in rows}
    ok = set(devs) == {1, 2, 3, 4} and all(d <= 5e-4 for d in devs.values())
    record(8, "blend: order 1-4 product-truncation means equal 5 within 5e-4",
           ok, str({s: f"{d:.1e}" for s, d in devs.items()}))
    assert ok

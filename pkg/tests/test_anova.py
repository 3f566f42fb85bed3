import numpy as np
import pytest

from dimdecomp import anova
from dimdecomp import functions as fn
from dimdecomp.errors import ConfigError, ZeroVarianceError
from dimdecomp.inputs import uniform_model
from dimdecomp.integrate import TensorGauss, tensor_nodes
from dimdecomp.subsets import subsets_up_to


def random_blended(rng, n, degree=2):
    model = uniform_model(n)
    terms = []
    for i in range(n):
        h = fn._poly_callable(rng.uniform(0.2, 1.0, size=degree + 1))
        g = fn._poly_callable(rng.uniform(-0.5, 0.5, size=degree + 1))
        terms.append(fn.term_from_callables(i, model.marginals[i], h=h, g=g))
    return fn.Blended(rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0), terms), model


class TestClosedFormBuilder:
    def test_multiplicative_example_values(self):
        spec = fn.get_function("example1-y1", N=6)
        model = uniform_model(6)
        add = anova.build_closed_form(spec, model)
        assert add.y_empty == pytest.approx(1.5625)
        assert add.component_variances[(0,)] == pytest.approx(0.8138021, abs=5e-8)
        assert add.truncated_variance(1) == pytest.approx(6 * 0.8138020833333, rel=1e-12)
        assert add.truncated_variance(1) == pytest.approx(4.8828125)

    def test_additive_components(self):
        spec = fn.get_function("example1-y2", N=10)
        model = uniform_model(10)
        add = anova.build_closed_form(spec, model)
        x = np.array([[0.3], [0.9]])
        np.testing.assert_allclose(add.component_values((2,), x), x[:, 0] - 0.5)
        assert add.component_variances[(1, 4)] == 0.0
        # any truncation at order >= 1 carries the full variance
        for order in (1, 4, 10):
            assert add.truncated_variance(order) == pytest.approx(10.0 / 12.0)

    def test_table1_style_relative_error(self):
        spec = fn.get_function("example1-y1", N=6)
        model = uniform_model(6)
        add = anova.build_closed_form(spec, model)
        sigma2 = spec.exact_moments(model).variance
        rel = abs(sigma2 - add.truncated_variance(1)) / sigma2
        assert rel == pytest.approx(0.566974, abs=5e-7)

    def test_blended_with_zero_nu0_matches_additive(self):
        rng = np.random.default_rng(2)
        model = uniform_model(3)
        g_coeffs = rng.normal(size=(3, 3))
        terms_b = [
            fn.term_from_callables(
                i, model.marginals[i], h=fn._poly_callable([1.0, 1.0]),
                g=fn._poly_callable(g_coeffs[i]),
            )
            for i in range(3)
        ]
        terms_a = [
            fn.term_from_callables(i, model.marginals[i], g=fn._poly_callable(g_coeffs[i]))
            for i in range(3)
        ]
        blended = anova.build_closed_form(fn.Blended(0.0, 0.7, terms_b), model)
        additive = anova.build_closed_form(fn.PurelyAdditive(0.7, terms_a), model)
        x = rng.random((5, 3))
        for u in [(0,), (1, 2), (0, 1, 2)]:
            np.testing.assert_allclose(
                blended.component_values(u, x[:, list(u)]),
                additive.component_values(u, x[:, list(u)]),
                atol=1e-12,
            )

    def test_evaluate_truncated_trivial_and_full(self):
        spec = fn.get_function("example1-y1", N=6)
        model = uniform_model(6)
        add = anova.build_closed_form(spec, model)
        rng = np.random.default_rng(3)
        x = rng.random((100, 6))
        assert add.evaluate_truncated(0, x[0]) == pytest.approx(add.y_empty)
        full = add.evaluate_truncated_points(6, x)
        np.testing.assert_allclose(full, spec.evaluate_points(x), rtol=1e-10)

    def test_additive_univariate_truncation_reproduces_function(self):
        spec = fn.get_function("example1-y2", N=7)
        model = uniform_model(7)
        add = anova.build_closed_form(spec, model)
        rng = np.random.default_rng(4)
        x = rng.random((50, 7))
        np.testing.assert_allclose(
            add.evaluate_truncated_points(1, x), spec.evaluate_points(x), rtol=1e-12
        )


class TestSensitivityIndices:
    def test_additive_uniform_shares(self):
        spec = fn.get_function("example1-y2", N=10)
        add = anova.build_closed_form(spec, uniform_model(10))
        idx = add.sensitivity_indices()
        for i in range(10):
            assert idx[(i,)] == pytest.approx(0.1, rel=1e-12)
        assert sum(idx.values()) == pytest.approx(1.0, rel=1e-12)

    def test_deterministic_coordinate_kills_its_subsets(self):
        model = uniform_model(3)
        terms = [
            fn.term_from_callables(0, model.marginals[0], h=fn._poly_callable([0.7])),
            fn.term_from_callables(1, model.marginals[1], h=fn._poly_callable([0.0, 1.0])),
            fn.term_from_callables(2, model.marginals[2], h=fn._poly_callable([0.0, 1.0])),
        ]
        spec = fn.PurelyMultiplicative(2.0, terms)
        add = anova.build_closed_form(spec, model)
        idx = add.sensitivity_indices()
        for u, share in idx.items():
            if 0 in u:
                assert share == pytest.approx(0.0, abs=1e-15)
                assert add.negligible(u)

    def test_complement_of_table1_entry(self):
        spec = fn.get_function("example1-y1", N=6)
        model = uniform_model(6)
        add = anova.build_closed_form(spec, model)
        idx = add.sensitivity_indices()
        univariate_share = sum(v for u, v in idx.items() if len(u) == 1)
        assert univariate_share == pytest.approx(1.0 - 0.566974, abs=5e-7)

    def test_zero_variance_guard(self):
        model = uniform_model(2)
        terms = [
            fn.term_from_callables(i, model.marginals[i], g=fn._poly_callable([1.0]))
            for i in range(2)
        ]
        spec = fn.PurelyAdditive(0.0, terms)  # constant function
        add = anova.build_closed_form(spec, model)
        with pytest.raises(ZeroVarianceError):
            add.sensitivity_indices()


class TestNumericBuilder:
    def test_power_mean_linear_univariate_component(self):
        spec = fn.PowerMean(1, 10)
        model = uniform_model(10)
        add = anova.build_numeric(spec, model, max_order=1, int_spec=TensorGauss(2),
                                  grid_points=8)
        comp = add._core.comps[(3,)]
        expected = (2.0 / 10.0) * (comp.nodes[0] - 0.5)
        np.testing.assert_allclose(comp.values, expected, atol=1e-9)

    def test_zero_order_build(self):
        spec = fn.PowerMean(2, 3)
        model = uniform_model(3)
        add = anova.build_numeric(spec, model, max_order=0, int_spec=TensorGauss(4))
        assert add.component_variances == {}
        em = spec.exact_moments(model)
        assert add.y_empty == pytest.approx(em.mean, rel=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_oracle_equivalence_with_closed_form(self, n):
        rng = np.random.default_rng(100 + n)
        spec, model = random_blended(rng, n)
        closed = anova.build_closed_form(spec, model)
        numeric = anova.build_numeric(
            spec, model, max_order=n, int_spec=TensorGauss(10), grid_points=10
        )
        assert numeric.y_empty == pytest.approx(closed.y_empty, rel=1e-12)
        for u in subsets_up_to(n, n):
            if not u:
                continue
            ref = closed.component_variances[u]
            got = numeric.component_variances[u]
            assert got == pytest.approx(ref, rel=1e-8, abs=1e-13)
        x = rng.random((100, n))
        np.testing.assert_allclose(
            numeric.evaluate_truncated_points(n, x),
            spec.evaluate_points(x),
            rtol=1e-9,
            atol=1e-9,
        )

    def test_zero_mean_and_orthogonality(self):
        rng = np.random.default_rng(42)
        spec, model = random_blended(rng, 3)
        add = anova.build_numeric(
            spec, model, max_order=3, int_spec=TensorGauss(8), grid_points=8
        )
        pts, w = tensor_nodes(model, 12)
        scale = max(add.total_variance, 1.0)
        values = {
            u: add._core.component_sub(u, pts[:, list(u)])
            for u in subsets_up_to(3, 3)
            if u
        }
        for u, vu in values.items():
            assert abs(w @ vu) <= 1e-8 * scale
            for v, vv in values.items():
                if u < v:
                    assert abs(w @ (vu * vv)) <= 1e-8 * scale

    def test_variance_additivity(self):
        rng = np.random.default_rng(43)
        spec, model = random_blended(rng, 3)
        add = anova.build_numeric(
            spec, model, max_order=3, int_spec=TensorGauss(8), grid_points=8
        )
        sigma2 = spec.exact_moments(model).variance
        assert add.truncated_variance(3) == pytest.approx(sigma2, rel=1e-9)

    def test_per_subset_path_matches_unified(self):
        # force the per-subset route with an RQMC backend
        from dimdecomp.integrate import RandomizedQmc

        spec = fn.PowerMean(2, 3)
        model = uniform_model(3)
        unified = anova.build_numeric(
            spec, model, max_order=1, int_spec=TensorGauss(8), grid_points=8
        )
        split = anova.build_numeric(
            spec, model, max_order=1,
            int_spec=RandomizedQmc(1 << 12, seed=5, replicates=4), grid_points=8,
        )
        for i in range(3):
            np.testing.assert_allclose(
                split._core.comps[(i,)].values,
                unified._core.comps[(i,)].values,
                atol=2e-4,
            )

    def test_order_cap_errors(self):
        spec = fn.PowerMean(2, 3)
        model = uniform_model(3)
        add = anova.build_numeric(spec, model, max_order=1, int_spec=TensorGauss(4))
        with pytest.raises(ConfigError):
            add.truncated_variance(2)
        with pytest.raises(ConfigError):
            anova.build_numeric(spec, model, max_order=5, int_spec=TensorGauss(4))

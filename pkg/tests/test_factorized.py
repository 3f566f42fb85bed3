import numpy as np
import pytest

from dimdecomp import anova, factorized
from dimdecomp import functions as fn
from dimdecomp.errors import ConfigError, SingularFactorError, ZeroMeanError
from dimdecomp.factorized import fdd_from_add, univariate_variance_closed_form
from dimdecomp.inputs import uniform_model
from dimdecomp.integrate import MonteCarlo, RandomizedQmc, TensorGauss

from test_anova import random_blended


@pytest.fixture(scope="module")
def blended_pair():
    rng = np.random.default_rng(77)
    spec, model = random_blended(rng, 4)
    add = anova.build_closed_form(spec, model)
    return spec, model, add, fdd_from_add(add)


class TestFactorRecursion:
    def test_constant_factor_is_the_mean(self, blended_pair):
        _, _, add, fdd = blended_pair
        assert fdd.one_plus_z_empty == pytest.approx(add.y_empty)
        np.testing.assert_allclose(
            fdd.factor_values((), np.zeros((1, 0))), [add.y_empty]
        )

    def test_univariate_factor_identity(self, blended_pair):
        _, _, add, fdd = blended_pair
        x = np.linspace(0.05, 0.95, 7)
        got = fdd.factor_values((1,), x)
        ref = (add.y_empty + add.component_values((1,), x[:, None])) / add.y_empty
        np.testing.assert_allclose(got, ref, rtol=1e-12)

    def test_bivariate_factor_identity(self, blended_pair):
        _, _, add, fdd = blended_pair
        rng = np.random.default_rng(1)
        xu = rng.random((9, 2))
        y0 = add.y_empty
        y1 = add.component_values((0,), xu[:, :1])
        y2 = add.component_values((2,), xu[:, 1:])
        y12 = add.component_values((0, 2), xu)
        ref = (y0 + y1 + y2 + y12) / (y0 * ((y0 + y1) / y0) * ((y0 + y2) / y0))
        np.testing.assert_allclose(fdd.factor_values((0, 2), xu), ref, rtol=1e-12)

    def test_multiplicative_factors(self):
        spec = fn.get_function("example1-y1", N=5)
        model = uniform_model(5)
        fdd = fdd_from_add(anova.build_closed_form(spec, model))
        x = np.linspace(0.1, 0.9, 6)
        np.testing.assert_allclose(fdd.factor_values((2,), x), x / 0.5, rtol=1e-12)
        xu = np.random.default_rng(2).random((6, 2))
        np.testing.assert_allclose(fdd.factor_values((1, 3), xu), 1.0, atol=1e-12)

    def test_factors_mapping_contract(self, blended_pair):
        _, _, _, fdd = blended_pair
        factors = fdd.factors
        assert () in factors and (0, 1) in factors
        vals = factors[(0, 1)](np.array([[0.5, 0.5]]))
        assert np.isfinite(vals).all()


class TestTruncatedEvaluation:
    def test_order_zero_returns_mean(self, blended_pair):
        _, _, add, fdd = blended_pair
        assert fdd.evaluate_truncated(0, np.full(4, 0.3)) == pytest.approx(add.y_empty)

    def test_multiplicative_reproduced_at_order_one(self):
        spec = fn.get_function("example1-y1", N=6)
        model = uniform_model(6)
        fdd = fdd_from_add(anova.build_closed_form(spec, model))
        x = np.random.default_rng(3).random((50, 6))
        y = spec.evaluate_points(x)
        for order in (1, 2, 4):
            np.testing.assert_allclose(
                fdd.evaluate_truncated_points(order, x), y, rtol=1e-12
            )

    def test_sum_plus_product_of_univariates_reproduced_at_order_one(self):
        # two-variable function whose bivariate component is the scaled
        # product of its univariate components: order-1 product is exact
        y0 = 2.0

        def target(x):
            a = x[:, 0] - 0.5
            b = x[:, 1] - 0.5
            return y0 + a + b + a * b / y0

        model = uniform_model(2)
        add = anova.build_numeric(target, model, 2, TensorGauss(8), grid_points=8)
        fdd = fdd_from_add(add)
        x = np.random.default_rng(4).random((40, 2))
        np.testing.assert_allclose(
            fdd.evaluate_truncated_points(1, x), target(x), rtol=1e-9
        )

    def test_full_reconstruction_numeric(self):
        rng = np.random.default_rng(5)
        spec, model = random_blended(rng, 3)
        add = anova.build_numeric(spec, model, 3, TensorGauss(10), grid_points=10)
        fdd = fdd_from_add(add)
        x = rng.random((100, 3))
        np.testing.assert_allclose(
            fdd.evaluate_truncated_points(3, x), spec.evaluate_points(x), rtol=1e-9
        )

    def test_order_cap(self, blended_pair):
        _, _, _, fdd = blended_pair
        with pytest.raises(ConfigError):
            fdd.evaluate_truncated(5, np.full(4, 0.5))


class TestMoments:
    def test_additive_univariate_error_matches_closed_form(self):
        spec = fn.get_function("example1-y2", N=6)
        model = uniform_model(6)
        em = spec.exact_moments(model)
        add = anova.build_closed_form(spec, model)
        fdd = fdd_from_add(add)
        mom = fdd.moments(1, TensorGauss(8))
        rel = abs(em.variance - mom.variance) / em.variance
        # closed form: y0^2 ((1 + 1/(12 y0^2))^6 - 1), y0 = 3
        v1 = univariate_variance_closed_form(3.0, [1.0 / 12.0] * 6)
        assert mom.variance == pytest.approx(v1, rel=1e-10)
        assert rel == pytest.approx(2.3436e-2, rel=1e-3)
        assert mom.mean == pytest.approx(3.0, abs=1e-10)

    def test_standardized_blend_mean_is_exact_mean(self):
        spec = fn.get_function("example2")
        model = uniform_model(5)
        fdd = fdd_from_add(anova.build_closed_form(spec, model))
        mom = fdd.moments(1, TensorGauss(12))
        assert mom.mean == pytest.approx(5.0, abs=5e-5)

    def test_multiplicative_variance_exact_any_order(self):
        spec = fn.get_function("example1-y1", N=5)
        model = uniform_model(5)
        em = spec.exact_moments(model)
        fdd = fdd_from_add(anova.build_closed_form(spec, model))
        for order in (1, 3):
            mom = fdd.moments(order, TensorGauss(6))
            assert mom.variance == pytest.approx(em.variance, rel=1e-9)

    def test_control_variate_agrees_with_plain(self):
        spec = fn.get_function("example1-y2", N=6)
        model = uniform_model(6)
        em = spec.exact_moments(model)
        add = anova.build_closed_form(spec, model)
        fdd = fdd_from_add(add)
        ctl = (spec.evaluate_points, em.mean, em.variance)
        spec_i = RandomizedQmc(1 << 12, seed=5, replicates=4)
        plain = fdd.moments(2, spec_i)
        cv = fdd.moments(2, spec_i, control=ctl)
        assert cv.variance == pytest.approx(plain.variance, rel=5e-3)
        assert cv.variance_error < plain.variance_error

    def test_monte_carlo_backend(self):
        spec = fn.get_function("example1-y2", N=4)
        model = uniform_model(4)
        fdd = fdd_from_add(anova.build_closed_form(spec, model))
        mom = fdd.moments(1, MonteCarlo(20000, seed=8))
        assert mom.mean == pytest.approx(2.0, abs=5 * mom.mean_error)


class TestClosedFormUnivariateVariance:
    def test_zero_variances(self):
        assert univariate_variance_closed_form(3.0, [0.0, 0.0]) == 0.0

    def test_multiplicative_example_exact(self):
        spec = fn.get_function("example1-y1", N=6)
        model = uniform_model(6)
        em = spec.exact_moments(model)
        got = univariate_variance_closed_form(1.5625, [0.8138020833333333] * 6)
        assert got == pytest.approx(2.44140625 * ((4.0 / 3.0) ** 6 - 1.0), rel=1e-12)
        assert got == pytest.approx(em.variance, rel=1e-12)

    def test_single_coordinate_degenerates_to_additive(self):
        assert univariate_variance_closed_form(2.0, [0.37]) == pytest.approx(0.37)

    def test_zero_mean_rejected(self):
        with pytest.raises(ZeroMeanError):
            univariate_variance_closed_form(0.0, [1.0])


class TestInequalitiesAndLimits:
    def test_order_one_variance_dominates_additive(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            spec, model = random_blended(rng, rng.integers(2, 6))
            add = anova.build_closed_form(spec, model)
            fdd = fdd_from_add(add)
            sigmas = [add.component_variances[(i,)] for i in range(model.dimension)]
            v1 = univariate_variance_closed_form(fdd.one_plus_z_empty, sigmas)
            assert v1 >= add.truncated_variance(1) - 1e-12

    def test_small_fluctuation_limit(self):
        # as the fluctuation scale shrinks, the two order-1 variances merge
        model = uniform_model(3)
        ratios = []
        for eps in (0.3, 0.03, 0.003):
            terms = [
                fn.term_from_callables(
                    i, model.marginals[i],
                    h=fn._poly_callable([1.0, eps]),
                    g=fn._poly_callable([0.0, eps]),
                )
                for i in range(3)
            ]
            spec = fn.Blended(1.0, 0.5, terms)
            add = anova.build_closed_form(spec, model)
            fdd = fdd_from_add(add)
            sigmas = [add.component_variances[(i,)] for i in range(3)]
            v1 = univariate_variance_closed_form(fdd.one_plus_z_empty, sigmas)
            ratios.append(v1 / add.truncated_variance(1))
        assert ratios[0] > ratios[1] > ratios[2]
        assert ratios[-1] == pytest.approx(1.0, abs=1e-4)


class TestConditioning:
    def test_zero_mean_function_is_shifted(self):
        model = uniform_model(3)
        terms = [
            fn.term_from_callables(i, model.marginals[i], g=fn._poly_callable([0.0, 1.0]))
            for i in range(3)
        ]
        spec = fn.PurelyAdditive(-1.5, terms)  # mean exactly zero
        add = anova.build_closed_form(spec, model)
        assert add.y_empty == pytest.approx(0.0, abs=1e-15)
        fdd = fdd_from_add(add)
        assert fdd.conditioning_shift > 0
        assert abs(fdd.one_plus_z_empty) > 1.0e-6
        x = np.random.default_rng(6).random((30, 3))
        # full-order product still reconstructs the unshifted function
        np.testing.assert_allclose(
            fdd.evaluate_truncated_points(3, x), spec.evaluate_points(x), atol=1e-10
        )
        mom = fdd.moments(1, TensorGauss(8))
        assert mom.mean == pytest.approx(0.0, abs=1e-10)

    def test_zero_mean_error_when_disallowed(self):
        model = uniform_model(2)
        terms = [
            fn.term_from_callables(i, model.marginals[i], g=fn._poly_callable([0.0, 1.0]))
            for i in range(2)
        ]
        spec = fn.PurelyAdditive(-1.0, terms)
        add = anova.build_closed_form(spec, model)
        with pytest.raises(ZeroMeanError):
            fdd_from_add(add, conditioning="never")

    def test_singularity_names_subset_and_point(self):
        spec = fn.multiplicative_identity(1.0, 2)
        model = uniform_model(2)
        fdd = fdd_from_add(anova.build_closed_form(spec, model))
        with pytest.raises(SingularFactorError) as err:
            fdd.evaluate_truncated_points(1, np.array([[0.5, 0.5], [0.0, 0.5]]))
        assert err.value.subset == (0,)
        assert err.value.point is not None

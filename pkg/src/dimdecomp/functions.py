"""Target functions: structured sum/product classes, study functions, black boxes.

The structured classes cover functions of the form

    y(x) = nu0 * prod_i h_i(x_i) + mu0 + sum_i g_i(x_i)

with square-integrable univariate factors h_i and summands g_i.  Each term
carries its first two moments against the input marginal

    nu_i = E[h_i], delta_sq_i = Var[h_i],
    mu_i = E[g_i], lambda_sq_i = Var[g_i],
    eta_sq_i = Cov[h_i, g_i],

which is all the additive decomposition builder needs in closed form.  The
purely multiplicative (mu0 = 0, g_i = 0) and purely additive (nu0 = 0)
classes keep their own, simpler variance formulas; the blended formulas must
degenerate to them exactly and the tests assert that.

Also here: the power-of-scaled-mean family and the standardized sum+product
blend used by the numerical studies, and an opaque black-box wrapper with an
optional evaluation budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import BudgetExceededError, ConfigError, DimensionMismatchError
from .inputs import InputModel, MarginalDistribution, Uniform, uniform_model

TERM_QUAD_POINTS = 32


class ExactMoments(NamedTuple):
    mean: float
    variance: float


class EvaluationBudget:
    """Caps the number of function evaluations; raises before exceeding."""

    def __init__(self, max_evaluations: int):
        if max_evaluations < 0:
            raise ConfigError("max_evaluations must be >= 0")
        self.max_evaluations = int(max_evaluations)
        self.used = 0

    def charge(self, n: int):
        if self.used + n > self.max_evaluations:
            raise BudgetExceededError(
                f"evaluation budget exhausted: {self.used} used, "
                f"{n} requested, cap {self.max_evaluations}"
            )
        self.used += n


@dataclass(frozen=True)
class UnivariateTermData:
    """Moment data and evaluators for one coordinate's h_i / g_i pair."""

    index: int
    nu: float = 0.0
    delta_sq: float = 0.0
    mu: float = 0.0
    lambda_sq: float = 0.0
    eta_sq: float = 0.0
    h: Optional[Callable] = None
    g: Optional[Callable] = None

    def __post_init__(self):
        if self.delta_sq < 0 or self.lambda_sq < 0:
            raise ConfigError("term variances must be nonnegative")
        bound = math.sqrt(self.delta_sq * self.lambda_sq)
        if abs(self.eta_sq) > bound + 1e-12 * (1.0 + bound):
            raise ConfigError(
                f"term covariance {self.eta_sq} violates Cauchy-Schwarz "
                f"bound {bound}"
            )


def term_from_callables(
    index: int,
    marginal: MarginalDistribution,
    h: Optional[Callable] = None,
    g: Optional[Callable] = None,
    quad_points: int = TERM_QUAD_POINTS,
) -> UnivariateTermData:
    """Compute term moments by Gauss quadrature against the marginal.

    Exact for polynomial h/g up to degree 2*quad_points - 1 combined.
    """
    rule = marginal.gauss_rule(quad_points)
    x, w = rule.nodes, rule.weights
    nu = delta_sq = mu = lambda_sq = eta_sq = 0.0
    hv = gv = None
    if h is not None:
        hv = np.asarray(h(x), dtype=float)
        nu = float(w @ hv)
        delta_sq = float(w @ (hv - nu) ** 2)
    if g is not None:
        gv = np.asarray(g(x), dtype=float)
        mu = float(w @ gv)
        lambda_sq = float(w @ (gv - mu) ** 2)
    if hv is not None and gv is not None:
        eta_sq = float(w @ ((hv - nu) * (gv - mu)))
        # guard quadrature round-off against the Cauchy-Schwarz invariant
        bound = math.sqrt(delta_sq * lambda_sq)
        if abs(eta_sq) > bound:
            eta_sq = math.copysign(bound, eta_sq)
    return UnivariateTermData(index, nu, delta_sq, mu, lambda_sq, eta_sq, h, g)


class FunctionSpec:
    """Common contract: vectorized evaluation plus optional exact moments."""

    dimension: int
    name: str = ""
    concurrent_safe: bool = True
    budget: Optional[EvaluationBudget] = None

    def evaluate_points(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at an (n, N) array of points, returning shape (n,)."""
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"expected points with {self.dimension} coordinates, "
                f"got shape {x.shape}"
            )
        if self.budget is not None:
            self.budget.charge(x.shape[0])
        out = self.evaluate_points(x)
        return float(out[0]) if squeeze else out

    def exact_moments(self, model: InputModel) -> Optional[ExactMoments]:
        """Closed-form mean/variance under the model, or None if unavailable."""
        return None

    def _check_model(self, model: InputModel):
        if model.dimension != self.dimension:
            raise DimensionMismatchError(
                f"model has {model.dimension} coordinates, function needs "
                f"{self.dimension}"
            )


@dataclass
class StructuredSpec(FunctionSpec):
    """Base for the nu0*prod(h) + mu0 + sum(g) family."""

    terms: tuple
    nu0: float = 0.0
    mu0: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.terms = tuple(self.terms)
        if not self.terms:
            raise ConfigError("structured spec needs at least one term")
        self.dimension = len(self.terms)
        self._nu = np.array([t.nu for t in self.terms])
        self._mu = np.array([t.mu for t in self.terms])
        self._delta_sq = np.array([t.delta_sq for t in self.terms])
        self._lambda_sq = np.array([t.lambda_sq for t in self.terms])
        self._eta_sq = np.array([t.eta_sq for t in self.terms])

    @property
    def has_product_part(self) -> bool:
        return self.nu0 != 0.0

    def h_values(self, x: np.ndarray) -> Optional[np.ndarray]:
        if not self.has_product_part:
            return None
        cols = [t.h(x[:, i]) for i, t in enumerate(self.terms)]
        return np.stack(cols, axis=1)

    def g_values(self, x: np.ndarray) -> Optional[np.ndarray]:
        if all(t.g is None for t in self.terms):
            return None
        out = np.zeros_like(x)
        for i, t in enumerate(self.terms):
            if t.g is not None:
                out[:, i] = t.g(x[:, i])
        return out

    def evaluate_points(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape[0], self.mu0)
        H = self.h_values(x)
        if H is not None:
            out = out + self.nu0 * np.prod(H, axis=1)
        G = self.g_values(x)
        if G is not None:
            out = out + G.sum(axis=1)
        return out

    def constant_term(self) -> float:
        """Mean of y: nu0 * prod(nu_i) + mu0 + sum(mu_i)."""
        out = self.mu0 + float(self._mu.sum())
        if self.has_product_part:
            out += self.nu0 * float(np.prod(self._nu))
        return out

    def exact_moments(self, model: InputModel) -> ExactMoments:
        self._check_model(model)
        return ExactMoments(self.constant_term(), self.exact_variance())

    def exact_variance(self) -> float:
        raise NotImplementedError


class PurelyMultiplicative(StructuredSpec):
    """y = nu0 * prod_i h_i(X_i)."""

    def __init__(self, nu0: float, terms, name: str = ""):
        if nu0 == 0.0:
            raise ConfigError("purely multiplicative spec needs nu0 != 0")
        super().__init__(terms=tuple(terms), nu0=nu0, mu0=0.0, name=name)
        if any(t.g is not None or t.lambda_sq != 0.0 for t in self.terms):
            raise ConfigError("purely multiplicative terms must not carry g_i")

    def exact_variance(self) -> float:
        n2 = self._nu**2
        return self.nu0**2 * float(np.prod(self._delta_sq + n2) - np.prod(n2))


class PurelyAdditive(StructuredSpec):
    """y = mu0 + sum_i g_i(X_i)."""

    def __init__(self, mu0: float, terms, name: str = ""):
        super().__init__(terms=tuple(terms), nu0=0.0, mu0=mu0, name=name)
        if any(t.h is not None or t.delta_sq != 0.0 for t in self.terms):
            raise ConfigError("purely additive terms must not carry h_i")

    def exact_variance(self) -> float:
        return float(self._lambda_sq.sum())


class Blended(StructuredSpec):
    """y = nu0 * prod_i h_i(X_i) + mu0 + sum_i g_i(X_i)."""

    def __init__(self, nu0: float, mu0: float, terms, name: str = ""):
        super().__init__(terms=tuple(terms), nu0=nu0, mu0=mu0, name=name)

    def exact_variance(self) -> float:
        # product-part variance + sum-part variance + twice their covariance
        n2 = self._nu**2
        var_mult = self.nu0**2 * float(np.prod(self._delta_sq + n2) - np.prod(n2))
        var_add = float(self._lambda_sq.sum())
        if not self.has_product_part:
            return var_add
        if np.any(self._nu == 0.0):
            # covariance term via per-factor products without the i-th nu
            cov = 0.0
            for i in range(self.dimension):
                prod_other = np.prod(np.delete(self._nu, i))
                cov += prod_other * self._eta_sq[i]
            cov *= 2.0 * self.nu0
        else:
            cov = (
                2.0
                * self.nu0
                * float(np.prod(self._nu))
                * float((self._eta_sq / self._nu).sum())
            )
        return var_mult + var_add + cov


class PowerMean(FunctionSpec):
    """y = (2/N * sum_i X_i) ** m on N i.i.d. uniform(0, 1) coordinates.

    Purely additive at m = 1, increasingly product-like as m grows.
    """

    def __init__(self, m: int, dimension: int, name: str = ""):
        if m < 1:
            raise ConfigError(f"exponent m must be a positive integer, got {m}")
        self.m = int(m)
        self.dimension = int(dimension)
        self.name = name

    def evaluate_points(self, x: np.ndarray) -> np.ndarray:
        return (2.0 / self.dimension * x.sum(axis=1)) ** self.m

    def exact_moments(self, model: InputModel) -> ExactMoments:
        self._check_model(model)
        for marg in model.marginals:
            if not (isinstance(marg, Uniform) and marg.a == 0.0 and marg.b == 1.0):
                raise ConfigError("PowerMean moments assume uniform(0,1) inputs")
        mean = self.raw_moment(self.m)
        second = self.raw_moment(2 * self.m)
        return ExactMoments(mean, second - mean * mean)

    def raw_moment(self, power: int) -> float:
        """E[y^(power/m)] ... i.e. E[(2/N sum X)^power], exact rational."""
        n = self.dimension
        sums = _uniform_sum_raw_moments(n, power)
        return float(Fraction(2, n) ** power * sums[power])


def _uniform_sum_raw_moments(n: int, p_max: int) -> list:
    """Raw moments E[(U_1 + ... + U_n)^p], p = 0..p_max, exact fractions."""
    # E[U^k] = 1/(k+1); build up one summand at a time by binomial expansion
    moments = [Fraction(1)] + [Fraction(0)] * p_max
    for _ in range(n):
        nxt = []
        for p in range(p_max + 1):
            acc = Fraction(0)
            for k in range(p + 1):
                acc += math.comb(p, k) * moments[k] * Fraction(1, p - k + 1)
            nxt.append(acc)
        moments = nxt
    return moments


class StandardizedBlend(Blended):
    """Constant plus standardized sum and standardized product of uniforms.

    y = y_empty + (sum X_i - N/2) / sqrt(N/12)
              + (prod X_i - 2^-N) / sqrt(3^-N - 4^-N)

    for N i.i.d. uniform(0,1) coordinates.  Both non-constant pieces have
    zero mean and unit variance; the standardization constants are analytic.
    """

    def __init__(self, y_empty: float, dimension: int, name: str = ""):
        n = int(dimension)
        sum_sd = math.sqrt(n / 12.0)
        prod_sd = math.sqrt(3.0**-n - 4.0**-n)
        nu0 = 1.0 / prod_sd
        mu0 = y_empty - 2.0**-n / prod_sd - (n / 2.0) / sum_sd
        terms = [
            term_from_callables(
                i,
                Uniform(0.0, 1.0),
                h=lambda t: t,
                g=lambda t, c=1.0 / sum_sd: c * t,
            )
            for i in range(n)
        ]
        # quadrature gives these exactly, but pin the analytic values anyway
        terms = [
            UnivariateTermData(
                i, 0.5, 1.0 / 12.0, 0.5 / sum_sd, 1.0 / n,
                (1.0 / 12.0) / sum_sd, t.h, t.g,
            )
            for i, t in enumerate(terms)
        ]
        super().__init__(nu0=nu0, mu0=mu0, terms=terms, name=name)
        self.y_empty = float(y_empty)
        self.sum_sd = sum_sd
        self.prod_sd = prod_sd

    def sum_piece(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x.sum(axis=1) - self.dimension / 2.0) / self.sum_sd

    def product_piece(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (np.prod(x, axis=1) - 2.0**-self.dimension) / self.prod_sd


class BlackBox(FunctionSpec):
    """Opaque evaluator with explicit dimension and optional budget."""

    def __init__(
        self,
        evaluator: Callable,
        dimension: int,
        vectorized: bool = True,
        concurrent_safe: bool = True,
        budget: Optional[EvaluationBudget] = None,
        name: str = "",
    ):
        self.evaluator = evaluator
        self.dimension = int(dimension)
        self.vectorized = vectorized
        self.concurrent_safe = concurrent_safe
        self.budget = budget
        self.name = name

    def evaluate_points(self, x: np.ndarray) -> np.ndarray:
        if self.vectorized:
            return np.asarray(self.evaluator(x), dtype=float)
        return np.array([float(self.evaluator(row)) for row in x])


# ---------------------------------------------------------------------------
# registry of the named study functions


def multiplicative_identity(nu0: float, dimension: int, name: str = "") -> PurelyMultiplicative:
    """nu0 * prod X_i on uniform(0,1) coordinates (h_i = identity)."""
    terms = [
        UnivariateTermData(i, nu=0.5, delta_sq=1.0 / 12.0, h=lambda t: t)
        for i in range(dimension)
    ]
    return PurelyMultiplicative(nu0, terms, name=name)


def additive_identity(mu0: float, dimension: int, name: str = "") -> PurelyAdditive:
    """mu0 + sum X_i on uniform(0,1) coordinates (g_i = identity)."""
    terms = [
        UnivariateTermData(i, mu=0.5, lambda_sq=1.0 / 12.0, g=lambda t: t)
        for i in range(dimension)
    ]
    return PurelyAdditive(mu0, terms, name=name)


_REGISTRY = {
    "example1-y1": lambda N=6, nu0=100.0: multiplicative_identity(
        nu0, N, name="example1-y1"
    ),
    "example1-y2": lambda N=10, mu0=0.0: additive_identity(
        mu0, N, name="example1-y2"
    ),
    "example2": lambda N=5, y_empty=5.0: StandardizedBlend(
        y_empty, N, name="example2"
    ),
    "example4": lambda m=2, N=10: PowerMean(m, N, name="example4"),
}


def registered_names() -> list:
    return sorted(_REGISTRY)


def get_function(name: str, **params) -> FunctionSpec:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown function {name!r}; known: {', '.join(registered_names())}"
        ) from None
    return factory(**params)


def default_model_for(spec: FunctionSpec) -> InputModel:
    """The uniform(0,1) product model every registered function uses."""
    return uniform_model(spec.dimension)


def _poly_callable(coeffs) -> Callable:
    c = [float(v) for v in coeffs]
    return lambda t, c=c: np.polynomial.polynomial.polyval(np.asarray(t, float), c)


def spec_from_config(record: dict, model: InputModel) -> FunctionSpec:
    """Build an inline structured spec from a CLI config record.

    Supported variants: purely_multiplicative, purely_additive, blended
    (terms given as polynomial coefficient lists, low order first),
    power_mean, standardized_blend.
    """
    if not isinstance(record, dict) or "variant" not in record:
        raise ConfigError(f"inline function record needs a 'variant': {record!r}")
    variant = record["variant"]
    if variant == "power_mean":
        return PowerMean(int(record["m"]), model.dimension)
    if variant == "standardized_blend":
        return StandardizedBlend(float(record["y_empty"]), model.dimension)
    if variant in ("purely_multiplicative", "purely_additive", "blended"):
        degrees = record.get("terms")
        if not isinstance(degrees, list) or len(degrees) != model.dimension:
            raise ConfigError(
                "inline structured spec needs one term record per coordinate"
            )
        terms = []
        for i, t in enumerate(degrees):
            h = _poly_callable(t["h"]) if "h" in t else None
            g = _poly_callable(t["g"]) if "g" in t else None
            terms.append(term_from_callables(i, model.marginals[i], h=h, g=g))
        if variant == "purely_multiplicative":
            return PurelyMultiplicative(float(record["nu0"]), terms)
        if variant == "purely_additive":
            return PurelyAdditive(float(record.get("mu0", 0.0)), terms)
        return Blended(float(record.get("nu0", 0.0)), float(record.get("mu0", 0.0)), terms)
    raise ConfigError(f"unknown function variant {variant!r}")

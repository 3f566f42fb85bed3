"""Independent random inputs: marginal distributions, sampling, 1-D Gauss rules.

The random vector X has independent coordinates, so its joint density is the
product of the marginal densities.  Everything downstream (decomposition
builders, integration backends) only needs, per coordinate:

* closed-form moments up to order 4,
* a quantile transform (drives both Monte Carlo and quasi-Monte Carlo),
* an n-point Gauss rule with probability-normalized weights
  (sum(weights) == 1) so that  E[f(X_i)] ≈ sum_k w_k f(x_k).

Gauss rules are Legendre-type for uniform marginals and probabilists'
Hermite-type for normal marginals.  Lognormal rules map the Hermite nodes
through exp, which keeps all nodes positive and is exact for polynomials in
log(x) (not in x; see the lognormal docstring).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, DimensionMismatchError

MAX_GAUSS_POINTS = 64

# Rows drawn per Philox subchunk; fixed so results never depend on how a
# caller splits the work.
_SAMPLE_CHUNK = 1 << 18


class Moments(NamedTuple):
    mean: float
    variance: float
    raw_moment_3: float
    raw_moment_4: float


@dataclass(frozen=True)
class QuadratureRule1D:
    """Nodes and probability-normalized weights for one marginal."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ConfigError("nodes and weights must be 1-D arrays of equal length")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ConfigError("quadrature weights must sum to 1")


class MarginalDistribution:
    """Base class for the supported marginal kinds."""

    kind: str = ""

    @property
    def mean(self) -> float:
        return self.raw_moment(1)

    @property
    def variance(self) -> float:
        m1 = self.raw_moment(1)
        return self.raw_moment(2) - m1 * m1

    def raw_moment(self, k: int) -> float:
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def gauss_rule(self, n: int) -> QuadratureRule1D:
        raise NotImplementedError

    def _validate_n(self, n: int):
        if n < 1:
            raise ConfigError(f"Gauss rule needs n >= 1, got {n}")
        if n > MAX_GAUSS_POINTS:
            raise ConfigError(
                f"Gauss rule capped at {MAX_GAUSS_POINTS} points, got {n}"
            )


@dataclass(frozen=True)
class Uniform(MarginalDistribution):
    a: float
    b: float
    kind = "uniform"

    def __post_init__(self):
        if not (self.b > self.a):
            raise ConfigError(f"uniform requires b > a, got [{self.a}, {self.b}]")

    def raw_moment(self, k: int) -> float:
        a, b = self.a, self.b
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def quantile(self, p):
        return self.a + (self.b - self.a) * np.asarray(p, dtype=float)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def gauss_rule(self, n: int) -> QuadratureRule1D:
        self._validate_n(n)
        t, w = np.polynomial.legendre.leggauss(n)  # [-1, 1], weights sum to 2
        nodes = self.a + (self.b - self.a) * 0.5 * (t + 1.0)
        return QuadratureRule1D(nodes, w * 0.5)


@dataclass(frozen=True)
class Normal(MarginalDistribution):
    mu: float
    sigma: float
    kind = "normal"

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ConfigError(f"normal requires stddev > 0, got {self.sigma}")

    def raw_moment(self, k: int) -> float:
        m, s2 = self.mu, self.sigma**2
        if k == 1:
            return m
        if k == 2:
            return m * m + s2
        if k == 3:
            return m**3 + 3 * m * s2
        if k == 4:
            return m**4 + 6 * m * m * s2 + 3 * s2 * s2
        raise ConfigError(f"raw moments exposed up to order 4, got {k}")

    def quantile(self, p):
        return self.mu + self.sigma * ndtri(np.asarray(p, dtype=float))

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def gauss_rule(self, n: int) -> QuadratureRule1D:
        self._validate_n(n)
        t, w = np.polynomial.hermite_e.hermegauss(n)  # weight exp(-t^2/2)
        return QuadratureRule1D(self.mu + self.sigma * t, w / w.sum())


@dataclass(frozen=True)
class Lognormal(MarginalDistribution):
    """Lognormal parameterized by the mean/stddev of log(X).

    The Gauss rule maps probabilists' Hermite nodes through exp, so it is
    exact for polynomials in log(x) up to degree 2n-1.  Polynomials in x are
    integrated only approximately (the classical moment-matched rule would be
    numerically unstable here because the lognormal moment problem is
    ill-conditioned).
    """

    log_mean: float
    log_stddev: float
    kind = "lognormal"

    def __post_init__(self):
        if not (self.log_stddev > 0):
            raise ConfigError(
                f"lognormal requires log_stddev > 0, got {self.log_stddev}"
            )

    @classmethod
    def from_mean_cov(cls, mean: float, cov: float) -> "Lognormal":
        """Construct from the mean and coefficient of variation of X itself.

        Uses sigma_ln^2 = log(1 + cov^2), mu_ln = log(mean) - sigma_ln^2 / 2.
        """
        if mean <= 0 or cov <= 0:
            raise ConfigError("from_mean_cov requires mean > 0 and cov > 0")
        s2 = math.log1p(cov * cov)
        return cls(math.log(mean) - 0.5 * s2, math.sqrt(s2))

    def raw_moment(self, k: int) -> float:
        if k < 1 or k > 4:
            raise ConfigError(f"raw moments exposed up to order 4, got {k}")
        return math.exp(k * self.log_mean + 0.5 * k * k * self.log_stddev**2)

    def quantile(self, p):
        return np.exp(self.log_mean + self.log_stddev * ndtri(np.asarray(p, float)))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        z = (np.log(x, where=pos, out=np.ones_like(x)) - self.log_mean) / self.log_stddev
        out[pos] = np.exp(-0.5 * z[pos] ** 2) / (
            x[pos] * self.log_stddev * math.sqrt(2.0 * math.pi)
        )
        return out

    def gauss_rule(self, n: int) -> QuadratureRule1D:
        self._validate_n(n)
        t, w = np.polynomial.hermite_e.hermegauss(n)
        return QuadratureRule1D(np.exp(self.log_mean + self.log_stddev * t), w / w.sum())


def gauss_rule(marginal: MarginalDistribution, n: int) -> QuadratureRule1D:
    """n-point Gauss rule with respect to the marginal measure."""
    return marginal.gauss_rule(n)


def marginal_moments(marginal: MarginalDistribution) -> Moments:
    """Closed-form mean, variance and raw moments of order 3 and 4."""
    return Moments(
        marginal.mean,
        marginal.variance,
        marginal.raw_moment(3),
        marginal.raw_moment(4),
    )


@dataclass(frozen=True)
class InputModel:
    """Ordered independent marginals defining the product measure of X."""

    marginals: tuple

    def __init__(self, marginals):
        marginals = tuple(marginals)
        if len(marginals) < 1:
            raise ConfigError("input model needs at least one marginal")
        for m in marginals:
            if not isinstance(m, MarginalDistribution):
                raise ConfigError(f"not a marginal distribution: {m!r}")
        object.__setattr__(self, "marginals", marginals)

    @property
    def dimension(self) -> int:
        return len(self.marginals)

    def check_points(self, x) -> np.ndarray:
        """Coerce x to an (n, N) array, validating the trailing dimension."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"expected points with {self.dimension} coordinates, got shape {x.shape}"
            )
        return x

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniform(0,1) variates (n, N) through the marginal quantiles."""
        u = np.asarray(u, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.dimension:
            raise DimensionMismatchError(
                f"expected uniforms with {self.dimension} columns, got shape {u.shape}"
            )
        out = np.empty_like(u)
        for i, m in enumerate(self.marginals):
            out[:, i] = m.quantile(u[:, i])
        return out

    def sample_chunks(self, count: int, seed: int):
        """Yield seeded blocks of draws totalling `count` rows.

        Uses counter-based Philox streams with fixed-size subchunks, so the
        concatenation never depends on how the caller consumes the blocks and
        chunks could be generated in parallel.
        """
        if count < 1:
            raise ConfigError(f"sample count must be >= 1, got {count}")
        n_chunks = (count + _SAMPLE_CHUNK - 1) // _SAMPLE_CHUNK
        children = np.random.SeedSequence(seed).spawn(n_chunks)
        remaining = count
        for child in children:
            rows = min(_SAMPLE_CHUNK, remaining)
            gen = np.random.Generator(np.random.Philox(child))
            yield self.transform(gen.random((rows, self.dimension)))
            remaining -= rows

    def sample(self, count: int, seed: int) -> np.ndarray:
        """Seeded draws from the product measure, shape (count, N)."""
        blocks = list(self.sample_chunks(count, seed))
        return blocks[0] if len(blocks) == 1 else np.vstack(blocks)

    def gauss_rules(self, n: int) -> list[QuadratureRule1D]:
        return [m.gauss_rule(n) for m in self.marginals]


def sample(model: InputModel, count: int, seed: int) -> np.ndarray:
    return model.sample(count, seed)


def uniform_model(n: int, a: float = 0.0, b: float = 1.0) -> InputModel:
    """n i.i.d. uniform(a, b) coordinates; the common case in the examples."""
    return InputModel([Uniform(a, b)] * n)


def marginal_from_config(record: dict) -> MarginalDistribution:
    """Build one marginal from a {kind, parameters} record (CLI config)."""
    try:
        kind = record["kind"]
    except (TypeError, KeyError):
        raise ConfigError(f"marginal record needs a 'kind': {record!r}") from None
    params = {k: v for k, v in record.items() if k != "kind"}
    try:
        if kind == "uniform":
            return Uniform(float(params["a"]), float(params["b"]))
        if kind == "normal":
            return Normal(float(params["mean"]), float(params["stddev"]))
        if kind == "lognormal":
            if "mean" in params and "cov" in params:
                return Lognormal.from_mean_cov(float(params["mean"]), float(params["cov"]))
            return Lognormal(float(params["log_mean"]), float(params["log_stddev"]))
    except KeyError as exc:
        raise ConfigError(f"marginal record for {kind!r} is missing {exc}") from None
    raise ConfigError(f"unknown marginal kind: {kind!r}")

"""Arm reward laws, bandit instances and seeded random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MAX_SEED = 2**64 - 1


class InfeasibleInstanceError(ValueError):
    """Raised when distribution or instance parameters are out of range."""


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise InfeasibleInstanceError(f"non-finite Gaussian parameters: {self}")
        if self.variance <= 0:
            raise InfeasibleInstanceError(
                f"Gaussian variance must be positive, got {self.variance!r}"
            )

    kind = "gaussian"

    @property
    def true_mean(self) -> float:
        return float(self.mean)

    @property
    def true_variance(self) -> float:
        return float(self.variance)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(self.mean, math.sqrt(self.variance), size=size)


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise InfeasibleInstanceError(f"Bernoulli p must lie in [0, 1], got {self.p!r}")

    kind = "bernoulli"

    @property
    def true_mean(self) -> float:
        return float(self.p)

    @property
    def true_variance(self) -> float:
        return float(self.p * (1.0 - self.p))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (rng.random(size) < self.p).astype(np.float64)


DistributionSpec = Union[Gaussian, Bernoulli]


def true_mean_variance(dist: DistributionSpec, rho: float) -> float:
    """Return ``variance - rho * mean`` of ``dist``."""
    return dist.true_variance - rho * dist.true_mean


class RandomStream:
    """Hierarchically keyed source of numpy generators.

    A stream is identified by ``(seed, key)``; ``child(i, j)`` appends to the
    key, so the generator for ``(seed, replication, arm)`` never depends on how
    many other replications or arms exist.
    """

    def __init__(self, seed: int, key: Sequence[int] = ()):
        seed = int(seed)
        if not 0 <= seed <= MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        self._rng = None

    def child(self, *key: int) -> "RandomStream":
        return RandomStream(self.seed, self.key + tuple(key))

    @property
    def generator(self) -> np.random.Generator:
        if self._rng is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
            self._rng = np.random.Generator(np.random.PCG64(ss))
        return self._rng

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"


def sample(dist: DistributionSpec, stream: RandomStream) -> float:
    """Draw one reward from ``dist`` using ``stream``."""
    return float(dist.draw(stream.generator, 1)[0])


@dataclass(frozen=True)
class BanditInstance:
    """K arms with risk tolerance ``rho`` and concentration constant ``a``.

    Derived quantities (optimal arm, gaps, mean offsets) are computed once at
    construction; use :func:`make_instance` to build one.
    """

    arms: tuple
    rho: float
    a: float = 0.25
    xi: np.ndarray = field(init=False, repr=False, compare=False)
    star: int = field(init=False, compare=False)

    def __post_init__(self):
        arms = tuple(self.arms)
        if len(arms) < 2:
            raise InfeasibleInstanceError(f"need at least 2 arms, got {len(arms)}")
        for arm in arms:
            if not isinstance(arm, (Gaussian, Bernoulli)):
                raise TypeError(f"unsupported arm distribution {arm!r}")
        if not (self.a > 0 and math.isfinite(self.a)):
            raise InfeasibleInstanceError(f"a must be positive, got {self.a!r}")
        if not (self.rho >= 0 and math.isfinite(self.rho)):
            raise InfeasibleInstanceError(f"rho must be nonnegative, got {self.rho!r}")
        object.__setattr__(self, "arms", arms)
        xi = np.array([true_mean_variance(d, self.rho) for d in arms])
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        # np.argmin returns the first minimiser: ties go to the lowest index
        object.__setattr__(self, "star", int(np.argmin(xi)))

    @property
    def K(self) -> int:
        return len(self.arms)

    @property
    def means(self) -> np.ndarray:
        return np.array([d.true_mean for d in self.arms])

    @property
    def variances(self) -> np.ndarray:
        return np.array([d.true_variance for d in self.arms])

    @property
    def gaps(self) -> np.ndarray:
        """Mean-variance gaps ``xi_i - xi_star``; zero at the optimal arm."""
        g = self.xi - self.xi[self.star]
        g[self.star] = 0.0
        return g

    @property
    def mean_offsets(self) -> np.ndarray:
        """``mu_i - mu_star`` for every arm."""
        return self.means - self.means[self.star]

    @property
    def min_gap(self) -> float:
        """Smallest gap over the suboptimal arms."""
        return float(np.delete(self.gaps, self.star).min())

    @property
    def max_mean_offset(self) -> float:
        return float(np.abs(self.mean_offsets).max())

    @property
    def sigma_max(self) -> float:
        return float(np.sqrt(self.variances.max()))

    @property
    def mu_max(self) -> float:
        return float(self.means.max())

    @property
    def star_variance(self) -> float:
        return float(self.arms[self.star].true_variance)

    def suboptimal(self) -> list:
        return [i for i in range(self.K) if i != self.star]


def make_instance(arms: Sequence[DistributionSpec], rho: float, a: float = 0.25) -> BanditInstance:
    return BanditInstance(tuple(arms), float(rho), float(a))

"""Streaming sample statistics and empirical checks of concentration bounds."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BanditInstance, DistributionSpec, RandomStream, true_mean_variance

# Tail checks draw replications in fixed-size blocks, each from its own child
# stream, so growing the replication count leaves earlier draws untouched.
TAIL_BLOCK = 4096
SLACK = 3.0


def welford_update(count, mean, m2, x):
    """One step of the incremental central-moment recurrence.

    Works elementwise on scalars or numpy arrays; returns the new
    ``(count, mean, m2)``.
    """
    count = count + 1
    delta = x - mean
    mean = mean + delta / count
    m2 = m2 + delta * (x - mean)
    return count, mean, m2


@dataclass(frozen=True)
class StreamingMoments:
    """Count, mean and un-normalised second central moment of a stream."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, x: float) -> "StreamingMoments":
        return StreamingMoments(*welford_update(self.count, self.mean, self.m2, float(x)))

    def extend(self, xs) -> "StreamingMoments":
        m = self
        for x in xs:
            m = m.update(x)
        return m

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        """Combine two disjoint streams (pairwise parallel reduction)."""
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return StreamingMoments(n, mean, m2)

    def _require_data(self):
        if self.count == 0:
            raise ValueError("no observations in StreamingMoments")

    @property
    def sample_mean(self) -> float:
        self._require_data()
        return self.mean

    def variance(self, unbiased: bool = False) -> float:
        """Biased (divide by count) variance unless ``unbiased`` is set."""
        self._require_data()
        if unbiased:
            if self.count < 2:
                raise ValueError("unbiased variance needs at least two observations")
            return self.m2 / (self.count - 1)
        return self.m2 / self.count

    def mean_variance(self, rho: float, unbiased: bool = False) -> float:
        return self.variance(unbiased) - rho * self.mean


@dataclass
class TailCheckRow:
    s: int
    delta: float
    tail_side: str
    empirical: float
    bound: float
    std_err: float
    violated: bool
    applicable: bool = True


@dataclass
class TailCheckReport:
    rows: list = field(default_factory=list)
    replications: int = 0

    @property
    def violations(self) -> list:
        return [r for r in self.rows if r.violated]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "delta", "tail_side", "empirical", "bound", "std_err", "violated"])
            for r in self.rows:
                w.writerow([r.s, fmt(r.delta), r.tail_side, fmt(r.empirical),
                            fmt(r.bound), fmt(r.std_err), int(r.violated)])


def fmt(x: float) -> str:
    """Serialize a float with 17 significant digits."""
    return format(float(x), ".17g")


def upper_tail_bound(s, delta, rho, a):
    return 2.0 * math.exp(-a * s * delta**2 / (1.0 + rho) ** 2)


def lower_tail_bound(s, delta, rho, a):
    return 2.0 * math.exp(-a * s * delta**2 / (2.0 + rho) ** 2)


def _prefix_mean_variance(x: np.ndarray, sizes: Sequence[int], rho: float) -> dict:
    """Sample mean-variance of the first ``s`` columns of ``x`` for each s."""
    out = {}
    for s in sizes:
        head = x[:, :s]
        mu = head.mean(axis=1)
        var = ((head - mu[:, None]) ** 2).mean(axis=1)
        out[s] = var - rho * mu
    return out


def verify_mv_concentration(dist: DistributionSpec, rho: float, a: float, grid,
                            replications: int, stream: RandomStream) -> TailCheckReport:
    """Compare empirical tails of the sample mean-variance to the sub-Gaussian bounds.

    ``grid`` is a sequence of ``(s, delta)`` pairs.  For each replication one
    sequence of ``max(s)`` draws is generated and every ``s`` uses its prefix.
    A cell is violated when the empirical frequency minus three binomial
    standard errors still exceeds the bound.  Lower-tail cells with
    ``delta > 2 + rho`` fall outside the bound's range and are marked not
    applicable.
    """
    if replications < 1000:
        raise ValueError("replications must be at least 1000 for a tail estimate")
    grid = [(int(s), float(d)) for s, d in grid]
    if not grid:
        raise ValueError("empty (s, delta) grid")
    for s, d in grid:
        if s < 1 or d <= 0:
            raise ValueError(f"grid cell ({s}, {d}) needs s >= 1 and delta > 0")

    xi = true_mean_variance(dist, rho)
    sizes = sorted({s for s, _ in grid})
    s_max = sizes[-1]
    up = {(s, d): 0 for s, d in grid}
    lo = {(s, d): 0 for s, d in grid}
    done = 0
    block = 0
    while done < replications:
        n = min(TAIL_BLOCK, replications - done)
        rng = stream.child(block).generator
        x = dist.draw(rng, TAIL_BLOCK * s_max).reshape(TAIL_BLOCK, s_max)[:n]
        dev = {s: v - xi for s, v in _prefix_mean_variance(x, sizes, rho).items()}
        for s, d in grid:
            up[(s, d)] += int(np.count_nonzero(dev[s] > d))
            lo[(s, d)] += int(np.count_nonzero(dev[s] < -d))
        done += n
        block += 1

    report = TailCheckReport(replications=replications)
    for s, d in grid:
        for side, counts, bound_fn in (("upper", up, upper_tail_bound), ("lower", lo, lower_tail_bound)):
            p = counts[(s, d)] / replications
            se = math.sqrt(p * (1.0 - p) / replications)
            bound = bound_fn(s, d, rho, a)
            applicable = side == "upper" or d <= 2.0 + rho
            violated = applicable and (p - SLACK * se > bound)
            report.rows.append(TailCheckRow(s, d, side, p, bound, se, violated, applicable))
    return report


@dataclass
class ArmBoundCheck:
    arm: int
    lhs: float
    std_err: float
    rhs: float
    satisfied: bool


def stopping_time_rhs(T: int, a: float) -> float:
    return (math.log(T) + 2.0) / a


def verify_stopping_time_bound(instance: BanditInstance, policy, T: int, replications: int,
                               stream: RandomStream, jobs: int = 1) -> list:
    """Monte Carlo check of E[tau_i (mean_i - mu_i)^2] <= (log T + 2) / a per arm."""
    from .policies import simulate

    if T < 2:
        raise ValueError("T must be at least 2")
    return stopping_time_checks(instance, simulate(instance, policy, T, replications, stream, jobs=jobs))


def stopping_time_checks(instance: BanditInstance, batch) -> list:
    """Per-arm stopping-time inequality on an existing batch.

    Arms never played in a replication contribute zero to the expectation.
    """
    rhs = stopping_time_rhs(batch.horizon, instance.a)
    with np.errstate(invalid="ignore"):
        dev = np.where(batch.tau > 0, batch.mean - instance.means, 0.0)
    stat = batch.tau * dev**2
    out = []
    for i in range(instance.K):
        lhs, se = mean_and_se(stat[:, i])
        out.append(ArmBoundCheck(i, lhs, se, rhs, bool(lhs <= rhs + SLACK * _nan0(se))))
    return out


def verify_pull_count_bound(instance: BanditInstance, b: float, T: int, batch) -> list:
    """Compare measured E[tau_i] of each suboptimal arm with the MV-UCB pull bound."""
    from .regret import pull_count_bound

    out = []
    for i in instance.suboptimal():
        lhs, se = mean_and_se(batch.tau[:, i].astype(float))
        rhs = pull_count_bound(instance, b, T, i)
        out.append(ArmBoundCheck(i, lhs, se, rhs, bool(lhs <= rhs + SLACK * _nan0(se))))
    return out


def mean_and_se(x) -> tuple:
    """Sample mean and its standard error; the error is NaN for one sample."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    m = float(x.mean())
    if n < 2:
        return m, float("nan")
    return m, float(x.std(ddof=1) / math.sqrt(n))


def _nan0(x: float) -> float:
    return 0.0 if math.isnan(x) else x

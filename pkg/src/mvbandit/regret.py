"""Regret functionals, the exact regret decomposition, and bound calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BanditInstance, Bernoulli, Gaussian
from .estimators import fmt, mean_and_se
from .policies import RunTrace, TraceBatch


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo point estimate with its standard error."""

    value: float
    se: float

    @classmethod
    def of(cls, samples) -> "Estimate":
        return cls(*mean_and_se(samples))

    def __sub__(self, other: "Estimate") -> "Estimate":
        return Estimate(self.value - other.value, math.hypot(self.se, other.se))

    def __format__(self, spec):
        return f"{format(self.value, spec)} ± {format(self.se, spec)}"


def path_cumulative_mv(trace: RunTrace, rho: float) -> float:
    """Empirical variance of the whole reward path times T, minus rho times its sum."""
    x = np.asarray(trace.rewards, dtype=float)
    if x.size == 0:
        raise ValueError("empty trace")
    return float(((x - x.mean()) ** 2).sum() - rho * x.sum())


def single_arm_benchmark(instance: BanditInstance, T: int) -> float:
    """Expected cumulative mean-variance of always playing the optimal arm."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return T * float(instance.xi[instance.star]) - instance.star_variance


def _as_batch(traces) -> TraceBatch:
    if isinstance(traces, TraceBatch):
        return traces
    return TraceBatch.from_traces(traces)


def _per_rep_proxy(batch: TraceBatch, instance: BanditInstance) -> np.ndarray:
    return batch.path_cumulative_mv(instance.rho) - single_arm_benchmark(instance, batch.horizon)


def proxy_regret_empirical(traces, instance: BanditInstance) -> Estimate:
    batch = _as_batch(traces)
    if batch.replications < 2:
        raise ValueError("need at least two traces")
    return Estimate.of(_per_rep_proxy(batch, instance))


@dataclass(frozen=True)
class Decomposition:
    term_delta: Estimate
    term_gamma: Estimate
    term_cross: Estimate
    term_sigma: Estimate
    total: Estimate
    # standard error of (empirical - closed form) computed per replication
    paired_diff: Estimate


def _per_rep_terms(batch: TraceBatch, instance: BanditInstance):
    T = batch.horizon
    tau = batch.tau.astype(float)
    offsets = instance.mean_offsets
    with np.errstate(invalid="ignore"):
        centred = np.where(batch.tau > 0, batch.mean - instance.means[instance.star], 0.0)
    delta = tau @ instance.gaps
    gamma = tau @ offsets**2
    cross = (tau * centred).sum(axis=1) ** 2 / T
    return delta, gamma, cross


def proxy_regret_closed_form(traces, instance: BanditInstance) -> Decomposition:
    """Estimate every term of the exact regret decomposition from the same traces.

    Uses the realised pull counts and per-arm sample means of each replication.
    """
    batch = _as_batch(traces)
    if batch.replications < 2:
        raise ValueError("need at least two traces")
    delta, gamma, cross = _per_rep_terms(batch, instance)
    sigma = instance.star_variance
    total = delta + gamma - cross + sigma
    diff = _per_rep_proxy(batch, instance) - total
    return Decomposition(
        term_delta=Estimate.of(delta),
        term_gamma=Estimate.of(gamma),
        term_cross=Estimate.of(cross),
        term_sigma=Estimate(sigma, 0.0),
        total=Estimate.of(total),
        paired_diff=Estimate.of(diff),
    )


# --------------------------------------------------------------------------
# Bounds


def thm1_gap(instance: BanditInstance, T: int) -> float:
    """Upper bound on true regret minus proxy regret."""
    if T < 1:
        raise ValueError("T must be >= 1")
    total = 0.0
    for i in instance.suboptimal():
        g2 = instance.mean_offsets[i] ** 2
        d = instance.gaps[i]
        if g2 == 0.0:
            continue
        if d == 0.0:
            total = math.inf
            break
        total += g2 / d
    first = instance.sigma_max**2 * (total + 1.0)
    return min(first, instance.K / instance.a * math.log(T))


def pull_count_bound(instance: BanditInstance, b: float, T: int, arm: int) -> float:
    """Bound on the expected pulls of a suboptimal arm under MV-UCB."""
    d = instance.gaps[arm]
    if d <= 0:
        raise ValueError(f"arm {arm} has zero gap; the pull bound does not apply")
    rho = instance.rho
    return 4.0 * b**2 * math.log(T) / min(d**2, 4.0 * (2.0 + rho) ** 2) + 5.0


def ucb_bonus_floor(instance: BanditInstance) -> float:
    return math.sqrt(3.0) * (2.0 + instance.rho) / math.sqrt(instance.a)


def thm3_upper_bound(instance: BanditInstance, b: float, T: int) -> float:
    """Regret upper bound for MV-UCB; requires a positive minimum gap."""
    if instance.min_gap <= 0:
        raise ValueError("minimum gap is zero: the MV-UCB bound does not apply")
    floor = ucb_bonus_floor(instance)
    if b < floor * (1 - 1e-12):
        raise ValueError(f"b={b} is below the admissible floor {floor}")
    total = 0.0
    for i in instance.suboptimal():
        total += pull_count_bound(instance, b, T, i) * (instance.gaps[i] + instance.mean_offsets[i] ** 2)
    return total + instance.star_variance + thm1_gap(instance, T)


def kl_divergence(f, g) -> float:
    """KL divergence I(f, g) for two laws of the same family."""
    if isinstance(f, Gaussian) and isinstance(g, Gaussian):
        d2 = (f.mean - g.mean) ** 2
        return (d2 + f.variance - g.variance) / (2.0 * g.variance) - 0.5 * math.log(f.variance / g.variance)
    if isinstance(f, Bernoulli) and isinstance(g, Bernoulli):
        p, q = f.p, g.p
        out = 0.0
        for a, b in ((p, q), (1.0 - p, 1.0 - q)):
            if a == 0.0:
                continue
            if b == 0.0:
                return math.inf
            out += a * math.log(a / b)
        return out
    raise ValueError("KL divergence needs two arms from the same family")


def thm2_lower_bound(instance: BanditInstance, c1: float, T: int) -> float:
    """Asymptotic lower-bound constant times log T for consistent policies.

    The vanishing finite-horizon correction is omitted.
    """
    if not 0.0 < c1 < 1.0:
        raise ValueError("c1 must lie in (0, 1)")
    kinds = {type(arm) for arm in instance.arms}
    if len(kinds) != 1:
        raise ValueError("lower bound needs all arms from one family")
    star = instance.arms[instance.star]
    total = 0.0
    for i in instance.suboptimal():
        info = kl_divergence(instance.arms[i], star)
        if info == 0.0:
            raise ValueError(f"arm {i} is identical to the optimal arm (zero divergence)")
        total += c1 * math.log(T) / info * (instance.gaps[i] + instance.mean_offsets[i] ** 2)
    return total


# --------------------------------------------------------------------------
# Report


REPORT_COLUMNS = ["policy", "T", "replications", "empirical_xi", "se", "benchmark", "proxy_emp",
                  "proxy_cf", "term_delta", "term_gamma", "term_cross", "term_sigma", "thm3_upper",
                  "thm2_lower", "thm1_gap"]


@dataclass
class RegretReport:
    policy: str
    T: int
    replications: int
    empirical_xi: Estimate
    benchmark_xi_single_arm: float
    proxy_regret_empirical: Estimate
    proxy_regret_closed_form: Estimate
    decomposition: Decomposition
    thm3_upper: float = math.nan
    thm2_lower: float = math.nan
    thm1_gap: float = math.nan

    @property
    def se_defined(self) -> bool:
        return not math.isnan(self.empirical_xi.se)

    def row(self) -> list:
        d = self.decomposition
        return [self.policy, str(self.T), str(self.replications),
                fmt(self.empirical_xi.value), fmt(self.empirical_xi.se),
                fmt(self.benchmark_xi_single_arm), fmt(self.proxy_regret_empirical.value),
                fmt(self.proxy_regret_closed_form.value),
                fmt(d.term_delta.value), fmt(d.term_gamma.value), fmt(d.term_cross.value),
                fmt(d.term_sigma.value), fmt(self.thm3_upper), fmt(self.thm2_lower),
                fmt(self.thm1_gap)]


def regret_report(batch: TraceBatch, instance: BanditInstance, policy, c1: float = 0.9) -> RegretReport:
    """Assemble the full report; one replication yields NaN standard errors."""
    from .policies import MvUcb, policy_label

    T = batch.horizon
    per_rep = batch.path_cumulative_mv(instance.rho)
    bench = single_arm_benchmark(instance, T)
    delta, gamma, cross = _per_rep_terms(batch, instance)
    sigma = instance.star_variance
    total = delta + gamma - cross + sigma
    decomposition = Decomposition(
        Estimate.of(delta), Estimate.of(gamma), Estimate.of(cross), Estimate(sigma, 0.0),
        Estimate.of(total), Estimate.of(per_rep - bench - total))

    upper = math.nan
    if isinstance(policy, MvUcb) and instance.min_gap > 0:
        b = policy.bonus(instance)
        if b >= ucb_bonus_floor(instance) * (1 - 1e-12):
            upper = thm3_upper_bound(instance, b, T)
    try:
        lower = thm2_lower_bound(instance, c1, T)
    except ValueError:
        lower = math.nan
    return RegretReport(
        policy=policy_label(policy), T=T, replications=batch.replications,
        empirical_xi=Estimate.of(per_rep), benchmark_xi_single_arm=bench,
        proxy_regret_empirical=Estimate.of(per_rep - bench),
        proxy_regret_closed_form=decomposition.total, decomposition=decomposition,
        thm3_upper=upper, thm2_lower=lower, thm1_gap=thm1_gap(instance, T))


def write_reports(reports, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())


def read_reports(path) -> list:
    """Parse a regret CSV back into dictionaries of typed values."""
    import csv
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if k == "policy":
                    row[k] = v
                elif k in ("T", "replications"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            out.append(row)
    return out

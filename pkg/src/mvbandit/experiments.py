"""Scenario catalog, replication driver, adversarial pairs and reproduction runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .core import (BanditInstance, Bernoulli, Gaussian, InfeasibleInstanceError, RandomStream,
                   make_instance)
from .estimators import mean_and_se
from .policies import MvDsee, MvUcb, PolicySpec, policy_label, simulate
from .regret import Estimate, RegretReport, regret_report, single_arm_benchmark

# Monte Carlo counterexample draws are generated in blocks of this many
# replications per child stream.
COUNTEREXAMPLE_BLOCK = 2**16
DEFAULT_D6 = 0.3


@dataclass
class Scenario:
    name: str
    instance: BanditInstance
    policies: list
    horizons: list
    replications: int
    seed: int = 0
    trace: bool = False

    def __post_init__(self):
        if not self.policies:
            raise ValueError(f"scenario {self.name!r} has no policies")
        if not self.horizons:
            raise ValueError(f"scenario {self.name!r} has no horizons")
        for T in self.horizons:
            if T < self.instance.K:
                raise ValueError(f"scenario {self.name!r}: horizon {T} is below K={self.instance.K}")
        if self.replications < 1:
            raise ValueError(f"scenario {self.name!r}: replications must be >= 1")


def check_unique_names(scenarios) -> None:
    seen = set()
    for sc in scenarios:
        if sc.name in seen:
            raise ValueError(f"duplicate scenario name {sc.name!r}")
        seen.add(sc.name)


def cell_stream(seed: int, policy_index: int, horizon_index: int) -> RandomStream:
    return RandomStream(seed).child(policy_index, horizon_index)


@dataclass
class ScenarioResult:
    policy: PolicySpec
    T: int
    report: RegretReport
    traces: list = None


def run_scenario(scenario: Scenario, jobs: int = 1, record: bool = False) -> list:
    """Run every (policy, horizon) cell; each cell owns the stream ``(seed, p, h)``."""
    out = []
    for p, policy in enumerate(scenario.policies):
        for h, T in enumerate(scenario.horizons):
            try:
                batch = simulate(scenario.instance, policy, T, scenario.replications,
                                 cell_stream(scenario.seed, p, h), record=record, jobs=jobs)
            except ValueError as exc:
                raise type(exc)(f"scenario {scenario.name!r}, {policy_label(policy)}, T={T}: {exc}") from exc
            report = regret_report(batch, scenario.instance, policy)
            out.append(ScenarioResult(policy, T, report, batch.traces))
    return out


# --------------------------------------------------------------------------
# Known-model counterexample


def counterexample_instance() -> BanditInstance:
    return make_instance([Gaussian(0.0, 1.0), Gaussian(1.0, 2.1)], rho=1.0)


def two_step_value(x1, x2, rho):
    """Path functional for a horizon of two."""
    return (x1 - x2) ** 2 / 2.0 - rho * (x1 + x2)


@dataclass
class CounterexampleResult:
    xi_single_arm: float
    xi_threshold_policy: Estimate
    suboptimality_confirmed: bool
    replications: int


def counterexample_experiment(replications: int = 10**6, seed: int = 0,
                              threshold: float = 0.5) -> CounterexampleResult:
    """Monte Carlo value of the two-step threshold policy against always playing arm 0."""
    if replications < 10**5:
        raise ValueError("counterexample needs at least 1e5 replications")
    inst = counterexample_instance()
    f1, f2 = inst.arms
    root = RandomStream(seed)
    values = np.empty(replications)
    for block, start in enumerate(range(0, replications, COUNTEREXAMPLE_BLOCK)):
        n = min(COUNTEREXAMPLE_BLOCK, replications - start)
        stream = root.child(block)
        arm0 = f1.draw(stream.child(0).generator, 2 * COUNTEREXAMPLE_BLOCK).reshape(COUNTEREXAMPLE_BLOCK, 2)
        arm1 = f2.draw(stream.child(1).generator, COUNTEREXAMPLE_BLOCK)
        x1 = arm0[:n, 0]
        x2 = np.where(x1 < threshold, arm0[:n, 1], arm1[:n])
        values[start:start + n] = two_step_value(x1, x2, inst.rho)
    est = Estimate(*mean_and_se(values))
    bench = single_arm_benchmark(inst, 2)
    return CounterexampleResult(bench, est, bool(est.value + 3.0 * est.se < bench), replications)


def optimal_two_step_value(instance: BanditInstance) -> tuple:
    """Exact cumulative mean-variance of the best known-model policy at T=2.

    For Gaussian arms the second pull minimises the conditional expectation
    ``((x1 - mu_j)^2 + var_j) / 2 - rho * mu_j`` given the first reward; the
    outer expectation is integrated numerically.  Returns ``(value, first_arm)``.
    """
    if not all(isinstance(a, Gaussian) for a in instance.arms):
        raise ValueError("two-step oracle implemented for Gaussian arms")
    rho = instance.rho
    mu = instance.means
    var = instance.variances

    def conditional(x1):
        return np.min(((x1 - mu) ** 2 + var) / 2.0 - rho * mu) - rho * x1

    best = (math.inf, -1)
    for i in range(instance.K):
        sd = math.sqrt(var[i])
        dens = stats.norm(mu[i], sd).pdf
        lo, hi = mu[i] - 12 * sd, mu[i] + 12 * sd
        # kinks where the optimal second arm changes
        pts = []
        for j in range(instance.K):
            for k in range(j + 1, instance.K):
                # ((x-mu_j)^2 + v_j)/2 - rho mu_j = same for k  -> linear in x
                a = mu[k] - mu[j]
                c = (mu[k] ** 2 - mu[j] ** 2 + var[k] - var[j]) / 2.0 - rho * (mu[k] - mu[j])
                if a != 0:
                    x = c / a
                    if lo < x < hi:
                        pts.append(x)
        val, _ = integrate.quad(lambda x: conditional(x) * dens(x), lo, hi,
                                points=sorted(pts) or None, limit=200, epsabs=1e-11, epsrel=1e-11)
        best = min(best, (val, i))
    return best


# --------------------------------------------------------------------------
# Adversarial pairs


@dataclass
class MinimaxInstancePair:
    F: BanditInstance
    F_prime: BanditInstance
    delta: float
    T: int = 0


def minimax_pair_from_gap(delta: float, rho: float, a: float = 0.25) -> MinimaxInstancePair:
    """Gaussian arm 1 shared by both instances, Bernoulli arm 2 switched.

    The Bernoulli offset is scaled so that the mean-variance gap equals
    ``delta`` for every ``rho`` (the raw construction yields ``(1 - 2 rho)``
    times the offset, or half of it at ``rho = 1/2``).
    """
    if delta <= 0:
        raise InfeasibleInstanceError(f"gap must be positive, got {delta}")
    if rho == 0.5:
        d = 2.0 * delta
        mu1, var1 = 5.0 / 6.0, 17.0 / 36.0 - 9.0 * d**2
        p, q = 1.0 / 3.0 + 3.0 * d, 1.0 / 3.0 - 3.0 * d
    else:
        d = delta / abs(1.0 - 2.0 * rho)
        mu1, var1 = 0.75, 3.0 / 16.0 - 4.0 * d**2 + rho / 2.0
        p, q = 0.25 + 2.0 * d, 0.25 - 2.0 * d
    if var1 <= 0 or not (0.0 < q < p < 1.0):
        raise InfeasibleInstanceError(
            f"gap {delta} infeasible for rho={rho}: variance {var1:.6g}, p={p:.6g}, q={q:.6g}")
    arm1 = Gaussian(mu1, var1)
    F = make_instance([arm1, Bernoulli(p)], rho, a)
    Fp = make_instance([arm1, Bernoulli(q)], rho, a)
    return MinimaxInstancePair(F, Fp, delta)


def build_minimax_pair(T: int, rho: float, d6: float = DEFAULT_D6, a: float = 0.25) -> MinimaxInstancePair:
    """Pair with gap ``d6 * T^(-1/3)``."""
    pair = minimax_pair_from_gap(d6 * T ** (-1.0 / 3.0), rho, a)
    pair.T = T
    return pair


def xi_gap(instance: BanditInstance) -> float:
    return float(instance.xi[1] - instance.xi[0])


@dataclass
class MinimaxRow:
    T: int
    delta: float
    regret_F: Estimate
    regret_Fprime: Estimate

    @property
    def max_regret(self) -> float:
        return max(self.regret_F.value, self.regret_Fprime.value)


def loglog_slope(horizons, values):
    """Least-squares slope of log(value) on log(T); None with fewer than two points."""
    if len(horizons) < 2:
        return None
    x = np.log(np.asarray(horizons, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def minimax_scaling_experiment(horizons, rho: float = 0.0, replications: int = 1000, seed: int = 0,
                               d6: float = DEFAULT_D6, policy: PolicySpec = None,
                               jobs: int = 1) -> tuple:
    """Max proxy regret over each adversarial pair; returns ``(rows, slope)``."""
    if policy is None:
        policy = MvDsee(mode="model_independent", w=1.0)
    from .regret import proxy_regret_empirical

    rows = []
    for h, T in enumerate(horizons):
        pair = build_minimax_pair(T, rho, d6)
        est = []
        for k, inst in enumerate((pair.F, pair.F_prime)):
            batch = simulate(inst, policy, T, replications, RandomStream(seed).child(h, k), jobs=jobs)
            est.append(proxy_regret_empirical(batch, inst))
        rows.append(MinimaxRow(T, pair.delta, est[0], est[1]))
    slope = loglog_slope([r.T for r in rows], [r.max_regret for r in rows])
    return rows, slope


# --------------------------------------------------------------------------
# Figure scenarios


FIG1_MEANS = (0.0, 1.0, 2.0, 3.0)
FIG1_SD = (1.0, 1.0, 2.0, 2.0)
FIG1_PRESETS = (1.0, 5.0)


def fig1_instance(rho: float, a: float = 0.25) -> BanditInstance:
    if rho <= 0:
        raise ValueError("rho must be positive")
    return make_instance([Gaussian(m, s**2) for m, s in zip(FIG1_MEANS, FIG1_SD)], rho, a)


def fig1_scenario(rho: float, T: int = 10**4, replications: int = 100, seed: int = 0) -> Scenario:
    return Scenario(f"fig1_rho_{rho:g}", fig1_instance(rho), [MvUcb()], [T], replications, seed,
                    trace=True)


def fig1_path_variances(rho: float, T: int = 10**4, replications: int = 100, seed: int = 0,
                        jobs: int = 1) -> np.ndarray:
    """Per-replication sample variance of the rewards MV-UCB observes."""
    sc = fig1_scenario(rho, T, replications, seed)
    batch = simulate(sc.instance, sc.policies[0], T, replications, cell_stream(seed, 0, 0), jobs=jobs)
    return batch.path_variance()


FIG2_MEANS = (0.0, 0.5)
FIG2_VAR2 = 1.0
FIG2_RHO = 1.0


def fig2_instance(delta: float, a: float = 0.25) -> BanditInstance:
    """Two Gaussians with the second variance fixed and the first set by the gap."""
    var1 = FIG2_VAR2 - FIG2_RHO * (FIG2_MEANS[1] - FIG2_MEANS[0]) - delta
    if delta <= 0 or var1 <= 0:
        raise InfeasibleInstanceError(f"gap {delta} infeasible: first-arm variance would be {var1:g}")
    return make_instance([Gaussian(FIG2_MEANS[0], var1), Gaussian(FIG2_MEANS[1], FIG2_VAR2)],
                         FIG2_RHO, a)


def fig2_scenario(delta: float, horizons=(100, 1000, 10000), replications: int = 1000,
                  seed: int = 0, policies=None) -> Scenario:
    return Scenario(f"fig2_delta_{delta:g}", fig2_instance(delta), list(policies or [MvUcb()]),
                    list(horizons), replications, seed)


# The smaller bonus shows the gap ordering within the plotted horizons; the
# admissible default needs far longer horizons to leave its transient.
FIG2_POLICIES = (MvUcb(), MvUcb(1.0))


def fig2_catalog(deltas=(0.05, 0.1, 0.25), **kw) -> list:
    kw.setdefault("policies", FIG2_POLICIES)
    return [fig2_scenario(d, **kw) for d in deltas]


def builtin_catalog(seed: int = 0) -> list:
    """The scenarios reproduced by default."""
    return [fig1_scenario(1.0, seed=seed), fig1_scenario(5.0, seed=seed)] + fig2_catalog(seed=seed)

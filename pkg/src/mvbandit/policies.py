"""Arm-selection policies and the replication engine that runs them.

All replications of one run advance in lockstep as numpy arrays.  The reward
of arm ``i`` at its ``s``-th pull in replication ``r`` is the ``s``-th draw of
the child stream ``(r, i)``, so a replication's trajectory does not depend on
how replications are grouped into chunks or on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import BanditInstance, RandomStream
from .estimators import StreamingMoments, welford_update

# Upper bound on floats held in one chunk's reward table.
CHUNK_FLOATS = 2**23


@dataclass(frozen=True)
class MvUcb:
    """Mean-variance UCB; ``b=None`` picks the smallest admissible bonus."""

    b: Optional[float] = None
    kind = "mv_ucb"

    def bonus(self, instance: BanditInstance) -> float:
        return default_ucb_bonus(instance) if self.b is None else float(self.b)


@dataclass(frozen=True)
class MvDsee:
    """Deterministic sequencing of exploration and exploitation.

    ``mode`` is ``"model_specific"`` (budget ceil(f(t) log t) with the slow
    schedule ``f(t) = max(1, log log max(t, 3))``) or ``"model_independent"``
    (budget ceil(w t^(2/3))).
    """

    mode: str = "model_specific"
    w: float = 1.0
    kind = "mv_dsee"

    def __post_init__(self):
        if self.mode not in ("model_specific", "model_independent"):
            raise ValueError(f"unknown MV-DSEE mode {self.mode!r}")
        if self.w <= 0:
            raise ValueError("w must be positive")


@dataclass(frozen=True)
class SingleArm:
    arm: int
    kind = "single_arm"


@dataclass(frozen=True)
class CounterexampleThreshold:
    """Two-step policy: arm 0, then arm 0 iff the first reward is below ``threshold``."""

    threshold: float = 0.5
    kind = "counterexample"


@dataclass(frozen=True)
class RiskNeutralUcb:
    c: float = math.sqrt(2.0)
    kind = "rn_ucb"


PolicySpec = Union[MvUcb, MvDsee, SingleArm, CounterexampleThreshold, RiskNeutralUcb]


def default_ucb_bonus(instance: BanditInstance) -> float:
    return math.sqrt(3.0) * (2.0 + instance.rho) / math.sqrt(instance.a)


def policy_label(policy: PolicySpec) -> str:
    if isinstance(policy, MvUcb):
        return "mv_ucb" if policy.b is None else f"mv_ucb(b={policy.b:g})"
    if isinstance(policy, MvDsee):
        if policy.mode == "model_independent":
            return f"mv_dsee(model_independent;w={policy.w:g})"
        return "mv_dsee(model_specific)"
    if isinstance(policy, SingleArm):
        return f"single_arm({policy.arm})"
    if isinstance(policy, CounterexampleThreshold):
        return f"counterexample(threshold={policy.threshold:g})"
    if isinstance(policy, RiskNeutralUcb):
        return f"rn_ucb(c={policy.c:g})"
    raise TypeError(f"unknown policy {policy!r}")


# --------------------------------------------------------------------------
# Scalar decision rules


def mv_ucb_index(stats: StreamingMoments, rho: float, b: float, t: int) -> float:
    if stats.count < 1:
        raise ValueError("index undefined for an arm with no observations")
    if t < 1:
        raise ValueError("t must be >= 1")
    return stats.mean_variance(rho) - b * math.sqrt(math.log(t) / stats.count)


def slow_schedule(t: int) -> float:
    return max(1.0, math.log(math.log(max(t, 3))))


def exploration_budget(t: int, mode: MvDsee, K: int) -> int:
    """Number of exploration slots MV-DSEE allots up to time ``t``.

    Floored at ``K`` so each arm is sampled before the first exploitation step.
    """
    if mode.mode == "model_independent":
        raw = math.ceil(mode.w * t ** (2.0 / 3.0))
    else:
        raw = math.ceil(slow_schedule(t) * math.log(t))
    return max(K, raw)


def dsee_phase(t: int, explored_so_far: int, mode: MvDsee, K: int):
    """Return ``("explore", arm)`` or ``("exploit", None)`` for time ``t``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if explored_so_far < exploration_budget(t, mode, K):
        return ("explore", explored_so_far % K)
    return ("exploit", None)


def counterexample_policy_step(t: int, first_reward: Optional[float], threshold: float) -> int:
    if t == 1:
        return 0
    if t == 2:
        if first_reward is None:
            raise ValueError("the second step needs the first reward")
        return 0 if first_reward < threshold else 1
    raise ValueError("the counterexample policy is defined for a horizon of 2 only")


# --------------------------------------------------------------------------
# Traces


@dataclass
class RunTrace:
    """One realised horizon of a policy."""

    horizon: int
    choices: np.ndarray
    rewards: np.ndarray
    counts: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def per_arm(self) -> list:
        return list(zip(self.counts.tolist(), self.means.tolist(), self.variances.tolist()))

    def to_csv(self, path) -> None:
        from .estimators import fmt
        with open(path, "w") as fh:
            fh.write("t,arm,reward\n")
            for t, (arm, x) in enumerate(zip(self.choices, self.rewards), start=1):
                fh.write(f"{t},{int(arm)},{fmt(x)}\n")


@dataclass
class TraceBatch:
    """Per-replication end-of-horizon statistics for many runs of one policy.

    ``tau``, ``mean`` and ``m2`` have shape ``(replications, K)``.  Means of
    unplayed arms are NaN.
    """

    horizon: int
    tau: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    traces: Optional[list] = None

    @property
    def replications(self) -> int:
        return self.tau.shape[0]

    def path_cumulative_mv(self, rho: float) -> np.ndarray:
        """Per-replication value of the path functional, merged from arm statistics."""
        T = self.horizon
        played = self.tau > 0
        mean = np.where(played, self.mean, 0.0)
        total = (self.tau * mean).sum(axis=1)
        path_mean = total / T
        m2 = np.where(played, self.m2, 0.0).sum(axis=1)
        m2 = m2 + (self.tau * (mean - path_mean[:, None]) ** 2).sum(axis=1)
        return m2 - rho * total

    def path_variance(self) -> np.ndarray:
        """Per-replication biased sample variance of all observed rewards."""
        return self.path_cumulative_mv(0.0) / self.horizon

    @classmethod
    def from_traces(cls, traces) -> "TraceBatch":
        traces = list(traces)
        if not traces:
            raise ValueError("no traces")
        T = traces[0].horizon
        if any(tr.horizon != T for tr in traces):
            raise ValueError("traces have heterogeneous horizons")
        tau = np.array([tr.counts for tr in traces])
        mean = np.array([tr.means for tr in traces])
        m2 = np.array([tr.variances for tr in traces]) * tau
        return cls(T, tau, mean, np.nan_to_num(m2), traces)

    @classmethod
    def concat(cls, parts) -> "TraceBatch":
        parts = list(parts)
        traces = None
        if all(p.traces is not None for p in parts):
            traces = [tr for p in parts for tr in p.traces]
        return cls(parts[0].horizon,
                   np.concatenate([p.tau for p in parts]),
                   np.concatenate([p.mean for p in parts]),
                   np.concatenate([p.m2 for p in parts]),
                   traces)


# --------------------------------------------------------------------------
# Engine


def _check_policy(instance: BanditInstance, policy: PolicySpec, T: int) -> None:
    K = instance.K
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if isinstance(policy, (MvUcb, RiskNeutralUcb)) and T < K:
        raise ValueError(f"index policies need T >= K (T={T}, K={K})")
    if isinstance(policy, SingleArm) and not 0 <= policy.arm < K:
        raise ValueError(f"arm index {policy.arm} out of range for K={K}")
    if isinstance(policy, CounterexampleThreshold) and T > 2:
        raise ValueError("the counterexample policy is defined for a horizon of 2 only")


def _run_chunk(instance: BanditInstance, policy: PolicySpec, T: int, stream: RandomStream,
               start: int, stop: int, record: bool) -> TraceBatch:
    K = instance.K
    R = stop - start
    rho = instance.rho
    table = np.empty((R, K, T))
    for j, r in enumerate(range(start, stop)):
        rep = stream.child(r)
        for i, arm in enumerate(instance.arms):
            table[j, i] = arm.draw(rep.child(i).generator, T)

    rows = np.arange(R)
    tau = np.zeros((R, K), dtype=np.int64)
    mean = np.zeros((R, K))
    m2 = np.zeros((R, K))
    if record:
        choices = np.empty((R, T), dtype=np.int64)
        rewards = np.empty((R, T))

    if isinstance(policy, MvUcb):
        b = policy.bonus(instance)
    elif isinstance(policy, RiskNeutralUcb):
        b = policy.c
    explored = 0
    first = None

    for t in range(1, T + 1):
        if isinstance(policy, SingleArm):
            arms = np.full(R, policy.arm)
        elif isinstance(policy, (MvUcb, RiskNeutralUcb)):
            if t <= K:
                arms = np.full(R, t - 1)
            else:
                bonus = b * np.sqrt(math.log(t) / tau)
                if isinstance(policy, MvUcb):
                    arms = np.argmin(m2 / tau - rho * mean - bonus, axis=1)
                else:
                    arms = np.argmax(mean + bonus, axis=1)
        elif isinstance(policy, MvDsee):
            phase, arm = dsee_phase(t, explored, policy, K)
            if phase == "explore":
                arms = np.full(R, arm)
                explored += 1
            else:
                arms = np.argmin(m2 / tau - rho * mean, axis=1)
        elif isinstance(policy, CounterexampleThreshold):
            arms = np.zeros(R, dtype=np.int64) if t == 1 else np.where(first < policy.threshold, 0, 1)
        else:
            raise TypeError(f"unknown policy {policy!r}")

        x = table[rows, arms, tau[rows, arms]]
        if t == 1:
            first = x
        n, mu, s2 = welford_update(tau[rows, arms], mean[rows, arms], m2[rows, arms], x)
        tau[rows, arms] = n
        mean[rows, arms] = mu
        m2[rows, arms] = s2
        if record:
            choices[:, t - 1] = arms
            rewards[:, t - 1] = x

    played = tau > 0
    mean = np.where(played, mean, np.nan)
    traces = None
    if record:
        with np.errstate(invalid="ignore", divide="ignore"):
            var = np.where(played, m2 / tau, np.nan)
        traces = [RunTrace(T, choices[j], rewards[j], tau[j].copy(), mean[j].copy(), var[j].copy())
                  for j in range(R)]
    return TraceBatch(T, tau, mean, m2, traces)


def chunk_bounds(replications: int, K: int, T: int) -> list:
    """Fixed partition of replications into chunks; independent of worker count."""
    size = max(1, CHUNK_FLOATS // (K * T))
    return [(s, min(s + size, replications)) for s in range(0, replications, size)]


def _run_chunk_args(args):
    return _run_chunk(*args)


def simulate(instance: BanditInstance, policy: PolicySpec, T: int, replications: int,
             stream: RandomStream, record: bool = False, jobs: int = 1) -> TraceBatch:
    """Run ``replications`` independent horizons of ``policy`` on ``instance``.

    Replication ``r`` uses the child stream ``stream.child(r)``.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    _check_policy(instance, policy, T)
    bounds = chunk_bounds(replications, instance.K, T)
    tasks = [(instance, policy, T, stream, s, e, record) for s, e in bounds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            parts = list(pool.map(_run_chunk_args, tasks))
    else:
        parts = [_run_chunk(*task) for task in tasks]
    return TraceBatch.concat(parts)


def run_policy(instance: BanditInstance, policy: PolicySpec, T: int, stream: RandomStream,
               replication: int = 0) -> RunTrace:
    """One recorded horizon; identical to replication ``replication`` of :func:`simulate`."""
    _check_policy(instance, policy, T)
    return _run_chunk(instance, policy, T, stream, replication, replication + 1, True).traces[0]

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvbandit.core import Bernoulli, Gaussian, RandomStream, make_instance
from mvbandit.estimators import StreamingMoments
from mvbandit.experiments import counterexample_instance, fig1_instance, fig2_instance
from mvbandit.policies import (CounterexampleThreshold, MvDsee, MvUcb, RiskNeutralUcb, SingleArm,
                               TraceBatch, counterexample_policy_step, dsee_phase,
                               exploration_budget, mv_ucb_index, policy_label, run_policy, simulate,
                               slow_schedule)


def replay(instance, policy, T, stream, r):
    """Scalar re-implementation of one replication, step by step."""
    rep = stream.child(r)
    table = [arm.draw(rep.child(i).generator, T) for i, arm in enumerate(instance.arms)]
    K = instance.K
    stats = [StreamingMoments() for _ in range(K)]
    explored = 0
    first = None
    choices = []
    for t in range(1, T + 1):
        if isinstance(policy, SingleArm):
            arm = policy.arm
        elif isinstance(policy, CounterexampleThreshold):
            arm = counterexample_policy_step(t, first, policy.threshold)
        elif isinstance(policy, MvDsee):
            phase, arm = dsee_phase(t, explored, policy, K)
            if phase == "explore":
                explored += 1
            else:
                xi = [s.mean_variance(instance.rho) for s in stats]
                arm = min(range(K), key=lambda i: (xi[i], i))
        elif t <= K:
            arm = t - 1
        elif isinstance(policy, MvUcb):
            b = policy.bonus(instance)
            idx = [mv_ucb_index(s, instance.rho, b, t) for s in stats]
            arm = min(range(K), key=lambda i: (idx[i], i))
        else:
            idx = [s.mean + policy.c * math.sqrt(math.log(t) / s.count) for s in stats]
            arm = min(range(K), key=lambda i: (-idx[i], i))
        x = table[arm][stats[arm].count]
        if t == 1:
            first = x
        stats[arm] = stats[arm].update(x)
        choices.append(arm)
    return choices, stats


CASES = [
    (fig2_instance(0.25), MvUcb(), 300),
    (fig2_instance(0.1), MvUcb(b=1.0), 300),
    (fig1_instance(1.0), MvUcb(b=2.0), 200),
    (fig2_instance(0.25), MvDsee(), 300),
    (fig1_instance(5.0), MvDsee("model_independent", 0.5), 200),
    (make_instance([Bernoulli(0.3), Bernoulli(0.6), Gaussian(0.5, 0.2)], 1.0), RiskNeutralUcb(), 200),
    (counterexample_instance(), CounterexampleThreshold(), 2),
    (counterexample_instance(), SingleArm(1), 50),
]


@pytest.mark.parametrize("instance,policy,T", CASES, ids=[policy_label(c[1]) for c in CASES])
def test_engine_matches_scalar_replay(instance, policy, T):
    stream = RandomStream(21)
    batch = simulate(instance, policy, T, 6, stream, record=True)
    for r in range(6):
        choices, stats = replay(instance, policy, T, stream, r)
        tr = batch.traces[r]
        assert tr.choices.tolist() == choices
        for i, s in enumerate(stats):
            assert batch.tau[r, i] == s.count
            if s.count:
                assert batch.mean[r, i] == pytest.approx(s.mean, rel=1e-12, abs=1e-12)
                assert batch.m2[r, i] == pytest.approx(s.m2, rel=1e-9, abs=1e-9)


class TestIndex:
    def test_example(self):
        stats = StreamingMoments(100, 0.0, 100.0 * 1.0)  # variance 1, mean 0
        assert mv_ucb_index(stats, 1.0, 1.0, math.exp(100)) == pytest.approx(0.0, abs=1e-12)

    def test_t_one_is_greedy(self):
        stats = StreamingMoments().extend([0.3, 1.7, 2.2])
        assert mv_ucb_index(stats, 2.0, 5.0, 1) == stats.mean_variance(2.0)

    def test_zero_bonus(self):
        stats = StreamingMoments().extend([0.3, 1.7])
        assert mv_ucb_index(stats, 1.0, 0.0, 50) == stats.mean_variance(1.0)

    def test_empty_stats(self):
        with pytest.raises(ValueError):
            mv_ucb_index(StreamingMoments(), 1.0, 1.0, 2)

    def test_default_bonus(self):
        inst = fig2_instance(0.25)
        assert MvUcb().bonus(inst) == pytest.approx(math.sqrt(3) * 3 / 0.5)
        assert MvUcb(b=0.7).bonus(inst) == 0.7

    @given(st.floats(-100, 100))
    def test_shifting_rewards_shifts_all_indices(self, shift):
        # a common reward shift moves every index by -rho * shift
        base = [StreamingMoments().extend(xs) for xs in ([0.1, 0.5, 0.2], [1.0, -0.3], [0.7, 0.7, 0.9, 0.1])]
        moved = [StreamingMoments().extend([x + shift for x in xs])
                 for xs in ([0.1, 0.5, 0.2], [1.0, -0.3], [0.7, 0.7, 0.9, 0.1])]
        a = [mv_ucb_index(s, 1.0, 0.5, 10) for s in base]
        b = [mv_ucb_index(s, 1.0, 0.5, 10) for s in moved]
        assert int(np.argmin(a)) == int(np.argmin(b))

    def test_shifted_instance_same_choices(self):
        inst = fig1_instance(1.0)
        moved = make_instance([Gaussian(d.mean + 0.25, d.variance) for d in inst.arms], 1.0)
        pol = MvUcb(b=1.0)
        x = simulate(inst, pol, 500, 20, RandomStream(4), record=True)
        y = simulate(moved, pol, 500, 20, RandomStream(4), record=True)
        assert all(np.array_equal(p.choices, q.choices) for p, q in zip(x.traces, y.traces))


class TestDsee:
    def test_first_step_explores(self):
        for mode in (MvDsee(), MvDsee("model_independent")):
            assert dsee_phase(1, 0, mode, 2) == ("explore", 0)

    def test_model_independent_budget(self):
        assert exploration_budget(1000, MvDsee("model_independent", 1.0), 2) == 100

    def test_model_specific_budget(self):
        t = 10**4
        expected = math.ceil(max(1.0, math.log(math.log(t))) * math.log(t))
        assert exploration_budget(t, MvDsee(), 2) == expected == 21

    def test_slow_schedule_floor(self):
        assert slow_schedule(1) == slow_schedule(10) == 1.0
        assert slow_schedule(10**6) == pytest.approx(math.log(math.log(10**6)))

    def test_total_exploration_slots(self):
        explored = 0
        for t in range(1, 1001):
            phase, _ = dsee_phase(t, explored, MvDsee("model_independent"), 2)
            explored += phase == "explore"
        assert explored == 100

    @pytest.mark.parametrize("K", [2, 3, 5])
    def test_round_robin_balance(self, K):
        counts = [0] * K
        explored = 0
        for t in range(1, 3000):
            phase, arm = dsee_phase(t, explored, MvDsee("model_independent"), K)
            if phase == "explore":
                counts[arm] += 1
                explored += 1
                assert max(counts) - min(counts) <= 1

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            MvDsee("greedy")


class TestCounterexampleStep:
    def test_examples(self):
        assert counterexample_policy_step(1, None, 0.5) == 0
        assert counterexample_policy_step(2, 0.3, 0.5) == 0
        assert counterexample_policy_step(2, 0.7, 0.5) == 1

    def test_beyond_two_steps(self):
        with pytest.raises(ValueError):
            counterexample_policy_step(3, 0.1, 0.5)

    def test_policy_rejects_long_horizon(self):
        with pytest.raises(ValueError):
            simulate(counterexample_instance(), CounterexampleThreshold(), 3, 2, RandomStream(0))


class TestRuns:
    def test_single_arm_trace(self):
        tr = run_policy(counterexample_instance(), SingleArm(0), 10, RandomStream(1))
        assert tr.choices.tolist() == [0] * 10
        assert tr.counts.tolist() == [10, 0]

    def test_initialisation_round(self):
        for seed in range(5):
            tr = run_policy(counterexample_instance(), MvUcb(), 2, RandomStream(seed))
            assert tr.choices.tolist() == [0, 1]

    @pytest.mark.parametrize("policy", [MvUcb(), RiskNeutralUcb()])
    def test_horizon_below_k(self, policy):
        with pytest.raises(ValueError):
            run_policy(fig1_instance(1.0), policy, 3, RandomStream(0))

    @pytest.mark.parametrize("arm", [-1, 2])
    def test_unknown_arm(self, arm):
        with pytest.raises(ValueError):
            run_policy(counterexample_instance(), SingleArm(arm), 5, RandomStream(0))

    @pytest.mark.parametrize("policy", [MvUcb(), MvDsee(), RiskNeutralUcb(c=1.0)])
    def test_trace_invariants(self, policy):
        inst = fig1_instance(1.0)
        tr = run_policy(inst, policy, 400, RandomStream(2), replication=3)
        assert tr.counts.sum() == 400
        for i in range(inst.K):
            x = tr.rewards[tr.choices == i]
            assert tr.counts[i] == x.size
            if x.size:
                assert tr.means[i] == pytest.approx(x.mean(), rel=1e-12, abs=1e-12)
                assert tr.variances[i] == pytest.approx(x.var(), rel=1e-9, abs=1e-12)

    def test_run_policy_is_replication_of_simulate(self):
        inst = fig2_instance(0.25)
        batch = simulate(inst, MvUcb(), 100, 5, RandomStream(7), record=True)
        tr = run_policy(inst, MvUcb(), 100, RandomStream(7), replication=4)
        np.testing.assert_array_equal(tr.rewards, batch.traces[4].rewards)

    def test_deterministic_replay(self):
        inst = fig2_instance(0.1)
        a = run_policy(inst, MvDsee(), 300, RandomStream(99))
        b = run_policy(inst, MvDsee(), 300, RandomStream(99))
        np.testing.assert_array_equal(a.choices, b.choices)
        assert a.rewards.tobytes() == b.rewards.tobytes()

    def test_jobs_do_not_change_results(self):
        inst = fig1_instance(1.0)
        # enough replications for several chunks
        a = simulate(inst, MvUcb(), 3000, 800, RandomStream(3), jobs=1)
        b = simulate(inst, MvUcb(), 3000, 800, RandomStream(3), jobs=2)
        assert a.tau.tobytes() == b.tau.tobytes() and a.m2.tobytes() == b.m2.tobytes()

    def test_single_arm_optimal_pulls_all(self):
        inst = fig2_instance(0.25)
        batch = simulate(inst, SingleArm(inst.star), 50, 30, RandomStream(0))
        assert np.all(batch.tau[:, inst.star] == 50)

    def test_trace_csv(self, tmp_path):
        tr = run_policy(counterexample_instance(), SingleArm(0), 3, RandomStream(1))
        tr.to_csv(tmp_path / "tr.csv")
        lines = (tmp_path / "tr.csv").read_text().splitlines()
        assert lines[0] == "t,arm,reward" and len(lines) == 4
        assert float(lines[1].split(",")[2]) == tr.rewards[0]

    def test_from_traces_rejects_mixed_horizons(self):
        inst = counterexample_instance()
        a = run_policy(inst, SingleArm(0), 3, RandomStream(1))
        b = run_policy(inst, SingleArm(0), 4, RandomStream(1))
        with pytest.raises(ValueError):
            TraceBatch.from_traces([a, b])

    def test_path_functional_from_arm_stats(self):
        inst = fig1_instance(1.0)
        batch = simulate(inst, MvUcb(b=1.0), 300, 4, RandomStream(5), record=True)
        direct = [((t.rewards - t.rewards.mean()) ** 2).sum() - t.rewards.sum() for t in batch.traces]
        np.testing.assert_allclose(batch.path_cumulative_mv(1.0), direct, rtol=1e-10)

    def test_labels_have_no_commas(self):
        for p in (MvUcb(), MvUcb(1.5), MvDsee(), MvDsee("model_independent", 2.0), SingleArm(1),
                  CounterexampleThreshold(), RiskNeutralUcb()):
            assert "," not in policy_label(p)

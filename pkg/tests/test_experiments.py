import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvbandit.core import InfeasibleInstanceError, RandomStream
from mvbandit.experiments import (Scenario, build_minimax_pair, builtin_catalog, check_unique_names,
                                  counterexample_experiment, fig1_instance, fig1_scenario,
                                  fig2_catalog, fig2_instance, fig2_scenario, loglog_slope,
                                  minimax_pair_from_gap, minimax_scaling_experiment, run_scenario,
                                  xi_gap)
from mvbandit.policies import MvDsee, MvUcb, SingleArm, simulate
from mvbandit.regret import proxy_regret_empirical


class TestMinimaxPair:
    def test_example(self):
        pair = minimax_pair_from_gap(0.05, 0.0)
        g, b = pair.F.arms
        assert g.variance == pytest.approx(0.1775)
        assert b.p == pytest.approx(0.35) and pair.F_prime.arms[1].p == pytest.approx(0.15)
        assert b.true_variance - g.variance == pytest.approx(0.05)

    def test_infeasible(self):
        with pytest.raises(InfeasibleInstanceError):
            minimax_pair_from_gap(0.25, 0.0)
        with pytest.raises(InfeasibleInstanceError):
            minimax_pair_from_gap(0.0, 0.0)

    def test_vanishing_gap(self):
        pair = minimax_pair_from_gap(1e-9, 0.0)
        assert abs(xi_gap(pair.F)) < 1e-8 and abs(xi_gap(pair.F_prime)) < 1e-8

    def test_shared_gaussian_arm(self):
        pair = build_minimax_pair(1000, 1.0)
        assert pair.F.arms[0] == pair.F_prime.arms[0]
        assert pair.delta == pytest.approx(0.3 * 1000 ** (-1 / 3)) and pair.T == 1000

    @given(st.floats(1e-6, 0.12), st.sampled_from([0.0, 0.25, 0.5, 1.0, 3.0]))
    def test_gap_identity(self, delta, rho):
        try:
            pair = minimax_pair_from_gap(delta, rho)
        except InfeasibleInstanceError:
            return
        assert abs(xi_gap(pair.F)) == pytest.approx(delta, abs=1e-12)
        assert abs(xi_gap(pair.F_prime)) == pytest.approx(delta, abs=1e-12)
        assert pair.F.star != pair.F_prime.star
        assert pair.F.arms[0].variance > 0

    def test_logarithmic_contrast(self):
        pair = minimax_pair_from_gap(0.12, 0.0)
        horizons = [1000, 3000, 10000]
        worst = []
        for h, T in enumerate(horizons):
            worst.append(max(
                proxy_regret_empirical(simulate(inst, MvUcb(b=0.3), T, 200, RandomStream(2).child(h, k)), inst).value
                for k, inst in enumerate((pair.F, pair.F_prime))))
        assert loglog_slope(horizons, worst) < 0.3

    def test_single_horizon_slope(self):
        rows, slope = minimax_scaling_experiment([1000], replications=20)
        assert slope is None and len(rows) == 1
        assert rows[0].max_regret == max(rows[0].regret_F.value, rows[0].regret_Fprime.value)


class TestCounterexample:
    def test_confirmed(self):
        res = counterexample_experiment(10**5, seed=1)
        assert res.xi_single_arm == pytest.approx(1.0)
        assert res.xi_threshold_policy.value < 0.7
        assert res.suboptimality_confirmed

    def test_never_switching(self):
        res = counterexample_experiment(10**5, seed=2, threshold=math.inf)
        est = res.xi_threshold_policy
        assert abs(est.value - 1.0) <= 3 * est.se
        assert not res.suboptimality_confirmed

    def test_always_switching(self):
        # independent draws from both arms: (1 + 1 + 2.1) / 2 - (0 + 1)
        res = counterexample_experiment(10**5, seed=2, threshold=-math.inf)
        est = res.xi_threshold_policy
        assert abs(est.value - 1.05) <= 3 * est.se
        assert not res.suboptimality_confirmed

    def test_minimum_replications(self):
        with pytest.raises(ValueError):
            counterexample_experiment(10**4)

    def test_replication_count_consistency(self):
        a = counterexample_experiment(10**5, seed=3).xi_threshold_policy
        b = counterexample_experiment(2 * 10**5, seed=4).xi_threshold_policy
        assert abs(a.value - b.value) <= 3 * math.hypot(a.se, b.se)


class TestFigures:
    def test_fig1_presets(self):
        np.testing.assert_allclose(fig1_instance(1.0).xi, [1, 0, 2, 1])
        assert fig1_instance(1.0).star == 1
        np.testing.assert_allclose(fig1_instance(5.0).xi, [1, -4, -6, -11])
        assert fig1_instance(5.0).star == 3

    def test_fig1_requires_positive_rho(self):
        with pytest.raises(ValueError):
            fig1_scenario(0.0)

    def test_fig2_instance(self):
        inst = fig2_instance(0.25)
        assert inst.arms[0].variance == pytest.approx(0.25)
        np.testing.assert_allclose(inst.xi, [0.25, 0.5])

    @pytest.mark.parametrize("delta", [0.5, 0.0, -0.1])
    def test_fig2_infeasible(self, delta):
        with pytest.raises(InfeasibleInstanceError):
            fig2_instance(delta)

    def test_fig2_ordering(self):
        # smaller gap, larger regret; b = 1 leaves the transient within T = 1e4
        deltas = [0.05, 0.1, 0.25]
        est = [proxy_regret_empirical(simulate(fig2_instance(d), MvUcb(b=1.0), 10**4, 300,
                                               RandomStream(5).child(k)), fig2_instance(d))
               for k, d in enumerate(deltas)]
        for hi, lo in zip(est, est[1:]):
            assert hi.value - lo.value > 3 * math.hypot(hi.se, lo.se)

    def test_catalog_names_unique(self):
        check_unique_names(builtin_catalog())
        with pytest.raises(ValueError):
            check_unique_names(fig2_catalog() + fig2_catalog())


class TestRunScenario:
    def make(self, **kw):
        args = dict(name="s", instance=fig2_instance(0.25), policies=[MvUcb(), SingleArm(1)],
                    horizons=[10, 40], replications=30, seed=4)
        args.update(kw)
        return Scenario(**args)

    def test_cells_and_determinism(self):
        a = run_scenario(self.make())
        b = run_scenario(self.make())
        assert [(r.report.policy, r.T) for r in a] == [("mv_ucb", 10), ("mv_ucb", 40),
                                                       ("single_arm(1)", 10), ("single_arm(1)", 40)]
        assert [r.report.row() for r in a] == [r.report.row() for r in b]

    def test_seed_changes_results(self):
        a = run_scenario(self.make())
        b = run_scenario(self.make(seed=5))
        assert a[0].report.row() != b[0].report.row()

    def test_single_replication(self):
        res = run_scenario(self.make(replications=1))
        assert all(not r.report.se_defined for r in res)
        assert all(math.isfinite(r.report.empirical_xi.value) for r in res)

    def test_record_keeps_traces(self):
        res = run_scenario(self.make(replications=3), record=True)
        assert len(res[0].traces) == 3

    @pytest.mark.parametrize("kw", [{"horizons": [1]}, {"policies": []}, {"horizons": []},
                                    {"replications": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            self.make(**kw)

    def test_error_names_scenario(self):
        sc = self.make(policies=[SingleArm(5)])
        with pytest.raises(ValueError, match="'s'"):
            run_scenario(sc)

    def test_fig2_scenario(self):
        sc = fig2_scenario(0.1, horizons=[100], replications=10, policies=[MvDsee()])
        assert sc.name == "fig2_delta_0.1" and sc.horizons == [100]
        assert {len(s.policies) for s in fig2_catalog()} == {2}

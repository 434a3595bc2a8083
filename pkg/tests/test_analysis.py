import numpy as np
import pytest

from lambdarep import analysis as A
from lambdarep import diminish as D
from lambdarep.environments import load_environment
from lambdarep.errors import UndefinedEstimateError

from conftest import chain


def patch_trace(steps=10, lam=0.5):
    spec = D.RewardSpec(np.array([1.0]), lam, threshold=0.0)
    return D.run_episode(chain(1, gamma=0.9), spec, lambda s, r: 0, steps, seed=0), spec


class TestMarginalValueRule:
    def test_never_fires_when_average_is_low(self):
        tr, spec = patch_trace()
        rep = A.mvt_leave_times(tr, spec, R=2.0, T=10.0)
        assert len(rep.patches) == 1
        assert rep.patches[0].mvt_leave_t == 10

    def test_fires_after_marginal_drops(self):
        tr, spec = patch_trace()
        rep = A.mvt_leave_times(tr, spec, R=3.0, T=10.0)
        p = rep.patches[0]
        assert (p.enter_t, p.leave_t, p.mvt_leave_t) == (0, 10, 4)
        assert rep.leave_differences()[0] == 6.0

    def test_undiscounted_variant_agrees_at_gamma_one(self):
        tr, spec = patch_trace()
        rep = A.mvt_leave_times(tr, spec, R=3.0, T=10.0, gamma=1.0)
        np.testing.assert_array_equal(rep.leave_differences(True), rep.leave_differences(False))

    def test_discounting_delays_nothing_earlier(self):
        tr, spec = patch_trace()
        rep = A.mvt_leave_times(tr, spec, R=3.0, T=10.0, gamma=0.9, R_discounted=3.0)
        assert rep.patches[0].discounted_mvt_leave_t <= rep.patches[0].mvt_leave_t

    def test_segments(self):
        spec = D.RewardSpec(np.array([0.0, 1.0, 0.0]), 0.5)
        tr = D.EpisodeTrace(t=np.arange(6), states=np.array([0, 1, 1, 2, 1, 1]),
                            actions=np.zeros(6, int), rewards=np.zeros(6),
                            state_rewards=np.zeros(6), bumped=np.zeros(6, bool), gamma=0.9)
        assert A.patch_segments(tr, spec.goals) == [(1, 1, 3), (1, 4, 6)]

    def test_empty_trace(self):
        tr, spec = patch_trace(steps=0)
        with pytest.raises(UndefinedEstimateError):
            A.mvt_leave_times(tr, spec, 1.0, 1.0)


class TestAgentVsMVT:
    def test_needs_three_seeds(self):
        tr, spec = patch_trace()
        with pytest.raises(UndefinedEstimateError):
            A.agent_vs_mvt({0: [tr], 1: [tr]}, spec)

    def test_rows(self):
        tr, spec = patch_trace()
        summ = A.agent_vs_mvt({0: [tr], 1: [tr], 2: [tr]}, spec, environment="loop")
        assert len(summ.rows) == 3
        assert summ.rows[0][:3] == ("loop", 0, 0)
        assert summ.se_diff == 0.0


class TestLambdaLearning:
    def test_self_transition_pairs(self):
        tr, _ = patch_trace(steps=4)
        np.testing.assert_allclose(A.self_transition_pairs(tr),
                                   [[1.0, 0.5], [0.5, 0.25], [0.25, 0.125]])

    def test_estimate_moves_toward_truth(self):
        env = load_environment("fourrooms")
        spec = env.reward_spec()
        run = A.learn_lambda_gpi(env.mdp, spec, A.base_policies(env), 10, 40, seed=0)
        assert run.lambda_hat.shape == (11,)
        assert run.lambda_hat[0] == 1.0
        assert abs(run.lambda_hat[-1] - 0.5) < abs(run.lambda_hat[0] - 0.5)

    def test_fixed_estimate(self):
        env = load_environment("fourrooms")
        run = A.learn_lambda_gpi(env.mdp, env.reward_spec(), A.base_policies(env), 3, 20,
                                 seed=0, initial=0.7, learn=False)
        np.testing.assert_array_equal(run.lambda_hat, 0.7)

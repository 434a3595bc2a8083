import csv
import dataclasses
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lambdarep import diminish as D
from lambdarep import env_core as E
from lambdarep.errors import AgentError, ConfigError, EpisodeStateError, StructuralError

from conftest import chain


def stay_agent(s, r):
    return 0


class TestRewardSpec:
    def test_defaults(self):
        spec = D.RewardSpec(np.array([0.0, 2.0]), 0.5)
        assert spec.cap == 20.0
        assert spec.goals.tolist() == [False, True]
        assert spec.uses_threshold

    def test_no_threshold_without_decay(self):
        assert not D.RewardSpec(np.array([1.0]), 1.0).uses_threshold
        assert not D.RewardSpec(np.array([1.0]), 0.5, scheme=D.ELIGIBILITY).uses_threshold

    @pytest.mark.parametrize("kw", [
        {"lam": 1.5}, {"lam": -0.1}, {"lam": 0.5, "scheme": "bogus"},
        {"lam": 0.5, "lambda_d": 1.2}, {"lam": 0.5, "rate_scale": 0.0},
        {"lam": 0.5, "scheme": D.ELIGIBILITY, "lambda_r": 1.5},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            D.RewardSpec(np.array([1.0, 0.0]), **kw)

    def test_goals_shape(self):
        with pytest.raises(StructuralError):
            D.RewardSpec(np.array([1.0, 0.0]), 0.5, goals=np.array([True]))


class TestPureDiminish:
    def test_zero_to_the_zero(self):
        spec = D.RewardSpec(np.array([3.0]), 0.0)
        ep = D.EpisodeState.start(1, 0)
        assert D.reward_at(spec, 0, ep) == 3.0

    def test_self_loop_sequence(self):
        mdp = chain(1)
        spec = D.RewardSpec(np.array([8.0]), 0.5, threshold=0.0)
        tr = D.run_episode(mdp, spec, stay_agent, 4, seed=0)
        np.testing.assert_allclose(tr.rewards, [8, 4, 2, 1])
        assert tr.undiscounted_return == 15.0

    @given(lam=st.floats(0, 1), r=st.floats(0.1, 10), visits=st.integers(1, 30))
    def test_rewards_never_increase(self, lam, r, visits):
        mdp = chain(1)
        spec = D.RewardSpec(np.array([r]), lam, threshold=0.0)
        tr = D.run_episode(mdp, spec, stay_agent, visits, seed=0)
        assert np.all(np.diff(tr.rewards) <= 1e-12)
        np.testing.assert_allclose(tr.rewards, r * lam ** np.arange(visits), rtol=1e-12)

    def test_threshold_termination(self):
        mdp = chain(1)
        spec = D.RewardSpec(np.array([1.0]), 0.5, threshold=0.1)
        tr = D.run_episode(mdp, spec, stay_agent, 100, seed=0)
        # rewards 1, .5, .25, .125, then .0625 < .1 ends the episode
        assert len(tr) == 4

    def test_terminated_episode_cannot_step(self):
        mdp = chain(1)
        spec = D.RewardSpec(np.array([1.0]), 1.0)
        ep, _, done = D.step(mdp, spec, D.EpisodeState.start(1, 0, horizon=1), 0,
                             np.random.default_rng(0))
        assert done
        with pytest.raises(EpisodeStateError):
            D.step(mdp, spec, ep, 0, np.random.default_rng(0))


class TestReplenishingSchemes:
    def test_time_elapsed_recovers(self):
        spec = D.RewardSpec(np.array([1.0, 0.0]), 0.5, scheme=D.TIME_ELAPSED, rate_scale=0.5)
        ep = D.EpisodeState.start(2, 0)
        ep = dataclasses.replace(ep, t=1, visit_counts=np.array([1, 0]), last_visit_time=np.array([0, -1]))
        soon = D.reward_at(spec, 0, ep)
        later = D.reward_at(spec, 0, dataclasses.replace(ep, t=20))
        assert soon < later < 1.0

    def test_eligibility_trace_values(self):
        mdp = chain(1)
        spec = D.RewardSpec(np.array([1.0]), 1.0, scheme=D.ELIGIBILITY,
                            lambda_d=0.5, lambda_r=0.5)
        tr = D.run_episode(mdp, spec, stay_agent, 3, seed=0)
        # trace before step t: 0, .5, .75
        np.testing.assert_allclose(tr.rewards, [1.0, 0.75, 0.625])

    def test_total_time_is_capped(self):
        mdp = chain(1)
        spec = D.RewardSpec(np.array([1.0]), 1.0, scheme=D.TOTAL_TIME,
                            lambda_d=0.0, lambda_r=0.5, cap=5.0)
        tr = D.run_episode(mdp, spec, stay_agent, 10, seed=0)
        assert np.all(np.abs(tr.rewards) <= 5.0)


class TestEpisodes:
    def test_seeded_runs_repeat(self, rng):
        mdp = E.random_mdp(rng, 6, 3, 0.9)
        spec = D.RewardSpec(np.linspace(0, 1, 6), 0.7)
        agent = lambda s, r: int(np.argmax(r)) % 3  # noqa: E731
        a = D.run_episode(mdp, spec, agent, 30, seed=5)
        b = D.run_episode(mdp, spec, agent, 30, seed=5)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_wall_penalty_added(self):
        mdp, _ = E.build_mdp_from_grid(E.parse_grid([".G"], {(0, 1): (1.0, 1.0)},
                                                     wall_penalty=-2.0))
        spec = D.RewardSpec(np.zeros(2), 1.0)
        tr = D.run_episode(mdp, spec, lambda s, r: E.UP, 3, seed=0, start_state=0)
        np.testing.assert_allclose(tr.rewards, -2.0)
        assert tr.bumped.all()

    def test_invalid_action(self):
        mdp = chain(2)
        spec = D.RewardSpec(np.zeros(2), 1.0)
        with pytest.raises(AgentError, match="step 0"):
            D.run_episode(mdp, spec, lambda s, r: 7, 5, seed=0)

    def test_spec_size_mismatch(self):
        with pytest.raises(StructuralError):
            D.run_episode(chain(2), D.RewardSpec(np.zeros(3), 1.0), stay_agent, 5)

    def test_discounted_return(self):
        mdp = chain(1, gamma=0.5)
        spec = D.RewardSpec(np.array([1.0]), 1.0)
        tr = D.run_episode(mdp, spec, stay_agent, 3, seed=0)
        assert tr.discounted_return == pytest.approx(1 + 0.5 + 0.25)

    def test_record_vectors_and_csv(self):
        mdp = chain(3)
        spec = D.RewardSpec(np.array([0.0, 0.0, 1.0]), 0.5, threshold=0.0)
        tr = D.run_episode(mdp, spec, stay_agent, 4, seed=0, start_state=0,
                           record_vectors=True)
        assert tr.r_vectors.shape == (4, 3)
        rows = list(csv.reader(io.StringIO(tr.to_csv())))
        assert len(rows) == 5

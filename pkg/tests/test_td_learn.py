import numpy as np
import pytest
from hypothesis import given, strategies as st

from lambdarep import diminish as D
from lambdarep import env_core as E
from lambdarep import representation as R
from lambdarep import td_learn as T
from lambdarep.errors import ConfigError, UndefinedEstimateError

seeds = st.integers(0, 2 ** 32 - 1)


class TestBackup:
    def test_diagonal_uses_lambda(self):
        row = np.array([2.0, 3.0])
        out = T.lambda_backup(row, 0, 0.5, np.array([0.5, 1.0]))
        np.testing.assert_allclose(out, [1 + 0.5 * 0.5 * 2.0, 0.5 * 3.0])

    @given(seed=seeds, lam=st.floats(0, 1))
    def test_exact_table_is_stationary_on_deterministic_system(self, seed, lam):
        rng = np.random.default_rng(seed)
        succ = rng.integers(5, size=5)
        P = np.eye(5)[succ]
        phi = R.lambda_r_exact(P, 0.9, lam)
        for s in range(5):
            _, delta = T.td_update_lambda_r(phi.copy(), (s, succ[s]), 0.5, 0.9, lam)
            np.testing.assert_allclose(delta, 0.0, atol=1e-10)

    def test_action_table_shape(self):
        phi = np.zeros((3, 2, 3))
        phi, delta = T.td_update_lambda_r(phi, (0, 1, 2, 0), 1.0, 0.9, 0.5)
        np.testing.assert_allclose(phi[0, 1], [1.0, 0.0, 0.0])
        assert delta.shape == (3,)


class TestPolicyEvaluation:
    def test_td_approaches_exact(self, rng):
        mdp = E.random_mdp(rng, 4, 2, 0.7)
        pi = E.Policy.uniform(4, 2)
        exact = R.lambda_r_exact(E.policy_transition_matrix(mdp, pi), 0.7, 0.5)
        est = T.td_policy_evaluation(mdp, pi, 0.5, 400, 50, alpha=0.05, seed=0)
        assert np.max(np.abs(est - exact)) < 0.15

    def test_one_hot_features_match_tabular(self, rng):
        mdp = E.random_mdp(rng, 4, 2, 0.7)
        pi = E.Policy.uniform(4, 2)
        tab = T.td_policy_evaluation(mdp, pi, 0.5, 30, 20, seed=3)
        lf = T.lambda_f_policy_evaluation(mdp, pi, np.eye(4), 0.5, 30, 20, seed=3)
        np.testing.assert_allclose(lf.table(), tab, atol=1e-12)

    def test_features_range(self):
        with pytest.raises(ConfigError):
            T.LinearLambdaF(np.array([[1.5, 0.0]]))
        with pytest.raises(ConfigError):
            T.LinearLambdaF(np.ones(3))


class TestValueTarget:
    @given(seed=seeds, lam=st.floats(0, 1))
    def test_target_matches_reward_weighted_backup(self, seed, lam):
        rng = np.random.default_rng(seed)
        feats = np.eye(4)
        w = rng.uniform(-1, 1, 4)
        varphi = rng.uniform(0, 3, (4, 4))
        v = varphi @ w
        s, s1 = rng.integers(4, size=2)
        lam_vec = np.full(4, lam)
        target = T.lambda_value_td_target(v, varphi, w, feats, (s, s1), 0.9, lam_vec)
        backup = T.lambda_backup(varphi[s1], s, 0.9, lam_vec)
        assert target == pytest.approx(w @ backup, abs=1e-10)


class TestLambdaEstimation:
    @given(lam=st.floats(0, 1), r=st.floats(0.1, 10))
    def test_noiseless_pairs_exact(self, lam, r):
        pairs = [(r * lam ** k, r * lam ** (k + 1)) for k in range(3)]
        assert T.estimate_lambda(pairs) == pytest.approx(lam, abs=1e-9)

    def test_undefined(self):
        with pytest.raises(UndefinedEstimateError):
            T.estimate_lambda([(0.0, 0.0)])

    def test_gradient_estimator_converges(self):
        est = T.LambdaEstimator(1.0, lr=0.01)
        for _ in range(2000):
            est.update(2.0, 1.4)
        assert est.value == pytest.approx(0.7, abs=1e-6)

    def test_estimator_clipped(self):
        est = T.LambdaEstimator(0.5, lr=10.0)
        est.update(1.0, 5.0)
        assert est.value == 1.0


class TestControl:
    def test_epsilon_schedule(self):
        cfg = T.LearnerConfig(episodes=100, epsilon_start=1.0, epsilon_end=0.1,
                              anneal_fraction=0.5)
        assert cfg.epsilon(0) == pytest.approx(1.0)
        assert cfg.epsilon(50) == pytest.approx(0.1)
        assert cfg.epsilon(99) == pytest.approx(0.1)

    @pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"epsilon_end": 2.0}, {"episodes": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            T.LearnerConfig(**kw)

    def test_seeded_and_shapes(self):
        mdp = E.toy_mdp()
        spec = D.RewardSpec(np.array(E.TOY_R_BAR, float), np.array(E.TOY_LAMBDA, float))
        cfg = T.LearnerConfig(episodes=20, horizon=10, seed=4)
        a = T.q_lambda_learning(mdp, spec, cfg)
        b = T.q_lambda_learning(mdp, spec, cfg)
        np.testing.assert_array_equal(a.phi, b.phi)
        assert a.phi.shape == (3, 5, 3)
        assert a.returns.shape == (20,)
        assert np.all(a.steps <= 10)

    def test_learns_toy_preference(self):
        # with the true lambda the agent should prefer the replenishing right state
        mdp = E.toy_mdp(gamma=0.9)
        lam = np.array(E.TOY_LAMBDA, float)
        spec = D.RewardSpec(np.array(E.TOY_R_BAR, float), lam)
        res = T.q_lambda_learning(mdp, spec, T.LearnerConfig(
            lam=lam, episodes=300, horizon=20, seed=0))
        ep = D.EpisodeState.start(3, 0)
        q0 = res.phi[0] @ D.reward_vector(spec, ep)
        assert np.argmax(q0) == E.RIGHT

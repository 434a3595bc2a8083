import numpy as np
import pytest
from hypothesis import given, strategies as st

from lambdarep import diminish as D
from lambdarep import env_core as E
from lambdarep import oracle as O
from lambdarep import representation as R
from lambdarep.errors import ConfigError, UnsupportedInputError

seeds = st.integers(0, 2 ** 32 - 1)


def deterministic_mdp(seed, n=6, A=3, gamma=0.9):
    rng = np.random.default_rng(seed)
    T = np.zeros((n, A, n))
    T[np.arange(n)[:, None], np.arange(A)[None, :], rng.integers(n, size=(n, A))] = 1.0
    pi = E.random_policy(rng, n, A, deterministic=True)
    return E.TabularMDP(T, gamma), pi, rng


class TestHorizon:
    @given(gamma=st.floats(0.1, 0.99), lam=st.floats(0, 1))
    def test_truncation_below_target(self, gamma, lam):
        h = O.default_horizon(gamma, lam, target=1e-4)
        assert gamma ** (h + 1) / (1 - lam * gamma) < 1e-4
        if h > 0:
            assert gamma ** h / (1 - lam * gamma) >= 1e-4


class TestDiminishedValue:
    @given(seed=seeds, lam=st.floats(0, 1))
    def test_value_is_representation_times_reward(self, seed, lam):
        mdp, pi, rng = deterministic_mdp(seed)
        r_bar = rng.uniform(0, 1, 6)
        lam_vec = rng.uniform(0, 1, 6) * lam
        spec = D.RewardSpec(r_bar, lam_vec)
        phi = R.lambda_r_exact(E.policy_transition_matrix(mdp, pi), 0.9, lam_vec)
        for s in range(6):
            v = O.exact_diminished_value(mdp, pi, spec, s, 400)
            assert v == pytest.approx(phi[s] @ r_bar, abs=1e-12 + 0.9 ** 400 * 20)

    def test_q_first_action(self):
        mdp, pi, rng = deterministic_mdp(3)
        spec = D.RewardSpec(rng.uniform(0, 1, 6), 0.5)
        phi_sa = O.lambda_r_actions_direct(mdp.transitions, pi.probs, 0.9, spec.lam)
        for a in range(3):
            q = O.exact_diminished_q(mdp, pi, spec, 0, a, 400)
            assert q == pytest.approx(phi_sa[0, a] @ spec.r_bar, abs=1e-9)

    def test_toy_values(self):
        mdp = E.toy_mdp()
        spec = D.RewardSpec(np.array(E.TOY_R_BAR, dtype=float), np.array(E.TOY_LAMBDA, dtype=float))
        stay_left = E.Policy.deterministic([E.LEFT, E.STAY, E.LEFT], 5)
        # left pays 10 once, then nothing
        assert O.exact_diminished_value(mdp, stay_left, spec, 1, 50) == pytest.approx(10.0)

    def test_stochastic_rejected(self, rng):
        mdp = E.random_mdp(rng, 3, 2, 0.9)
        spec = D.RewardSpec(np.ones(3), 0.5)
        with pytest.raises(UnsupportedInputError):
            O.exact_diminished_value(mdp, E.Policy.uniform(3, 2), spec, 0, 10)


class TestMonteCarlo:
    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_lambda_r_within_three_se(self, rng, lam):
        mdp = E.random_mdp(rng, 5, 2, 0.8)
        pi = E.Policy.uniform(5, 2)
        exact = O.lambda_r_direct(E.policy_transition_matrix(mdp, pi), 0.8, lam)
        est = O.mc_lambda_r(mdp, pi, lam, 0, 4000, seed=2)
        tol = O.SE_MULTIPLIER * est.se + est.bias_bound
        assert np.all(np.abs(est.mean - exact[0]) <= tol + 1e-12)

    def test_functional_se(self, rng):
        mdp = E.random_mdp(rng, 4, 2, 0.8)
        est = O.mc_lambda_r(mdp, E.Policy.uniform(4, 2), 0.5, 0, 500, seed=0)
        m, se = est.functional(np.eye(4)[1])
        assert m == pytest.approx(est.mean[1])
        assert se == pytest.approx(est.se[1])

    def test_seeded(self, rng):
        mdp = E.random_mdp(rng, 4, 2, 0.8)
        a = O.mc_lambda_r(mdp, E.Policy.uniform(4, 2), 0.5, 0, 100, seed=9)
        b = O.mc_lambda_r(mdp, E.Policy.uniform(4, 2), 0.5, 0, 100, seed=9)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_unknown_scheme(self, rng):
        mdp = E.random_mdp(rng, 3, 2, 0.8)
        with pytest.raises(ConfigError):
            O.mc_replenishing_rep(mdp, E.Policy.uniform(3, 2), "pure", 0.5, 0.5, 0, 10)

    def test_growing_total_time_needs_horizon(self, rng):
        mdp = E.random_mdp(rng, 3, 2, 0.9)
        with pytest.raises(ConfigError):
            O.mc_replenishing_rep(mdp, E.Policy.uniform(3, 2), "total_time", 0.5, 1.2, 0, 10)

    def test_replenishing_bias_bound_finite(self, rng):
        mdp = E.random_mdp(rng, 3, 2, 0.8)
        est = O.mc_replenishing_rep(mdp, E.Policy.uniform(3, 2), "eligibility_trace",
                                    0.2, 0.9, 0, 10)
        assert np.isfinite(est.bias_bound)
        assert est.bias_bound < 1e-3


class TestDirect:
    def test_first_occupancy_chain(self):
        np.testing.assert_allclose(O.first_occupancy_chain(0.5, 3), [1.0, 0.5, 0.25])

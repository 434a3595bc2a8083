import json

import numpy as np
import pytest

from lambdarep import env_core as E
from lambdarep.environments import SHIPPED, load_environment, read_config
from lambdarep.errors import ConfigError, NumericError, StructuralError


class TestGridParsing:
    def test_open_grid_state_count(self):
        spec = E.parse_grid(["...", ".#.", "..G"], {(2, 2): (1.0, 0.5)})
        mdp, goals = E.build_mdp_from_grid(spec)
        assert mdp.n_states == 8
        assert mdp.n_actions == 5
        assert list(goals.values()) == [mdp.layout.state_of(2, 2)]

    def test_transitions_are_stochastic(self):
        spec = E.parse_grid(["..G", "#..", "..."], {(0, 2): (1.0, 0.5)}, noise_prob=0.3)
        mdp, _ = E.build_mdp_from_grid(spec)
        np.testing.assert_allclose(mdp.transitions.sum(axis=2), 1.0)

    def test_wall_bump_stays_put(self):
        spec = E.parse_grid([".G"], {(0, 1): (1.0, 1.0)})
        mdp, _ = E.build_mdp_from_grid(spec)
        s = mdp.layout.state_of(0, 0)
        assert mdp.transitions[s, E.UP, s] == 1.0
        assert mdp.bump_prob[s, E.UP] == 1.0
        assert mdp.bump_prob[s, E.STAY] == 0.0

    def test_noise_mixes_moves(self):
        spec = E.parse_grid(["...", "...", "..."], {}, noise_prob=0.2)
        mdp, _ = E.build_mdp_from_grid(spec)
        c = mdp.layout.state_of(1, 1)
        right = mdp.layout.state_of(1, 2)
        assert mdp.transitions[c, E.RIGHT, right] == pytest.approx(0.8 + 0.2 / 4)

    def test_coords_roundtrip(self):
        spec = E.parse_grid(["..#", "..."], {})
        mdp, _ = E.build_mdp_from_grid(spec)
        for s in range(mdp.n_states):
            assert mdp.layout.state_of(*mdp.layout.coords_of(s)) == s

    @pytest.mark.parametrize("rows,goals", [
        ([], {}),
        (["..", "."], {}),
        (["x."], {}),
        (["##"], {}),
        (["G."], {}),
        ([".."], {(0, 0): (1.0, 0.5)}),
        (["G."], {(0, 0): (1.0, 1.5)}),
        (["G."], {(3, 3): (1.0, 0.5)}),
    ])
    def test_malformed_grids_rejected(self, rows, goals):
        with pytest.raises(ConfigError):
            E.parse_grid(rows, goals)

    def test_bad_gamma_and_noise(self):
        with pytest.raises(ConfigError):
            E.parse_grid([".."], {}, gamma=1.0)
        with pytest.raises(ConfigError):
            E.parse_grid([".."], {}, noise_prob=-0.1)

    def test_config_unknown_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"grid": [".."], "colour": "red"}))
        with pytest.raises(ConfigError, match="colour"):
            E.load_grid_config(p)

    def test_config_invalid_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            E.load_grid_config(p)


class TestShippedEnvironments:
    @pytest.mark.parametrize("name", SHIPPED)
    def test_loads(self, name):
        env = load_environment(name)
        assert env.mdp.n_states > 0
        assert len(env.goal_states) >= 1
        np.testing.assert_allclose(env.mdp.start_distribution.sum(), 1.0)
        assert read_config(name)["grid"]

    def test_overrides(self):
        env = load_environment("fourrooms", noise_prob=0.2, gamma=0.5, lam=0.3)
        assert env.mdp.gamma == 0.5
        assert np.all(env.lam[env.goal_states] == 0.3)

    def test_shipped_file_name(self):
        assert load_environment("toy.json").mdp.n_states == 3

    def test_missing(self):
        with pytest.raises(ConfigError):
            load_environment("no_such_env")


class TestMDPValidation:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(NumericError):
            E.TabularMDP(np.full((2, 1, 2), 0.4), 0.9)

    def test_shape(self):
        with pytest.raises(StructuralError):
            E.TabularMDP(np.ones((2, 2)), 0.9)

    def test_gamma(self):
        with pytest.raises(ConfigError):
            E.TabularMDP(np.ones((1, 1, 1)), 1.0)

    def test_policy_checks(self):
        with pytest.raises(NumericError):
            E.Policy(np.array([[0.5, 0.6]]))
        with pytest.raises(NumericError):
            E.greedy_policy(np.array([[np.nan, 1.0]]))

    def test_greedy_lowest_index_ties(self):
        pi = E.greedy_policy(np.array([[1.0, 1.0, 0.0]]))
        assert pi.actions()[0] == 0

    def test_policy_matrix_rows(self, rng):
        mdp = E.random_mdp(rng, 4, 2, 0.9)
        pi = E.random_policy(rng, 4, 2)
        np.testing.assert_allclose(E.policy_transition_matrix(mdp, pi).sum(axis=1), 1.0)

    def test_toy_structure(self):
        mdp = E.toy_mdp()
        assert mdp.n_states == 3
        assert mdp.start_distribution[0] == 1.0
        assert mdp.is_deterministic()

"""Shipped gridworld configs and a loader that bundles MDP and rewards."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .diminish import RewardSpec
from .env_core import (GridSpec, TabularMDP, build_mdp_from_grid, grid_reward_vectors,
                       load_grid_config)
from .errors import ConfigError

SHIPPED = ("fourrooms", "tworooms", "policy_eval", "toy", "asymmetric")


@dataclass(frozen=True, eq=False)
class Environment:
    name: str
    grid: GridSpec
    mdp: TabularMDP
    goals: dict  # goal cell index -> state index
    r_bar: np.ndarray
    lam: np.ndarray
    config: dict

    @property
    def goal_states(self):
        return list(self.goals.values())

    @property
    def target_states(self):
        """States used to build base policies (goals if none configured)."""
        if self.grid.policy_targets:
            return [self.mdp.layout.state_of(r, c) for r, c in self.grid.policy_targets]
        return self.goal_states

    def reward_spec(self, lam=None, **kwargs):
        """Reward spec with goal lambdas replaced by ``lam`` when given."""
        lam_vec = self.lam.copy()
        if lam is not None:
            lam_vec[self.goal_states] = lam
        goals = np.zeros(self.mdp.n_states, dtype=bool)
        goals[self.goal_states] = True
        return RewardSpec(self.r_bar, lam_vec, goals=goals, **kwargs)

    def state(self, r, c):
        return self.mdp.layout.state_of(r, c)


def config_path(name):
    return resources.files("lambdarep") / "envs" / f"{name}.json"


def read_config(source):
    """Config dict from a shipped name, a path or a dict."""
    if isinstance(source, dict):
        return dict(source)
    if isinstance(source, str) and source in SHIPPED:
        return json.loads(config_path(source).read_text())
    path = Path(source)
    if not path.exists() and path.parent == Path(".") and path.stem in SHIPPED:
        # a bare shipped file name such as "fourrooms.json"
        return json.loads(config_path(path.stem).read_text())
    if not path.exists():
        raise ConfigError(f"environment config {source!r} not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_environment(source, noise_prob=None, gamma=None, lam=None):
    """Build an Environment; keyword overrides replace config fields."""
    cfg = read_config(source)
    if noise_prob is not None:
        cfg["noise_prob"] = noise_prob
    if gamma is not None:
        cfg["gamma"] = gamma
    grid = load_grid_config(cfg)
    mdp, goals = build_mdp_from_grid(grid)
    r_bar, lam_vec = grid_reward_vectors(grid, mdp)
    if lam is not None:
        lam_vec[list(goals.values())] = lam
    name = cfg.get("name", Path(str(source)).stem)
    return Environment(name, grid, mdp, goals, r_bar, lam_vec, cfg)

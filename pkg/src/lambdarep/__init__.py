"""Tabular toolkit for occupancy representations under diminishing rewards."""
from .compose import PolicySet, build_policy_set, gpe, gpi_action, run_gpe_gpi
from .diminish import EpisodeState, EpisodeTrace, RewardSpec, reward_at, run_episode, step
from .env_core import GridSpec, Policy, TabularMDP, build_mdp_from_grid, greedy_policy
from .environments import load_environment
from .errors import LambdaRepError
from .representation import (LambdaR, apply_g_lambda, solve_lambda_r, solve_lambda_r_actions,
                             solve_nth_occupancy)

__all__ = [
    "EpisodeState", "EpisodeTrace", "GridSpec", "LambdaR", "LambdaRepError", "Policy",
    "PolicySet", "RewardSpec", "TabularMDP", "apply_g_lambda", "build_mdp_from_grid",
    "build_policy_set", "gpe", "gpi_action", "greedy_policy", "load_environment",
    "reward_at", "run_episode", "run_gpe_gpi", "solve_lambda_r", "solve_lambda_r_actions",
    "solve_nth_occupancy", "step",
]

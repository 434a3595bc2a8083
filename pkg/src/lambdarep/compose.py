"""Policy composition over a library of lambda representations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diminish import RewardSpec, run_episode
from .env_core import Policy, TabularMDP, greedy_policy, policy_transition_matrix
from .errors import BoundViolation, NonConvergenceError, StructuralError
from .representation import solve_lambda_r_actions, successor_representation


def value_iteration(mdp: TabularMDP, reward, tol=1e-10, max_iters=100_000):
    """Optimal Q for a stationary state reward plus the wall penalty."""
    reward = np.asarray(reward, dtype=float)
    base = reward[:, None] + mdp.penalty
    q = base.copy()
    for _ in range(max_iters):
        v = q.max(axis=1)
        q_new = base + mdp.gamma * (mdp.transitions @ v)
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    raise NonConvergenceError("value iteration did not converge", float(np.max(np.abs(q_new - q))))


def optimal_policy_for(mdp: TabularMDP, reward, tol=1e-10):
    return greedy_policy(value_iteration(mdp, reward, tol))


def shortest_path_policy(mdp: TabularMDP, target):
    """Policy that walks to ``target`` and stays there, ignoring wall costs."""
    reward = np.zeros(mdp.n_states)
    reward[target] = 1.0
    free = TabularMDP(mdp.transitions, mdp.gamma, mdp.start_distribution)
    return optimal_policy_for(free, reward)


def stationary_q(mdp: TabularMDP, pi: Policy, reward_sa):
    """Exact Q of ``pi`` for a stationary reward r(s, a)."""
    reward_sa = np.asarray(reward_sa, dtype=float)
    P = policy_transition_matrix(mdp, pi)
    v = successor_representation(P, mdp.gamma) @ np.sum(pi.probs * reward_sa, axis=1)
    return reward_sa + mdp.gamma * (mdp.transitions @ v)


@dataclass
class PolicySet:
    """Base policies with their action-conditioned representations.

    ``penalty_q[j]`` is the stationary wall-penalty value of policy j, added
    to the representation-based value of the reward vector.
    """

    mdp: TabularMDP
    policies: list
    phis: np.ndarray  # (J, S, A, S)
    lam_hat: np.ndarray
    penalty_q: np.ndarray  # (J, S, A)
    names: list = field(default_factory=list)

    def __len__(self):
        return len(self.policies)


def build_policy_set(mdp: TabularMDP, policies, lam_hat, names=None, method="exact",
                     tol=1e-10):
    """Compute every policy's representation under the agent's lambda."""
    if not policies:
        raise StructuralError("policy set is empty")
    phis = np.stack([solve_lambda_r_actions(mdp, pi, lam_hat, tol=tol, method=method).phi
                     for pi in policies])
    pen = np.stack([stationary_q(mdp, pi, mdp.penalty) for pi in policies])
    lam_vec = np.broadcast_to(np.asarray(lam_hat, dtype=float), (mdp.n_states,)).copy()
    names = list(names) if names is not None else [f"pi{j}" for j in range(len(policies))]
    return PolicySet(mdp, list(policies), phis, lam_vec, pen, names)


def gpe(policy_set: PolicySet, s, r_vector, a=None):
    """Per-policy action values at ``s``: shape (J, A), or (J,) when ``a`` is set."""
    r_vector = np.asarray(r_vector, dtype=float)
    if r_vector.shape != (policy_set.mdp.n_states,):
        raise StructuralError("reward vector length does not match the MDP")
    q = policy_set.phis[:, s] @ r_vector + policy_set.penalty_q[:, s]
    return q if a is None else q[:, a]


def gpi_action(policy_set: PolicySet, s, r_vector):
    """Argmax over actions of the max over policies; lowest index wins ties."""
    q = gpe(policy_set, s, r_vector)
    return int(np.argmax(q.max(axis=0)))


def gpi_policy(policy_set: PolicySet, r_vector):
    """Stationary GPI policy for a fixed reward vector."""
    n = policy_set.mdp.n_states
    actions = [gpi_action(policy_set, s, r_vector) for s in range(n)]
    return Policy.deterministic(actions, policy_set.mdp.n_actions)


@dataclass
class GPIResult:
    returns: np.ndarray
    discounted_returns: np.ndarray
    steps: np.ndarray
    traces: list

    @staticmethod
    def _stats(x):
        se = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else 0.0
        return float(x.mean()), float(se)

    @property
    def mean(self):
        return self._stats(self.discounted_returns)[0]

    @property
    def se(self):
        return self._stats(self.discounted_returns)[1]

    @property
    def undiscounted(self):
        return self._stats(self.returns)


def run_gpe_gpi(mdp: TabularMDP, spec: RewardSpec, policy_set: PolicySet, episodes,
                horizon, seed=0, record_vectors=False):
    """Run the GPE+GPI agent, re-reading the reward vector at every step."""
    rng = np.random.default_rng(seed)

    def agent(s, r_vec):
        return gpi_action(policy_set, s, r_vec)

    traces = [run_episode(mdp, spec, agent, horizon, rng=rng, record_vectors=record_vectors)
              for _ in range(episodes)]
    return GPIResult(
        np.array([tr.undiscounted_return for tr in traces]),
        np.array([tr.discounted_return for tr in traces]),
        np.array([len(tr) for tr in traces]),
        traces,
    )


@dataclass
class BoundReport:
    """Per-(s, a) quantities of the GPI bound under a lambda mismatch."""

    q_pi: np.ndarray
    q_max: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    eps: float
    mismatch: float
    revisit: np.ndarray
    seed: int = None

    @property
    def violations(self):
        return np.argwhere(self.slack < -1e-9)

    @property
    def ok(self):
        return self.violations.size == 0


def gpi_bound_check(mdp: TabularMDP, spec: RewardSpec, policies, lambda_true, lambda_hat,
                    pairs=None, tol=1e-6, seed=None, strict=False):
    """Compare the GPI policy's value with the mismatch bound.

    Base values under ``lambda_hat`` are computed by iterative DP to ``tol``;
    their error against the exact values is the epsilon of the bound. The
    GPI policy acts greedily on those values for the initial reward vector
    and is then evaluated exactly under ``lambda_true``, as are the base
    policies on the right-hand side.
    """
    r = np.asarray(spec.r_bar, dtype=float)
    lam_t = float(lambda_true)
    lam_h = float(lambda_hat)
    approx = build_policy_set(mdp, policies, lam_h, method="iterate", tol=tol)
    exact_hat = build_policy_set(mdp, policies, lam_h, method="exact")
    q_tilde = approx.phis @ r
    eps = float(np.max(np.abs(q_tilde - exact_hat.phis @ r)))
    actions = np.argmax(q_tilde.max(axis=0), axis=1)
    pi = Policy.deterministic(actions, mdp.n_actions)
    exact_true = build_policy_set(mdp, list(policies) + [pi], lam_t, method="exact")
    q_all = exact_true.phis @ r
    q_pi, q_max = q_all[-1], q_all[:-1].max(axis=0)
    mismatch = abs(lam_t - lam_h) * float(np.max(np.abs(r)))
    revisit = mdp.gamma * (1 - lam_t) * np.broadcast_to(r[:, None], q_pi.shape) / (1 - lam_t * mdp.gamma)
    rhs = q_max - (2 * eps + mismatch + revisit) / (1 - mdp.gamma)
    slack = q_pi - rhs
    if pairs is not None:
        mask = np.zeros_like(slack, dtype=bool)
        for s, a in pairs:
            mask[s, a] = True
        slack = np.where(mask, slack, np.inf)
    report = BoundReport(q_pi, q_max, rhs, slack, eps, mismatch, revisit, seed)
    if strict and not report.ok:
        s, a = report.violations[0]
        raise BoundViolation(f"bound violated at (s={s}, a={a}), seed {seed}, "
                             f"slack {slack[s, a]:.3e}")
    return report

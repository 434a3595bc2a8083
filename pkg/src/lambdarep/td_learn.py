"""Sample-based learners for lambda representations and lambda itself."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diminish import EpisodeState, RewardSpec, reward_vector, step
from .env_core import Policy, TabularMDP
from .errors import ConfigError, UndefinedEstimateError


@dataclass(frozen=True)
class LearnerConfig:
    """Settings for the online learners.

    Exploration is epsilon-greedy with epsilon annealed linearly from
    ``epsilon_start`` to ``epsilon_end`` over the first ``anneal_fraction``
    of the episodes. With ``random_ties`` the behavior policy breaks ties
    between greedy actions at random; bootstrap targets always take the
    lowest index.
    """

    alpha: float = 0.1
    lam: object = 1.0
    episodes: int = 500
    horizon: int = 100
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    anneal_fraction: float = 0.5
    random_ties: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0,1], got {self.alpha}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0,1]")
        if self.episodes < 1 or self.horizon < 1:
            raise ConfigError("episodes and horizon must be positive")

    def epsilon(self, episode):
        span = max(1, int(round(self.anneal_fraction * self.episodes)))
        frac = min(1.0, episode / span)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def lambda_backup(next_row, s, gamma, lam):
    """Target e_s * (1 + g lam next) + g (1 - e_s) * next for a visit to ``s``."""
    target = gamma * np.asarray(next_row, dtype=float)
    lam_s = float(np.broadcast_to(lam, target.shape)[s])
    target[s] = 1.0 + gamma * lam_s * next_row[s]
    return target


def td_update_lambda_r(phi, transition, alpha, gamma, lam):
    """One TD step on a representation table, in place.

    ``phi`` is either (S, S) with ``transition = (s, s_next)`` or (S, A, S)
    with ``transition = (s, a, s_next, a_next)``. Returns ``(phi, delta)``.
    """
    if phi.ndim == 2:
        s, s_next = transition
        idx, nidx = (s,), (s_next,)
    else:
        s, a, s_next, a_next = transition
        idx, nidx = (s, a), (s_next, a_next)
    delta = lambda_backup(phi[nidx], s, gamma, lam) - phi[idx]
    phi[idx] += alpha * delta
    return phi, delta


@dataclass
class QLambdaResult:
    phi: np.ndarray
    returns: np.ndarray  # undiscounted, per episode
    discounted_returns: np.ndarray
    steps: np.ndarray


def q_lambda_learning(mdp: TabularMDP, spec: RewardSpec, config: LearnerConfig):
    """Online control with an action-conditioned representation.

    Action values are ``Phi(s, a, .) @ r_t`` with the environment's current
    reward vector. The table starts at Phi(s, a, .) = e_s.
    """
    rng = np.random.default_rng(config.seed)
    n, A = mdp.n_states, mdp.n_actions
    lam = np.broadcast_to(np.asarray(config.lam, dtype=float), (n,))
    gamma = mdp.gamma
    phi = np.zeros((n, A, n))
    phi[np.arange(n), :, np.arange(n)] = 1.0
    rets = np.zeros(config.episodes)
    drets = np.zeros(config.episodes)
    steps = np.zeros(config.episodes, dtype=int)
    for ep_i in range(config.episodes):
        eps = config.epsilon(ep_i)
        s0 = int(rng.choice(n, p=mdp.start_distribution))
        ep = EpisodeState.start(n, s0, config.horizon)
        r_vec = reward_vector(spec, ep)
        s = s0
        a = _explore(phi[s] @ r_vec, eps, rng, config.random_ties)
        done = False
        while not done:
            ep, _, done = step(mdp, spec, ep, a, rng)
            s_next = ep.current
            r_vec = reward_vector(spec, ep)
            q_next = phi[s_next] @ r_vec
            a_greedy = int(np.argmax(q_next))
            td_update_lambda_r(phi, (s, a, s_next, a_greedy), config.alpha, gamma, lam)
            s = s_next
            a = _explore(q_next, eps, rng, config.random_ties) if not done else a_greedy
        rets[ep_i] = ep.cumulative_return
        drets[ep_i] = ep.discounted_return
        steps[ep_i] = ep.t
    return QLambdaResult(phi, rets, drets, steps)


def _explore(q, eps, rng, random_ties=False):
    if rng.random() < eps:
        return int(rng.integers(q.size))
    if random_ties:
        best = np.flatnonzero(q == q.max())
        if best.size > 1:
            return int(rng.choice(best))
    return int(np.argmax(q))


def td_policy_evaluation(mdp: TabularMDP, pi: Policy, lam, episodes, horizon,
                         alpha=0.1, seed=0):
    """Tabular TD estimate of the state-conditioned representation of ``pi``."""
    rng = np.random.default_rng(seed)
    n = mdp.n_states
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    P = np.einsum("sa,sat->st", pi.probs, mdp.transitions)
    cdf = np.cumsum(P, axis=1)
    phi = np.zeros((n, n))
    for _ in range(episodes):
        s = int(rng.choice(n, p=mdp.start_distribution))
        for _ in range(horizon):
            s_next = int(min(np.searchsorted(cdf[s], rng.random(), side="right"), n - 1))
            td_update_lambda_r(phi, (s, s_next), alpha, mdp.gamma, lam)
            s = s_next
    return phi


class LinearLambdaF:
    """Linear lambda-features over bounded base features.

    ``varphi(s) = theta @ features[s]`` with ``theta`` of shape (D, D);
    rewards are ``r(s) = w @ features[s]``.
    """

    def __init__(self, features, reward_weights=None, theta=None):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            raise ConfigError("features must be an (S, D) matrix")
        if np.any(features < 0) or np.any(features > 1):
            raise ConfigError("base features must lie in [0, 1]")
        self.features = features
        d = features.shape[1]
        self.theta = np.zeros((d, d)) if theta is None else np.array(theta, dtype=float)
        self.w = None if reward_weights is None else np.asarray(reward_weights, dtype=float)

    @property
    def dim(self):
        return self.features.shape[1]

    def varphi(self, s):
        return self.theta @ self.features[s]

    def table(self):
        """varphi for every state, shape (S, D)."""
        return self.features @ self.theta.T

    def target(self, s, s_next, gamma, lam):
        f = self.features[s]
        nxt = self.varphi(s_next)
        return f * (1.0 + gamma * lam * nxt) + gamma * (1.0 - f) * nxt


def lambda_f_td_update(model: LinearLambdaF, transition, alpha, gamma, lam):
    """Semi-gradient TD step toward the lambda-feature backup, in place."""
    s, s_next = transition
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (model.dim,))
    delta = model.target(s, s_next, gamma, lam) - model.varphi(s)
    model.theta += alpha * np.outer(delta, model.features[s])
    return model


def lambda_f_policy_evaluation(mdp, pi, features, lam, episodes, horizon, alpha=0.1,
                               seed=0):
    """Train a LinearLambdaF on trajectories of ``pi``."""
    rng = np.random.default_rng(seed)
    n = mdp.n_states
    model = LinearLambdaF(features)
    P = np.einsum("sa,sat->st", pi.probs, mdp.transitions)
    cdf = np.cumsum(P, axis=1)
    for _ in range(episodes):
        s = int(rng.choice(n, p=mdp.start_distribution))
        for _ in range(horizon):
            s_next = int(min(np.searchsorted(cdf[s], rng.random(), side="right"), n - 1))
            lambda_f_td_update(model, (s, s_next), alpha, mdp.gamma, lam)
            s = s_next
    return model


def lambda_value_td_target(v, varphi, w, phi, transition, gamma, lam):
    """Value target corrected for the revisit of the current state.

    r(s) + gamma (V(s') + (lam - 1) w . (phi(s) * varphi(s'))) with
    ``r(s) = w . phi(s)``.
    """
    s, s_next = transition[0], transition[1]
    f = phi[s]
    corr = np.dot(w, (np.asarray(lam, dtype=float) - 1.0) * f * varphi[s_next])
    return float(np.dot(w, f) + gamma * (v[s_next] + corr))


def estimate_lambda(pairs):
    """Least-squares decay rate from (r_t, r_{t+1}) pairs on self-transitions."""
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    denom = float(np.sum(arr[:, 0] ** 2))
    if denom == 0.0:
        raise UndefinedEstimateError("no pair with a nonzero first reward")
    return float(np.clip(np.sum(arr[:, 0] * arr[:, 1]) / denom, 0.0, 1.0))


class LambdaEstimator:
    """Incremental gradient descent on the squared self-transition loss."""

    def __init__(self, initial=1.0, lr=0.01):
        self.value = float(initial)
        self.lr = lr

    def update(self, r_t, r_next):
        grad = -2.0 * r_t * (r_next - self.value * r_t)
        self.value = float(np.clip(self.value - self.lr * grad, 0.0, 1.0))
        return self.value

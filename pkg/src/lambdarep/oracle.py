"""Independent ground truth for representations and values.

Nothing here calls the iterative solvers. Monte-Carlo estimates simulate
actions and transitions directly. Deterministic systems are enumerated along
their single trajectory; ``lambda_r_direct`` solves one linear system per
column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env_core import Policy, TabularMDP
from .errors import ConfigError, UnsupportedInputError

SE_MULTIPLIER = 3.0


@dataclass
class MCEstimate:
    """Monte-Carlo mean with per-entry standard errors.

    ``samples`` holds one row per rollout so that any linear functional of
    the estimate can be given its own standard error.
    """

    mean: np.ndarray
    se: np.ndarray
    samples: np.ndarray
    horizon: int
    bias_bound: float

    def functional(self, w):
        """Mean and standard error of ``samples @ w``."""
        vals = self.samples @ np.asarray(w, dtype=float)
        n = vals.size
        se = vals.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
        return float(vals.mean()), float(se)


def default_horizon(gamma, lam, target=1e-6):
    """Smallest H with gamma^(H+1) / (1 - lambda gamma) < target."""
    lam_max = float(np.max(lam))
    if gamma == 0:
        return 0
    scale = 1.0 / (1.0 - lam_max * gamma)
    h = max(0, math.ceil(math.log(target / scale) / math.log(gamma)) - 1)
    while gamma ** (h + 1) * scale >= target:
        h += 1
    return h


def _sample_rows(cdf_rows, rng):
    u = rng.random(cdf_rows.shape[0])
    idx = (cdf_rows < u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def _rollouts(mdp, pi, s, n_rollouts, horizon, rng):
    """Yield (k, states) for k = 0..horizon over parallel rollouts."""
    pi_cdf = np.cumsum(pi.probs, axis=1)
    t_cdf = np.cumsum(mdp.transitions, axis=2)
    states = np.full(n_rollouts, int(s))
    for k in range(horizon + 1):
        yield k, states
        actions = _sample_rows(pi_cdf[states], rng)
        states = _sample_rows(t_cdf[states, actions], rng)


def _estimate(samples, horizon, bias):
    n = samples.shape[0]
    se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(samples.shape[1])
    return MCEstimate(samples.mean(axis=0), se, samples, horizon, bias)


def mc_lambda_r(mdp: TabularMDP, pi: Policy, lam, s, n_rollouts, horizon=None, seed=0):
    """Row Phi(s, .) estimated by simulating the discounted diminished count."""
    n = mdp.n_states
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    horizon = default_horizon(mdp.gamma, lam) if horizon is None else horizon
    rng = np.random.default_rng(seed)
    counts = np.zeros((n_rollouts, n), dtype=int)
    samples = np.zeros((n_rollouts, n))
    rows = np.arange(n_rollouts)
    for k, states in _rollouts(mdp, pi, s, n_rollouts, horizon, rng):
        c = counts[rows, states]
        weight = np.where(c == 0, 1.0, lam[states] ** c)
        samples[rows, states] += weight * mdp.gamma ** k
        counts[rows, states] += 1
    bias = mdp.gamma ** (horizon + 1) / (1.0 - float(lam.max()) * mdp.gamma)
    return _estimate(samples, horizon, bias)


def mc_replenishing_rep(mdp: TabularMDP, pi: Policy, scheme, lambda_d, lambda_r, s,
                        n_rollouts, horizon=None, seed=0):
    """Row of a replenishing-scheme representation estimated by simulation.

    ``eligibility_trace`` weights an occupancy of s' at step k by
    1 - (1 - lambda_d) sum_{j<=k} lambda_r^(k-j) 1(s_j = s'); ``total_time``
    weights it by lambda_d^n lambda_r^(k-n) with n prior visits to s'.
    """
    if scheme not in ("eligibility_trace", "total_time"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    n = mdp.n_states
    g = mdp.gamma
    if horizon is None:
        if scheme == "total_time":
            rate = g * max(lambda_d, lambda_r)
            if rate >= 1:
                raise ConfigError("total-time weights grow without bound; pass horizon")
            horizon = default_horizon(rate, 0.0)
        else:
            horizon = default_horizon(g, 1.0)
    rng = np.random.default_rng(seed)
    rows = np.arange(n_rollouts)
    samples = np.zeros((n_rollouts, n))
    trace = np.zeros((n_rollouts, n))
    counts = np.zeros((n_rollouts, n), dtype=int)
    for k, states in _rollouts(mdp, pi, s, n_rollouts, horizon, rng):
        if scheme == "eligibility_trace":
            trace[rows, states] += 1.0
            weight = 1.0 - (1.0 - lambda_d) * trace
            samples[rows, states] += g ** k * weight[rows, states]
            trace *= lambda_r
        else:
            c = counts[rows, states]
            weight = lambda_d ** c * lambda_r ** (k - c)
            samples[rows, states] += g ** k * weight
            counts[rows, states] += 1
    return _estimate(samples, horizon, _replenishing_tail(scheme, g, lambda_d, lambda_r, horizon))


def _replenishing_tail(scheme, gamma, lambda_d, lambda_r, horizon):
    """Bound on the discounted weight mass dropped after step ``horizon``."""
    if scheme == "total_time":
        # lambda_d^c lambda_r^(k-c) <= max(lambda_d, lambda_r)^k
        rate = gamma * max(lambda_d, lambda_r, 1e-300)
        return rate ** (horizon + 1) / (1.0 - rate)
    # the trace at step k is at most min(k + 1, 1 / (1 - lambda_r))
    k = np.arange(horizon + 1, horizon + 1 + 100_000, dtype=float)
    cap = k + 1 if lambda_r >= 1 else np.minimum(k + 1, 1.0 / (1.0 - lambda_r))
    return float(np.sum(gamma ** k * np.maximum(1.0, np.abs(1.0 - (1.0 - lambda_d) * cap))))


def mc_lambda_set(mdp: TabularMDP, pi: Policy, s, X, lam, n_rollouts, horizon=None, seed=0):
    """Set-indexed lambda operator value from ``s`` for the state set ``X``."""
    horizon = default_horizon(mdp.gamma, lam) if horizon is None else horizon
    members = np.zeros(mdp.n_states, dtype=bool)
    members[list(X)] = True
    rng = np.random.default_rng(seed)
    count = np.zeros(n_rollouts, dtype=int)
    total = np.zeros(n_rollouts)
    for k, states in _rollouts(mdp, pi, s, n_rollouts, horizon, rng):
        hit = members[states]
        total += np.where(hit, np.where(count == 0, 1.0, lam ** count) * mdp.gamma ** k, 0.0)
        count += hit
    return _estimate(total[:, None], horizon, mdp.gamma ** (horizon + 1) / (1 - lam * mdp.gamma))


def _require_deterministic(mdp, pi):
    if not (mdp.is_deterministic() and pi.is_deterministic()):
        raise UnsupportedInputError("exact enumeration needs deterministic dynamics "
                                    "and policy")


def _trajectory_value(mdp, first_action, pi_actions, r_bar, lam, s, horizon):
    n = np.zeros(mdp.n_states, dtype=int)
    value = 0.0
    state = int(s)
    for k in range(horizon):
        c = n[state]
        value += mdp.gamma ** k * (1.0 if c == 0 else lam[state] ** c) * r_bar[state]
        n[state] += 1
        a = first_action if (k == 0 and first_action is not None) else pi_actions[state]
        state = int(np.argmax(mdp.transitions[state, a]))
    return value


def exact_diminished_value(mdp: TabularMDP, pi: Policy, spec, s, horizon):
    """Discounted diminished return over the first ``horizon`` occupied steps.

    Steps are k = 0 .. horizon-1 with the reward of step k weighted by
    gamma^k. Only state rewards are counted; wall penalties are excluded.
    """
    _require_deterministic(mdp, pi)
    return _trajectory_value(mdp, None, pi.actions(), spec.r_bar, spec.lam, s, horizon)


def exact_diminished_q(mdp: TabularMDP, pi: Policy, spec, s, a, horizon):
    """As ``exact_diminished_value`` but with the first action fixed to ``a``."""
    _require_deterministic(mdp, pi)
    return _trajectory_value(mdp, int(a), pi.actions(), spec.r_bar, spec.lam, s, horizon)


CLOSED_FORMS = {
    "self_loop": lambda g, l: 1.0 / (1.0 - l * g),
    "two_cycle_diag": lambda g, l: 1.0 / (1.0 - l * g * g),
    "two_cycle_off": lambda g, l: g / (1.0 - l * g * g),
    "one_step_reach": lambda g, l: g / (1.0 - l * g),
}


def closed_form_library(case, gamma, lam):
    try:
        return CLOSED_FORMS[case](gamma, lam)
    except KeyError:
        raise ConfigError(f"unknown closed-form case {case!r}; "
                          f"expected one of {sorted(CLOSED_FORMS)}") from None


def lambda_r_direct(P, gamma, lam):
    """Exact representation by one linear solve per column.

    Column s' satisfies (I - gamma D P) x = e_{s'} with D the identity except
    D[s', s'] = lambda(s').
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    out = np.empty((n, n))
    eye = np.eye(n)
    for j in range(n):
        d = np.ones(n)
        d[j] = lam[j]
        out[:, j] = np.linalg.solve(eye - gamma * d[:, None] * P, eye[:, j])
    return out


def lambda_r_actions_direct(T, pi_probs, gamma, lam):
    """Action-conditioned representation from the exact state-conditioned one."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    P = np.einsum("sa,sat->st", pi_probs, T)
    phi = lambda_r_direct(P, gamma, lam)
    nxt = np.einsum("sau,ut->sat", T, phi)
    out = gamma * nxt
    idx = np.arange(n)
    out[idx, :, idx] = 1.0 + gamma * lam[:, None] * nxt[idx, :, idx]
    return out


def first_occupancy_chain(gamma, length):
    """First-occupancy row from the head of a deterministic chain s0 -> ... -> s_end."""
    return np.array([gamma ** i for i in range(length)])

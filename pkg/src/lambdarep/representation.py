"""Exact dynamic programming for the lambda representation and its relatives.

All solvers run synchronous sweeps of a Bellman-style backup until the
max-entry residual falls below ``tol``. A state-dependent lambda scales the
column of the re-visited state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env_core import Policy, TabularMDP, policy_transition_matrix
from .errors import (ConfigError, NonConvergenceError, StructuralError,
                     UnsupportedInputError)

DEFAULT_TOL = 5e-2
DEFAULT_MAX_ITERS = 100_000


def _lambda_vector(lam, n):
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,)).astype(float)
    if np.any(lam < 0) or np.any(lam > 1):
        raise ConfigError(f"lambda values must lie in [0,1], got {lam}")
    return lam


def _check_square(P, phi=None):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise StructuralError(f"P must be square, got shape {P.shape}")
    if phi is not None and np.shape(phi) != P.shape:
        raise StructuralError(f"phi shape {np.shape(phi)} does not match P {P.shape}")
    return P


@dataclass
class LambdaR:
    """Solved representation with its iteration log.

    ``phi`` is (S, S) for state-conditioned and (S, A, S) for
    action-conditioned representations.
    """

    phi: np.ndarray
    lam: np.ndarray
    gamma: float
    residuals: list = field(default_factory=list)
    iterates: list = None
    clamped: bool = False

    @property
    def iterations(self):
        return len(self.residuals)

    def values(self, r):
        """Value r^T Phi(s, .) per state (or per state-action)."""
        return self.phi @ np.asarray(r, dtype=float)


def apply_g_lambda(phi, P, gamma, lam):
    """One synchronous backup of the lambda-representation operator."""
    P = _check_square(P, phi)
    n = P.shape[0]
    lam = _lambda_vector(lam, n)
    pphi = P @ np.asarray(phi, dtype=float)
    out = gamma * pphi
    idx = np.arange(n)
    out[idx, idx] = 1.0 + gamma * lam * pphi[idx, idx]
    return out


def convergence_bound(k, gamma, lam):
    """Envelope gamma^(k+1) / (1 - lambda gamma) on the k-th iterate error.

    For state-dependent lambda the largest entry is used, since the envelope
    grows with lambda.
    """
    lam_max = float(np.max(lam))
    return gamma ** (k + 1) / (1.0 - lam_max * gamma)


def max_entry_bound(gamma, lam, n):
    """Entrywise upper bound on any lambda representation."""
    lam = _lambda_vector(lam, n)
    bound = np.tile(gamma / (1.0 - lam * gamma), (n, 1))
    idx = np.arange(n)
    bound[idx, idx] = 1.0 / (1.0 - lam * gamma)
    return bound


def _fixed_point(backup, x0, tol, max_iters, keep_iterates, what, clamp=None):
    if tol <= 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    x = x0
    residuals = []
    iterates = [x0.copy()] if keep_iterates else None
    clamped = False
    for _ in range(max_iters):
        nxt = backup(x)
        if clamp is not None:
            clipped = np.clip(nxt, 0.0, clamp)
            clamped |= bool(np.any(clipped != nxt))
            nxt = clipped
        res = float(np.max(np.abs(nxt - x))) if x.size else 0.0
        residuals.append(res)
        x = nxt
        if keep_iterates:
            iterates.append(x.copy())
        if res < tol:
            return x, residuals, iterates, clamped
    raise NonConvergenceError(f"{what} did not converge in {max_iters} sweeps",
                              residuals[-1] if residuals else float("nan"))


def solve_lambda_r_matrix(P, gamma, lam, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS,
                          init="complement", keep_iterates=False):
    """Iterate the operator from (1 - lambda) I (or zeros) on a given P."""
    P = _check_square(P)
    n = P.shape[0]
    lam = _lambda_vector(lam, n)
    if init == "complement":
        x0 = np.diag(1.0 - lam)
    elif init == "zero":
        x0 = np.zeros((n, n))
    else:
        raise ConfigError(f"unknown init {init!r}")
    phi, res, its, _ = _fixed_point(lambda x: apply_g_lambda(x, P, gamma, lam), x0,
                                    tol, max_iters, keep_iterates, "lambda representation")
    return LambdaR(phi, lam, gamma, res, its)


def solve_lambda_r(mdp: TabularMDP, pi: Policy, lam, tol=DEFAULT_TOL,
                   max_iters=DEFAULT_MAX_ITERS, init="complement", keep_iterates=False):
    """State-conditioned lambda representation of ``pi`` in ``mdp``."""
    P = policy_transition_matrix(mdp, pi)
    return solve_lambda_r_matrix(P, mdp.gamma, lam, tol, max_iters, init, keep_iterates)


def _action_backup(T, pi_probs, gamma, lam):
    n = T.shape[0]
    idx = np.arange(n)

    A = T.shape[1]
    T_flat = T.reshape(n * A, n)

    def backup(x):
        phi_s = np.einsum("sa,sat->st", pi_probs, x)  # E_{a'~pi} Phi(s', a', .)
        nxt = (T_flat @ phi_s).reshape(n, A, n)
        out = gamma * nxt
        out[idx, :, idx] = 1.0 + gamma * lam[:, None] * nxt[idx, :, idx]
        return out

    return backup


def lambda_r_exact(P, gamma, lam):
    """Closed-form representation from the successor representation M.

    Column s' is M(., s') / (1 + (1 - lambda(s')) (M(s', s') - 1)), a rank-one
    correction of the stationary occupancy.
    """
    P = _check_square(P)
    lam = _lambda_vector(lam, P.shape[0])
    M = successor_representation(P, gamma)
    return M / (1.0 + (1.0 - lam) * (np.diag(M) - 1.0))[None, :]


def solve_lambda_r_actions(mdp: TabularMDP, pi: Policy, lam, tol=DEFAULT_TOL,
                           max_iters=DEFAULT_MAX_ITERS, method="iterate"):
    """Action-conditioned representation Phi(s, a, s'), shape (S, A, S).

    ``method="exact"`` backs up the closed-form state representation once
    instead of iterating on the full tensor.
    """
    if pi.probs.shape != mdp.transitions.shape[:2]:
        raise StructuralError("policy does not match the MDP")
    n, A = mdp.n_states, mdp.n_actions
    lam = _lambda_vector(lam, n)
    backup = _action_backup(mdp.transitions, pi.probs, mdp.gamma, lam)
    if method == "exact":
        phi_s = lambda_r_exact(policy_transition_matrix(mdp, pi), mdp.gamma, lam)
        x = np.broadcast_to(phi_s[:, None, :], (n, A, n))
        return LambdaR(backup(x), lam, mdp.gamma, [])
    if method != "iterate":
        raise ConfigError(f"unknown method {method!r}")
    x0 = np.zeros((n, A, n))
    phi, res, _, _ = _fixed_point(backup, x0, tol, max_iters, False,
                                  "action-conditioned representation")
    return LambdaR(phi, lam, mdp.gamma, res)


def successor_representation(P, gamma):
    P = _check_square(P)
    return np.linalg.inv(np.eye(P.shape[0]) - gamma * P)


def solve_nth_occupancy(mdp: TabularMDP, pi: Policy, N, tol=DEFAULT_TOL,
                        max_iters=DEFAULT_MAX_ITERS):
    """Representations crediting only the first 1..N visits.

    Returns an array of shape (N + 1, S, S) whose entry 0 is the zero matrix
    and entry 1 the first-occupancy representation.
    """
    if N < 0:
        raise ConfigError(f"N must be nonnegative, got {N}")
    P = policy_transition_matrix(mdp, pi)
    return _nth_occupancy(P, mdp.gamma, N, tol, max_iters)


def _nth_occupancy(P, gamma, N, tol, max_iters):
    n = P.shape[0]
    idx = np.arange(n)
    stack = np.zeros((N + 1, n, n))
    prev = np.zeros((n, n))
    for k in range(1, N + 1):
        diag = 1.0 + gamma * (P @ prev)[idx, idx]

        def backup(x, diag=diag):
            out = gamma * (P @ x)
            out[idx, idx] = diag
            return out

        cur, _, _, _ = _fixed_point(backup, prev.copy(), tol, max_iters, False,
                                    f"occupancy representation N={k}")
        stack[k] = cur
        prev = cur
    return stack


def solve_eligibility_trace_rep(mdp: TabularMDP, pi: Policy, lambda_d, lambda_r,
                                tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Representation under eligibility-trace replenishment.

    The diagonal correction needs the successor representation with discount
    gamma * lambda_r, which is computed exactly first.
    """
    for name, v in (("lambda_d", lambda_d), ("lambda_r", lambda_r)):
        if not 0 <= v <= 1:
            raise ConfigError(f"{name} must lie in [0,1], got {v}")
    P = policy_transition_matrix(mdp, pi)
    gamma = mdp.gamma
    n = P.shape[0]
    idx = np.arange(n)
    M = successor_representation(P, gamma * lambda_r)
    diag = lambda_d - gamma * lambda_r * (1.0 - lambda_d) * (P @ M)[idx, idx]

    def backup(x):
        out = gamma * (P @ x)
        out[idx, idx] += diag
        return out

    x, res, _, _ = _fixed_point(backup, np.zeros((n, n)), tol, max_iters, False,
                                "eligibility-trace representation")
    return LambdaR(x, np.full(n, lambda_d), gamma, res)


def solve_total_time_rep(mdp: TabularMDP, pi: Policy, lambda_d, lambda_r, cap,
                         tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Representation under total-time replenishment, clamped to [0, cap].

    The recursion need not be contractive when ``gamma * lambda_r`` is large;
    entries are clamped every sweep and ``clamped`` reports whether the cap
    was ever hit.
    """
    if cap <= 0:
        raise ConfigError(f"cap must be positive, got {cap}")
    if not 0 <= lambda_d <= 1 or lambda_r < 0:
        raise ConfigError("lambda_d must lie in [0,1] and lambda_r be nonnegative")
    P = policy_transition_matrix(mdp, pi)
    gamma = mdp.gamma
    n = P.shape[0]
    W = np.full((n, n), lambda_r, dtype=float)
    np.fill_diagonal(W, lambda_d)
    eye = np.eye(n)

    def backup(x):
        return eye + gamma * W * (P @ x)

    x, res, _, clamped = _fixed_point(backup, np.zeros((n, n)), tol, max_iters, False,
                                      "total-time representation", clamp=cap)
    return LambdaR(x, np.full(n, lambda_d), gamma, res, clamped=clamped)


def _check_density(mu, n, name):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,):
        raise StructuralError(f"{name} must have length {n}")
    if np.any(mu <= 0):
        raise ConfigError(f"{name} must be strictly positive")
    if abs(mu.sum() - 1.0) > 1e-9:
        raise ConfigError(f"{name} must sum to 1")
    return mu


def lambda_o_bellman_loss(varphi, P, gamma, lam, mu, rho, target=None):
    """Discrete Bellman loss for a density-form representation.

    ``varphi(s, s')`` is a density against ``mu``; the representation itself
    is ``varphi * mu[None, :]``. ``target`` is the bootstrap matrix and
    defaults to ``varphi``. Expectations over next states are exact.
    """
    P = _check_square(P, varphi)
    n = P.shape[0]
    varphi = np.asarray(varphi, dtype=float)
    mu = _check_density(mu, n, "mu")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (n,):
        raise StructuralError(f"rho must have length {n}")
    lam = _lambda_vector(lam, n)
    target = varphi if target is None else np.asarray(target, dtype=float)
    loss = sm_bellman_loss(varphi, P, gamma, mu, rho, target)
    idx = np.arange(n)
    p_target_diag = (P @ target)[idx, idx]
    loss += 2.0 * gamma * np.sum(rho * (1.0 - lam) * mu * varphi[idx, idx] * p_target_diag)
    return float(loss)


def sm_bellman_loss(varphi, P, gamma, mu, rho, target=None):
    """Stationary (successor measure) discrete Bellman loss."""
    P = _check_square(P, varphi)
    n = P.shape[0]
    varphi = np.asarray(varphi, dtype=float)
    target = varphi if target is None else np.asarray(target, dtype=float)
    # E_{s1}(x - g y(s1))^2 = x^2 - 2 g x (P y) + g^2 (P y^2)
    sq = varphi ** 2 - 2 * gamma * varphi * (P @ target) + gamma ** 2 * (P @ target ** 2)
    idx = np.arange(n)
    return float(np.sum(rho[:, None] * mu[None, :] * sq) - 2.0 * np.sum(rho * varphi[idx, idx]))


def density_from_representation(phi, mu):
    return np.asarray(phi, dtype=float) / np.asarray(mu, dtype=float)[None, :]


def representation_from_density(varphi, mu):
    return np.asarray(varphi, dtype=float) * np.asarray(mu, dtype=float)[None, :]


def deterministic_successors(mdp: TabularMDP, pi: Policy):
    """Successor state per state for a deterministic system."""
    if not (mdp.is_deterministic() and pi.is_deterministic()):
        raise UnsupportedInputError("exact trajectory evaluation needs deterministic "
                                    "dynamics and policy")
    P = policy_transition_matrix(mdp, pi)
    return np.argmax(P, axis=1)


def lambda_set_operator(mdp: TabularMDP, pi: Policy, s, X, lam, horizon):
    """Set-indexed lambda operator along the unique trajectory from ``s``.

    Each visit to any state of ``X`` counts toward the shared visit count.
    Returns ``(value, tail_bound)`` where ``tail_bound`` bounds the truncated
    remainder.
    """
    succ = deterministic_successors(mdp, pi)
    members = np.zeros(mdp.n_states, dtype=bool)
    members[list(X)] = True
    gamma = mdp.gamma
    value, count, state = 0.0, 0, int(s)
    for k in range(horizon + 1):
        if members[state]:
            value += (lam ** count if count else 1.0) * gamma ** k
            count += 1
        state = int(succ[state])
    return value, gamma ** (horizon + 1) / (1.0 - gamma)

"""Foraging analytics: patch-leaving rules and lambda-learning agents."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compose import build_policy_set, gpi_action, shortest_path_policy
from .diminish import EpisodeTrace, RewardSpec, run_episode
from .errors import UndefinedEstimateError
from .td_learn import LambdaEstimator


@dataclass
class Patch:
    state: int
    enter_t: int
    leave_t: int  # exclusive: first step spent elsewhere, or trace end
    mvt_leave_t: int
    discounted_mvt_leave_t: int


@dataclass
class PatchReport:
    patches: list
    R: float
    T: float
    running: np.ndarray = field(repr=False, default=None)

    def leave_differences(self, discounted=False):
        key = "discounted_mvt_leave_t" if discounted else "mvt_leave_t"
        return np.array([p.leave_t - getattr(p, key) for p in self.patches], dtype=float)


def patch_segments(trace: EpisodeTrace, goals):
    """Maximal runs of consecutive steps at the same rewarded state."""
    goals = np.asarray(goals, dtype=bool)
    segments = []
    i, n = 0, len(trace)
    while i < n:
        s = int(trace.states[i])
        j = i + 1
        while j < n and trace.states[j] == s:
            j += 1
        if goals[s]:
            segments.append((s, i, j))
        i = j
    return segments


def _first_fire(lhs, rhs, start, end):
    for t in range(start, end):
        if lhs[t] < rhs[t]:
            return t + 1
    return end


def mvt_leave_times(trace: EpisodeTrace, spec: RewardSpec, R, T, gamma=1.0,
                    R_discounted=None):
    """Leave times predicted by the marginal value rule for every patch.

    At step t the rule fires when ``lam * r_t < (R - R_t) / T`` where ``R_t``
    is the reward collected up to and including t. The discounted variant
    weights each reward by ``gamma^t`` and compares against
    ``R_discounted`` (defaults to ``R``).
    """
    if len(trace) == 0:
        raise UndefinedEstimateError("empty trace")
    r = trace.state_rewards
    lam = spec.lam[trace.states]
    running = np.cumsum(trace.rewards)
    disc = gamma ** trace.t.astype(float)
    running_d = np.cumsum(disc * trace.rewards)
    Rd = R if R_discounted is None else R_discounted
    plain = (lam * r, (R - running) / T)
    weighted = (lam * r * disc * gamma, (Rd - running_d) / T)
    patches = []
    for s, i, j in patch_segments(trace, spec.goals):
        patches.append(Patch(s, i, j, _first_fire(*plain, i, j),
                             _first_fire(*weighted, i, j)))
    return PatchReport(patches, float(R), float(T), running)


@dataclass
class MVTSummary:
    environment: str
    mean_diff: float
    se_diff: float
    mean_diff_discounted: float
    se_diff_discounted: float
    rows: list


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else 0.0
    return float(x.mean()), float(se)


def agent_vs_mvt(traces_by_seed, spec: RewardSpec, gamma=0.99, environment="env",
                 calibration=None):
    """Signed agent-minus-MVT leave times across seeds.

    ``traces_by_seed`` maps seed to a list of traces. ``R`` and ``T`` are
    the mean undiscounted return and mean episode length over the
    ``calibration`` traces (all traces when omitted); the discounted
    comparison uses the mean discounted return at ``gamma``.
    """
    if len(traces_by_seed) < 3:
        raise UndefinedEstimateError("need traces from at least 3 seeds")
    calib = calibration or [tr for trs in traces_by_seed.values() for tr in trs]
    R = float(np.mean([tr.undiscounted_return for tr in calib]))
    Rd = float(np.mean([np.sum(gamma ** tr.t * tr.rewards) for tr in calib]))
    T = float(np.mean([len(tr) for tr in calib]))
    rows, plain, disc = [], [], []
    for seed, trs in traces_by_seed.items():
        for tr in trs:
            rep = mvt_leave_times(tr, spec, R, T, gamma=gamma, R_discounted=Rd)
            d0, d1 = rep.leave_differences(False), rep.leave_differences(True)
            for k, (a, b) in enumerate(zip(d0, d1)):
                rows.append((environment, seed, k, float(b), float(a)))
            plain.extend(d0)
            disc.extend(d1)
    m, se = _mean_se(plain)
    md, sed = _mean_se(disc)
    return MVTSummary(environment, m, se, md, sed, rows)


@dataclass
class LambdaLearningRun:
    lambda_hat: np.ndarray  # value at the start of each episode, plus final
    returns: np.ndarray
    discounted_returns: np.ndarray
    traces: list


def self_transition_pairs(trace: EpisodeTrace):
    """Consecutive state rewards (r_t, r_{t+1}) where s_t == s_{t+1}."""
    same = trace.states[1:] == trace.states[:-1]
    r = trace.state_rewards
    return np.column_stack([r[:-1][same], r[1:][same]])


def learn_lambda_gpi(mdp, spec: RewardSpec, policies, episodes, horizon, seed=0,
                     initial=1.0, lr=0.002, learn=True):
    """GPE+GPI forager that refines its lambda estimate between episodes.

    The estimate is updated by gradient steps on every self-transition reward
    pair seen; the policy library is recomputed with the new estimate at the
    start of every episode. With ``learn=False`` the estimate stays fixed.
    """
    rng = np.random.default_rng(seed)
    est = LambdaEstimator(initial, lr)
    goal_states = np.flatnonzero(spec.goals)
    lam_hats, rets, drets, traces = [], [], [], []
    for _ in range(episodes):
        lam_vec = np.ones(mdp.n_states)
        lam_vec[goal_states] = est.value
        lam_hats.append(est.value)
        pset = build_policy_set(mdp, policies, lam_vec)
        trace = run_episode(mdp, spec, lambda s, r: gpi_action(pset, s, r), horizon, rng=rng)
        if learn:
            for r_t, r_next in self_transition_pairs(trace):
                if r_t != 0.0:
                    est.update(r_t, r_next)
        rets.append(trace.undiscounted_return)
        drets.append(trace.discounted_return)
        traces.append(trace)
    lam_hats.append(est.value)
    return LambdaLearningRun(np.array(lam_hats), np.array(rets), np.array(drets), traces)


def base_policies(env):
    return [shortest_path_policy(env.mdp, t) for t in env.target_states]

"""Episode engine for diminishing and replenishing rewards.

A state's reward is granted whenever the agent occupies it, including the
start state at t=0, and it is computed from visits strictly before the
current step. Wall bumps pay the MDP's stationary wall penalty on top.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .env_core import TabularMDP
from .errors import AgentError, ConfigError, EpisodeStateError, StructuralError

PURE = "pure_diminish"
TIME_ELAPSED = "time_elapsed"
ELIGIBILITY = "eligibility_trace"
TOTAL_TIME = "total_time"
SCHEMES = (PURE, TIME_ELAPSED, ELIGIBILITY, TOTAL_TIME)


def _pow(base, exponent):
    """Elementwise power with 0**0 == 1."""
    base = np.asarray(base, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(base, exponent)
    return np.where(exponent == 0, 1.0, out)


@dataclass(frozen=True, eq=False)
class RewardSpec:
    """Initial rewards, per-state decay rates and a replenishment scheme.

    Args:
        r_bar: reward at the first visit of each state.
        lam: decay rate per state, used by ``pure_diminish`` and
            ``time_elapsed``.
        scheme: one of ``SCHEMES``.
        lambda_d, lambda_r: depletion and replenishment rates for the
            eligibility-trace and total-time schemes.
        rate_scale: time-elapsed exponent is ``n / (rate_scale * m)``.
        cap: bound on total-time rewards, defaults to ``10 * max|r_bar|``.
        threshold: episodes end once every goal reward drops below it.
        goals: boolean mask of goal states, defaults to ``r_bar > 0``.
    """

    r_bar: np.ndarray
    lam: np.ndarray
    scheme: str = PURE
    lambda_d: float = 1.0
    lambda_r: float = 1.0
    rate_scale: float = 0.1
    cap: float = None
    threshold: float = 0.1
    goals: np.ndarray = None

    def __post_init__(self):
        r_bar = np.asarray(self.r_bar, dtype=float).ravel()
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), r_bar.shape).copy()
        if np.any(lam < 0) or np.any(lam > 1):
            raise ConfigError(f"lambda values must lie in [0,1], got {lam}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        for name in ("lambda_d", "lambda_r"):
            v = getattr(self, name)
            if v < 0 or (name == "lambda_d" and v > 1):
                raise ConfigError(f"{name} out of range: {v}")
        if self.scheme == ELIGIBILITY and self.lambda_r > 1:
            raise ConfigError(f"lambda_r must lie in [0,1], got {self.lambda_r}")
        if self.rate_scale <= 0:
            raise ConfigError("rate_scale must be positive")
        goals = r_bar > 0 if self.goals is None else np.asarray(self.goals, dtype=bool)
        if goals.shape != r_bar.shape:
            raise StructuralError("goals mask must match r_bar")
        cap = self.cap
        if cap is None:
            cap = 10.0 * float(np.max(np.abs(r_bar))) if r_bar.size else 0.0
        for name, val in (("r_bar", r_bar), ("lam", lam), ("goals", goals)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "cap", float(cap))

    @property
    def n_states(self):
        return self.r_bar.size

    @property
    def uses_threshold(self):
        """Threshold termination applies only to pure diminishing goals."""
        return self.scheme == PURE and bool(np.any(self.lam[self.goals] < 1))


@dataclass(frozen=True, eq=False)
class EpisodeState:
    t: int
    current: int
    visit_counts: np.ndarray
    last_visit_time: np.ndarray
    trace: np.ndarray  # sum_{j<t} lambda_r^(t-j) 1(s_j = s)
    cumulative_return: float = 0.0
    discounted_return: float = 0.0
    horizon: int = None
    terminated: bool = False
    last_state_reward: float = 0.0
    last_bumped: bool = False

    @classmethod
    def start(cls, n_states, state, horizon=None):
        return cls(
            t=0,
            current=int(state),
            visit_counts=np.zeros(n_states, dtype=int),
            last_visit_time=np.full(n_states, -1, dtype=int),
            trace=np.zeros(n_states),
            horizon=horizon,
        )


def reward_vector(spec: RewardSpec, episode: EpisodeState) -> np.ndarray:
    """Reward each state would pay if occupied at the episode's current time."""
    n = episode.visit_counts
    r_bar = spec.r_bar
    if spec.scheme == PURE:
        return _pow(spec.lam, n) * r_bar
    if spec.scheme == TIME_ELAPSED:
        m = episode.t - episode.last_visit_time
        exponent = np.where(n > 0, n / (spec.rate_scale * np.maximum(m, 1)), 0.0)
        return _pow(spec.lam, exponent) * r_bar
    if spec.scheme == ELIGIBILITY:
        return (1.0 - (1.0 - spec.lambda_d) * episode.trace) * r_bar
    # total time
    with np.errstate(over="ignore", divide="ignore"):
        vals = (_pow(spec.lambda_d, n) * _pow(spec.lambda_r, n - episode.t)) * r_bar
    vals = np.nan_to_num(vals, nan=0.0, posinf=spec.cap, neginf=-spec.cap)
    return np.clip(vals, -spec.cap, spec.cap)


def reward_at(spec: RewardSpec, state, episode: EpisodeState) -> float:
    return float(reward_vector(spec, episode)[state])


def _advance_counts(spec, episode, s):
    counts = episode.visit_counts.copy()
    counts[s] += 1
    last = episode.last_visit_time.copy()
    last[s] = episode.t
    onehot = np.zeros_like(episode.trace)
    onehot[s] = 1.0
    trace = spec.lambda_r * (episode.trace + onehot)
    return counts, last, trace


def step(mdp: TabularMDP, spec: RewardSpec, episode: EpisodeState, action, rng):
    """Advance one step.

    Returns ``(next_episode, reward, terminated)``. The reward is the value of
    the occupied state from prior visits plus any wall-bump penalty of the
    executed move.
    """
    if episode.terminated:
        raise EpisodeStateError("cannot step a terminated episode")
    s = episode.current
    a = int(action)
    if not 0 <= a < mdp.n_actions:
        raise AgentError(f"step {episode.t}: invalid action {action!r}")
    state_reward = reward_at(spec, s, episode)
    row = mdp.transitions[s, a]
    u = rng.random()
    cdf = np.cumsum(row)
    s_next = int(min(np.searchsorted(cdf, u, side="right"), row.size - 1))
    bumped = False
    if s_next == s and mdp.bump_prob[s, a] > 0:
        lo = cdf[s] - row[s]
        bumped = (u - lo) < mdp.bump_prob[s, a]
    reward = state_reward + (mdp.wall_penalty if bumped else 0.0)
    counts, last, trace = _advance_counts(spec, episode, s)
    t_next = episode.t + 1
    discount = mdp.gamma ** episode.t
    nxt = replace(
        episode,
        t=t_next,
        current=s_next,
        visit_counts=counts,
        last_visit_time=last,
        trace=trace,
        cumulative_return=episode.cumulative_return + reward,
        discounted_return=episode.discounted_return + discount * reward,
    )
    done = episode.horizon is not None and t_next >= episode.horizon
    if spec.uses_threshold:
        remaining = _pow(spec.lam, counts) * spec.r_bar
        if np.max(remaining[spec.goals]) < spec.threshold:
            done = True
    nxt = replace(nxt, terminated=bool(done), last_state_reward=state_reward,
                  last_bumped=bool(bumped))
    return nxt, reward, nxt.terminated


@dataclass
class EpisodeTrace:
    """Per-step records of one episode, stored column-wise."""

    t: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    state_rewards: np.ndarray
    bumped: np.ndarray
    gamma: float
    r_vectors: np.ndarray = None
    goal_states: tuple = field(default=())

    def __len__(self):
        return int(self.t.size)

    @property
    def undiscounted_return(self):
        return float(np.sum(self.rewards))

    @property
    def discounted_return(self):
        return float(np.sum(self.gamma ** self.t * self.rewards))

    def to_csv(self, goal_states=None) -> str:
        goal_states = list(self.goal_states if goal_states is None else goal_states)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "state", "action", "reward"]
        if self.r_vectors is not None:
            header += [f"r_{g}" for g in goal_states]
        w.writerow(header)
        for i in range(len(self)):
            row = [int(self.t[i]), int(self.states[i]), int(self.actions[i]),
                   repr(float(self.rewards[i]))]
            if self.r_vectors is not None:
                row += [repr(float(self.r_vectors[i, g])) for g in goal_states]
            w.writerow(row)
        return buf.getvalue()


def run_episode(mdp, spec, agent, horizon, seed=None, start_state=None,
                record_vectors=False, rng=None):
    """Run one episode with ``agent(state, reward_vector) -> action``.

    The agent sees the reward vector at the current time, before the
    occupied state's count is incremented. Pass either ``seed`` or ``rng``.
    """
    if spec.n_states != mdp.n_states:
        raise StructuralError("reward spec and MDP disagree on the number of states")
    rng = np.random.default_rng(seed) if rng is None else rng
    if start_state is None:
        start_state = int(rng.choice(mdp.n_states, p=mdp.start_distribution))
    ep = EpisodeState.start(mdp.n_states, start_state, horizon)
    ts, ss, acts, rews, srews, bumps, vecs = [], [], [], [], [], [], []
    done = horizon is not None and horizon <= 0
    while not done:
        r_vec = reward_vector(spec, ep)
        a = agent(ep.current, r_vec)
        try:
            a_int = int(a)
        except (TypeError, ValueError):
            raise AgentError(f"step {ep.t}: agent returned non-integer action {a!r}") from None
        if a_int != a or not 0 <= a_int < mdp.n_actions:
            raise AgentError(f"step {ep.t}: agent returned invalid action {a!r}")
        ts.append(ep.t)
        ss.append(ep.current)
        acts.append(a_int)
        if record_vectors:
            vecs.append(r_vec)
        ep, reward, done = step(mdp, spec, ep, a_int, rng)
        rews.append(reward)
        srews.append(ep.last_state_reward)
        bumps.append(ep.last_bumped)
    return EpisodeTrace(
        t=np.array(ts, dtype=int),
        states=np.array(ss, dtype=int),
        actions=np.array(acts, dtype=int),
        rewards=np.array(rews, dtype=float),
        state_rewards=np.array(srews, dtype=float),
        bumped=np.array(bumps, dtype=bool),
        gamma=mdp.gamma,
        r_vectors=np.array(vecs) if record_vectors else None,
        goal_states=tuple(int(g) for g in np.flatnonzero(spec.goals)),
    )

"""Finite MDPs, grid layouts and policies.

States of a grid MDP are its non-wall cells, numbered in row-major order.
Every grid MDP has five actions (up, right, down, left, stay); moving into a
wall or off the grid leaves the agent in place and counts as a wall bump.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, NumericError, StructuralError

UP, RIGHT, DOWN, LEFT, STAY = range(5)
ACTION_NAMES = ("up", "right", "down", "left", "stay")
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1), (0, 0))
N_GRID_ACTIONS = 5

WALL, EMPTY, START, GOAL = "#", ".", "S", "G"

_ROW_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridSpec:
    """Text layout of a gridworld plus its goal annotations.

    ``goal_annotations`` maps a cell index (row-major, walls included) to
    ``(initial_reward, lambda)``.
    """

    rows: int
    cols: int
    cells: str
    goal_annotations: Mapping[int, tuple]
    noise_prob: float = 0.0
    wall_penalty: float = -1.0
    gamma: float = 0.9
    start: object = None  # None, "uniform" or (row, col)
    policy_targets: tuple = ()

    def __post_init__(self):
        validate_grid_spec(self)

    def cell(self, r, c):
        return self.cells[r * self.cols + c]

    def cell_index(self, r, c):
        return r * self.cols + c

    def coords(self, idx):
        return divmod(idx, self.cols)


def validate_grid_spec(spec: GridSpec):
    if spec.rows <= 0 or spec.cols <= 0:
        raise ConfigError(f"grid must be non-empty, got {spec.rows}x{spec.cols}")
    if len(spec.cells) != spec.rows * spec.cols:
        raise ConfigError(
            f"grid has {len(spec.cells)} cells, expected {spec.rows}x{spec.cols}"
        )
    for i, ch in enumerate(spec.cells):
        if ch not in (WALL, EMPTY, START, GOAL):
            r, c = divmod(i, spec.cols)
            raise ConfigError(f"cell ({r},{c}): unknown character {ch!r}")
    if all(ch == WALL for ch in spec.cells):
        raise ConfigError("grid has no open cell")
    if not 0.0 <= spec.noise_prob <= 1.0:
        raise ConfigError(f"noise_prob must lie in [0,1], got {spec.noise_prob}")
    if not 0.0 <= spec.gamma < 1.0:
        raise ConfigError(f"gamma must lie in [0,1), got {spec.gamma}")
    for i, ch in enumerate(spec.cells):
        r, c = divmod(i, spec.cols)
        if ch == GOAL and i not in spec.goal_annotations:
            raise ConfigError(f"cell ({r},{c}): goal without reward annotation")
    for i, ann in spec.goal_annotations.items():
        if not 0 <= i < len(spec.cells) or spec.cells[i] != GOAL:
            r, c = divmod(i, spec.cols)
            raise ConfigError(f"cell ({r},{c}): annotation on a non-goal cell")
        if len(ann) != 2:
            raise ConfigError(f"annotation for cell {i} must be (reward, lambda)")
        if not 0.0 <= ann[1] <= 1.0:
            r, c = divmod(i, spec.cols)
            raise ConfigError(f"cell ({r},{c}): lambda {ann[1]} outside [0,1]")


def parse_grid(rows: Sequence[str], goals=None, **kwargs) -> GridSpec:
    """Build a GridSpec from row strings; spaces inside rows are ignored.

    ``goals`` maps ``"r,c"`` strings or ``(r, c)`` tuples to either a
    ``{"reward": x, "lambda": y}`` dict or a ``(reward, lambda)`` pair.
    """
    clean = ["".join(row.split()) for row in rows]
    if not clean:
        raise ConfigError("grid has no rows")
    width = len(clean[0])
    for r, row in enumerate(clean):
        if len(row) != width:
            raise ConfigError(
                f"row {r} has {len(row)} cells, expected {width} (ragged grid)"
            )
    annotations = {}
    for key, val in (goals or {}).items():
        r, c = _parse_cell_key(key)
        if not (0 <= r < len(clean) and 0 <= c < width):
            raise ConfigError(f"cell ({r},{c}): goal annotation outside the grid")
        if isinstance(val, Mapping):
            try:
                ann = (float(val["reward"]), float(val.get("lambda", 1.0)))
            except KeyError as exc:
                raise ConfigError(f"cell ({r},{c}): annotation missing {exc}") from None
        else:
            ann = tuple(float(v) for v in val)
        annotations[r * width + c] = ann
    targets = tuple(
        _parse_cell_key(t) for t in kwargs.pop("policy_targets", ()) or ()
    )
    start = kwargs.pop("start", None)
    if start is not None and start != "uniform":
        start = _parse_cell_key(start)
    return GridSpec(
        rows=len(clean),
        cols=width,
        cells="".join(clean),
        goal_annotations=annotations,
        start=start,
        policy_targets=targets,
        **kwargs,
    )


def _parse_cell_key(key):
    if isinstance(key, str):
        try:
            r, c = (int(p) for p in key.split(","))
        except ValueError:
            raise ConfigError(f"bad cell key {key!r}, expected 'row,col'") from None
        return r, c
    r, c = key
    return int(r), int(c)


def load_grid_config(source) -> GridSpec:
    """Read the JSON environment config (path, JSON string or dict)."""
    if isinstance(source, Mapping):
        cfg = dict(source)
    else:
        path = Path(source)
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if "grid" not in cfg:
        raise ConfigError("config is missing the 'grid' field")
    known = {"grid", "goals", "gamma", "noise_prob", "wall_penalty", "start",
             "policy_targets", "name", "description"}
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"unknown config field(s): {sorted(extra)}")
    kwargs = {k: cfg[k] for k in ("gamma", "noise_prob", "wall_penalty") if k in cfg}
    return parse_grid(
        cfg["grid"],
        goals=cfg.get("goals"),
        start=cfg.get("start"),
        policy_targets=cfg.get("policy_targets"),
        **{k: float(v) for k, v in kwargs.items()},
    )


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    state_cells: np.ndarray  # state index -> cell index
    cell_states: Mapping[int, int]  # cell index -> state index

    def state_of(self, r, c):
        return self.cell_states[r * self.cols + c]

    def coords_of(self, s):
        return divmod(int(self.state_cells[s]), self.cols)


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP with transition tensor ``p(s'|s,a)`` of shape (S, A, S).

    ``bump_prob[s, a]`` is the part of ``p(s|s,a)`` caused by hitting a wall;
    each bump pays ``wall_penalty`` as a stationary reward.
    """

    transitions: np.ndarray
    gamma: float
    start_distribution: np.ndarray = None
    bump_prob: np.ndarray = None
    wall_penalty: float = 0.0
    layout: GridLayout = None
    name: str = ""

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise StructuralError(f"transitions must be (S, A, S), got {T.shape}")
        if np.any(T < 0):
            raise NumericError("transition probabilities must be nonnegative")
        if not np.allclose(T.sum(axis=2), 1.0, atol=_ROW_TOL, rtol=0):
            raise NumericError("each p(.|s,a) must sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0,1), got {self.gamma}")
        n = T.shape[0]
        mu0 = (np.full(n, 1.0 / n) if self.start_distribution is None
               else np.asarray(self.start_distribution, dtype=float))
        if mu0.shape != (n,) or np.any(mu0 < 0) or abs(mu0.sum() - 1) > _ROW_TOL:
            raise NumericError("start_distribution must be a probability vector")
        bump = (np.zeros(T.shape[:2]) if self.bump_prob is None
                else np.asarray(self.bump_prob, dtype=float))
        if bump.shape != T.shape[:2]:
            raise StructuralError("bump_prob must have shape (S, A)")
        object.__setattr__(self, "transitions", _frozen(T))
        object.__setattr__(self, "start_distribution", _frozen(mu0))
        object.__setattr__(self, "bump_prob", _frozen(bump))

    @property
    def n_states(self):
        return self.transitions.shape[0]

    @property
    def n_actions(self):
        return self.transitions.shape[1]

    @property
    def penalty(self):
        """Expected wall-bump reward c(s, a)."""
        return self.wall_penalty * self.bump_prob

    def is_deterministic(self):
        return bool(np.all(np.isclose(self.transitions.max(axis=2), 1.0)))

    def with_gamma(self, gamma):
        return TabularMDP(self.transitions, gamma, self.start_distribution,
                          self.bump_prob, self.wall_penalty, self.layout, self.name)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy pi(a|s) as an (S, A) row-stochastic matrix."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 2:
            raise StructuralError(f"policy must be (S, A), got shape {p.shape}")
        if np.any(np.isnan(p)):
            raise NumericError("policy contains NaN")
        if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=_ROW_TOL, rtol=0):
            raise NumericError("policy rows must be probability vectors")
        object.__setattr__(self, "probs", _frozen(p))

    @classmethod
    def deterministic(cls, actions, n_actions=N_GRID_ACTIONS):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states, n_actions=N_GRID_ACTIONS):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    def is_deterministic(self):
        return bool(np.all(np.isclose(self.probs.max(axis=1), 1.0)))

    def actions(self):
        """Greedy action per state (the action itself for deterministic policies)."""
        return np.argmax(self.probs, axis=1)


def build_mdp_from_grid(spec: GridSpec):
    """Compile a GridSpec into a TabularMDP.

    Returns ``(mdp, goals)`` where ``goals`` maps goal cell index to state index.
    With probability ``noise_prob`` the executed move is replaced by one of the
    four directional moves drawn uniformly.
    """
    open_cells = [i for i, ch in enumerate(spec.cells) if ch != WALL]
    cell_states = {cell: s for s, cell in enumerate(open_cells)}
    n = len(open_cells)
    # outcome of each executed move: destination state and whether it bumped
    dest = np.empty((n, 5), dtype=int)
    bumped = np.zeros((n, 5), dtype=bool)
    for s, cell in enumerate(open_cells):
        r, c = divmod(cell, spec.cols)
        for m, (dr, dc) in enumerate(MOVES):
            rr, cc = r + dr, c + dc
            inside = 0 <= rr < spec.rows and 0 <= cc < spec.cols
            if inside and spec.cell(rr, cc) != WALL:
                dest[s, m] = cell_states[rr * spec.cols + cc]
            else:
                dest[s, m] = s
                bumped[s, m] = m != STAY
    T = np.zeros((n, 5, n))
    bump = np.zeros((n, 5))
    noise = spec.noise_prob
    for s in range(n):
        for a in range(5):
            T[s, a, dest[s, a]] += 1.0 - noise
            bump[s, a] += (1.0 - noise) * bumped[s, a]
            for m in range(4):
                T[s, a, dest[s, m]] += noise / 4
                bump[s, a] += noise / 4 * bumped[s, m]
    start = _start_distribution(spec, cell_states, n)
    layout = GridLayout(spec.rows, spec.cols, np.array(open_cells), cell_states)
    mdp = TabularMDP(T, spec.gamma, start, bump, spec.wall_penalty, layout)
    goals = {cell: cell_states[cell] for cell in sorted(spec.goal_annotations)}
    return mdp, goals


def _start_distribution(spec, cell_states, n):
    mu0 = np.zeros(n)
    if spec.start == "uniform":
        mu0[:] = 1.0 / n
    elif spec.start is not None:
        r, c = spec.start
        cell = spec.cell_index(r, c)
        if cell not in cell_states:
            raise ConfigError(f"cell ({r},{c}): start cell is a wall or off-grid")
        mu0[cell_states[cell]] = 1.0
    else:
        starts = [cell_states[i] for i, ch in enumerate(spec.cells) if ch == START]
        if starts:
            mu0[starts] = 1.0 / len(starts)
        else:
            mu0[:] = 1.0 / n
    return mu0


def grid_reward_vectors(spec: GridSpec, mdp: TabularMDP):
    """Initial rewards and per-state lambdas; non-goal states get lambda 1."""
    r_bar = np.zeros(mdp.n_states)
    lam = np.ones(mdp.n_states)
    for cell, (reward, goal_lam) in spec.goal_annotations.items():
        s = mdp.layout.cell_states[cell]
        r_bar[s] = reward
        lam[s] = goal_lam
    return r_bar, lam


def policy_transition_matrix(mdp: TabularMDP, pi: Policy) -> np.ndarray:
    """P^pi[s, s'] = sum_a pi(a|s) p(s'|s,a)."""
    if pi.probs.shape != mdp.transitions.shape[:2]:
        raise StructuralError(
            f"policy shape {pi.probs.shape} does not match MDP "
            f"{mdp.transitions.shape[:2]}"
        )
    return np.einsum("sa,sat->st", pi.probs, mdp.transitions)


def greedy_policy(q) -> Policy:
    """Deterministic argmax policy; ties go to the lowest action index."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise StructuralError(f"q must be (S, A), got shape {q.shape}")
    if np.any(np.isnan(q)):
        raise NumericError("q contains NaN")
    return Policy.deterministic(np.argmax(q, axis=1), q.shape[1])


def random_mdp(rng, n_states, n_actions, gamma, concentration=1.0):
    """Dense random MDP whose rows are Dirichlet(concentration) draws."""
    alpha = np.full(n_states, concentration)
    T = rng.dirichlet(alpha, size=(n_states, n_actions))
    return TabularMDP(T, gamma)


def random_policy(rng, n_states, n_actions, deterministic=False):
    if deterministic:
        return Policy.deterministic(rng.integers(n_actions, size=n_states), n_actions)
    return Policy(rng.dirichlet(np.ones(n_actions), size=n_states))


def toy_mdp(gamma=0.99):
    """Three states on a line, indexed s0 (middle), s1 (left), s2 (right).

    Uses the grid action set; up/down/stay keep the agent in place and moves
    off either end are blocked without penalty.
    """
    n = 3
    T = np.zeros((n, 5, n))
    left_of = {0: 1, 1: 1, 2: 0}
    right_of = {0: 2, 1: 0, 2: 2}
    for s in range(n):
        T[s, UP, s] = T[s, DOWN, s] = T[s, STAY, s] = 1.0
        T[s, LEFT, left_of[s]] = 1.0
        T[s, RIGHT, right_of[s]] = 1.0
    start = np.array([1.0, 0.0, 0.0])
    return TabularMDP(T, gamma, start, name="toy")


TOY_R_BAR = (0.0, 10.0, 6.0)
TOY_LAMBDA = (1.0, 0.0, 1.0)

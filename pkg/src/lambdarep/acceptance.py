"""Acceptance criteria as self-contained runners.

Each runner returns a ``Result``; ``detail`` holds only seeded, deterministic
numbers so that repeated runs write identical CSVs. Wall-clock time is kept
separately and checked against the stated limits.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import compose as C
from . import env_core as E
from . import oracle as O
from . import representation as R
from .analysis import base_policies
from .diminish import RewardSpec
from .environments import load_environment
from .td_learn import (LearnerConfig, estimate_lambda, lambda_backup,
                       lambda_f_policy_evaluation, lambda_value_td_target,
                       q_lambda_learning, td_policy_evaluation)


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float = None

    @property
    def within_time(self):
        return self.limit is None or self.seconds <= self.limit

    @property
    def ok(self):
        return self.passed and self.within_time

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        limit = f" (limit {self.limit:g}s)" if self.limit else ""
        return (f"[{status}] {self.number:2d} {self.name}: {self.detail} "
                f"[{self.seconds:.1f}s{limit}]")


def _g(x):
    return f"{x:.6g}"


# 1 ----------------------------------------------------------------------

def toy_advantage(seed=0):
    mdp = E.toy_mdp(0.99)
    spec = RewardSpec(E.TOY_R_BAR, E.TOY_LAMBDA)
    stay = E.Policy.deterministic([E.STAY] * 3)
    # accounting starts at the first rewarded arrival after leaving s0
    right = O.exact_diminished_value(mdp, stay, spec, 2, horizon=2)
    left = O.exact_diminished_value(mdp, stay, spec, 1, horizon=2)
    go_left = E.Policy.deterministic([E.LEFT, E.STAY, E.LEFT])
    go_right = E.Policy.deterministic([E.RIGHT, E.RIGHT, E.STAY])
    r = np.array(E.TOY_R_BAR)
    correct = C.build_policy_set(mdp, [go_left, go_right], E.TOY_LAMBDA)
    naive = C.build_policy_set(mdp, [go_left, go_right], 1.0)
    a_correct = C.gpi_action(correct, 0, r)
    a_naive = C.gpi_action(naive, 0, r)
    ok = (abs(right - 11.94) <= 1e-9 and abs(left - 10.0) <= 1e-9
          and a_correct == E.RIGHT and a_naive == E.LEFT)
    detail = (f"right={_g(right)} left={_g(left)} correct-lambda action="
              f"{E.ACTION_NAMES[a_correct]} lambda_hat=1 action={E.ACTION_NAMES[a_naive]}")
    return ok, detail


# 2 ----------------------------------------------------------------------

def convergence_envelope(seed=0, n_mdps=100):
    gamma = 0.9
    violations, checked = 0, 0
    for k in range(n_mdps):
        rng = np.random.default_rng(seed * 10_000 + k)
        mdp = E.random_mdp(rng, 8, 4, gamma)
        pi = E.random_policy(rng, 8, 4)
        P = E.policy_transition_matrix(mdp, pi)
        for lam in (0.0, 0.3, 0.7, 1.0):
            truth = O.lambda_r_direct(P, gamma, lam)
            sol = R.solve_lambda_r_matrix(P, gamma, lam, tol=1e-10, keep_iterates=True)
            for it_k, it in enumerate(sol.iterates):
                checked += 1
                if np.max(np.abs(it - truth)) > R.convergence_bound(it_k, gamma, lam):
                    violations += 1
    return violations == 0, f"{violations} violations over {checked} iterates"


# 3 ----------------------------------------------------------------------

def contraction(seed=0, n_pairs=1000):
    rng = np.random.default_rng(seed)
    violations, worst = 0, 0.0
    for _ in range(n_pairs):
        n = int(rng.integers(2, 9))
        gamma = float(rng.uniform(0, 0.99))
        P = rng.dirichlet(np.ones(n), size=n)
        lam = rng.random(n)
        a = rng.normal(scale=5, size=(n, n))
        b = rng.normal(scale=5, size=(n, n))
        lhs = np.max(np.abs(R.apply_g_lambda(a, P, gamma, lam) - R.apply_g_lambda(b, P, gamma, lam)))
        rhs = gamma * np.max(np.abs(a - b))
        worst = max(worst, lhs / rhs)
        if lhs > rhs * (1 + 1e-12):
            violations += 1
    return violations == 0, f"{violations} violations, max ratio/gamma {_g(worst)}"


# 4 ----------------------------------------------------------------------

def chain_mdp(gamma):
    T = np.zeros((3, 1, 3))
    T[0, 0, 1] = T[1, 0, 2] = T[2, 0, 2] = 1.0
    return E.TabularMDP(T, gamma, np.array([1.0, 0, 0]))


def two_cycle(gamma):
    T = np.zeros((2, 1, 2))
    T[0, 0, 1] = T[1, 0, 0] = 1.0
    return E.TabularMDP(T, gamma, np.array([1.0, 0]))


def limit_identities(seed=0):
    gamma = 0.9
    rng = np.random.default_rng(seed)
    mdp = E.random_mdp(rng, 6, 3, gamma)
    pi = E.random_policy(rng, 6, 3)
    P = E.policy_transition_matrix(mdp, pi)
    sr_err = np.max(np.abs(R.solve_lambda_r(mdp, pi, 1.0, tol=1e-10).phi
                           - np.linalg.inv(np.eye(6) - gamma * P)))
    chain = chain_mdp(gamma)
    one = E.Policy(np.ones((3, 1)))
    fr = R.solve_lambda_r(chain, one, 0.0, tol=1e-12).phi
    fr_expected = np.array([1.0, gamma, gamma * gamma])
    fr_exact = bool(np.array_equal(fr[0], fr_expected))
    nr = R.solve_nth_occupancy(chain, one, 1, tol=1e-12)
    nr1_exact = bool(np.array_equal(nr[1][0], fr_expected))
    cyc = two_cycle(gamma)
    nr200 = R.solve_nth_occupancy(cyc, E.Policy(np.ones((2, 1))), 200, tol=1e-12)[200]
    sr = np.linalg.inv(np.eye(2) - gamma * E.policy_transition_matrix(cyc, E.Policy(np.ones((2, 1)))))
    nr_err = float(np.max(np.abs(nr200 - sr)))
    ok = sr_err <= 1e-6 and fr_exact and nr1_exact and nr_err <= 1e-6
    return ok, (f"SR err {_g(sr_err)}, FR chain exact={fr_exact}, NR1 exact={nr1_exact}, "
                f"NR200 err {_g(nr_err)}")


# 5 ----------------------------------------------------------------------

def max_value_bound(seed=0, n_mdps=100):
    violations = 0
    for k in range(n_mdps):
        rng = np.random.default_rng(seed * 10_000 + k)
        n = int(rng.integers(2, 9))
        gamma = float(rng.uniform(0.1, 0.99))
        mdp = E.random_mdp(rng, n, 3, gamma, concentration=float(rng.choice([0.1, 1.0])))
        pi = E.random_policy(rng, n, 3, deterministic=bool(k % 2))
        lam = rng.random(n)
        phi = R.solve_lambda_r(mdp, pi, lam, tol=1e-10).phi
        bound = R.max_entry_bound(gamma, lam, n)
        violations += int(np.sum(phi > bound + 1e-9)) + int(np.sum(phi < -1e-12))
    loop = E.TabularMDP(np.ones((1, 1, 1)), 0.9)
    val = R.solve_lambda_r(loop, E.Policy(np.ones((1, 1))), 0.5, tol=1e-13).phi[0, 0]
    bound = R.max_entry_bound(0.9, 0.5, 1)[0, 0]
    ok = violations == 0 and abs(val - bound) <= 1e-9 and abs(val - 1 / 0.55) <= 1e-9
    return ok, f"{violations} violations; self-loop {val:.9f} vs bound {bound:.9f}"


# 6 ----------------------------------------------------------------------

def oracle_agreement(seed=0, rollouts=10_000):
    cases = []
    for name in ("fourrooms", "tworooms", "toy"):
        if name == "toy":
            mdp = E.toy_mdp(0.99)
            r_bar = np.array(E.TOY_R_BAR)
        else:
            env = load_environment(name)
            mdp, r_bar = env.mdp, env.r_bar
        pi = E.Policy.uniform(mdp.n_states, mdp.n_actions)
        P = E.policy_transition_matrix(mdp, pi)
        for lam in (0.0, 0.5, 1.0):
            dp = R.solve_lambda_r_matrix(P, mdp.gamma, lam, tol=1e-9).phi
            est = O.mc_lambda_r(mdp, pi, lam, 0, rollouts, seed=seed)
            mean, se = est.functional(r_bar)
            truth = float(dp[0] @ r_bar)
            bias = est.bias_bound * float(np.max(np.abs(r_bar)))
            z = abs(mean - truth)
            cases.append((name, lam, z <= O.SE_MULTIPLIER * se + bias, z / se if se else 0.0))
    ok = all(c[2] for c in cases)
    worst = max(cases, key=lambda c: c[3])
    return ok, (f"{sum(c[2] for c in cases)}/{len(cases)} within 3 SE; "
                f"largest |z|={worst[3]:.2f} ({worst[0]}, lambda={worst[1]})")


# 7 ----------------------------------------------------------------------

def policy_evaluation(seed=0, episodes=1500, horizon=10):
    env = load_environment("policy_eval")
    mdp = env.mdp
    pi = C.shortest_path_policy(mdp, env.target_states[0])
    r = env.r_bar
    P = E.policy_transition_matrix(mdp, pi)
    v_true = O.lambda_r_direct(P, mdp.gamma, env.lam) @ r
    feats = np.eye(mdp.n_states)

    def lam_vec(x):
        v = np.ones(mdp.n_states)
        v[env.goal_states] = x
        return v

    mse = {}
    for method in ("dp", "td", "lf"):
        for lam in (0.5, 1.0):
            errs = []
            for s in range(3):
                if method == "dp":
                    phi = R.solve_lambda_r(mdp, pi, lam_vec(lam), tol=5e-2).phi
                elif method == "td":
                    phi = td_policy_evaluation(mdp, pi, lam_vec(lam), episodes, horizon,
                                               seed=seed * 100 + s)
                else:
                    model = lambda_f_policy_evaluation(mdp, pi, feats, lam_vec(lam), episodes,
                                                       horizon, seed=seed * 100 + s)
                    phi = model.table()
                errs.append(float(np.mean((phi @ r - v_true) ** 2)))
            mse[(method, lam)] = float(np.mean(errs))
    ok = all(mse[(m, 0.5)] < mse[(m, 1.0)] for m in ("dp", "td", "lf"))
    detail = ", ".join(f"{m}: {_g(mse[(m, 0.5)])} vs {_g(mse[(m, 1.0)])}"
                       for m in ("dp", "td", "lf"))
    return ok, "value MSE lambda=0.5 vs 1.0 -> " + detail


# 8 ----------------------------------------------------------------------

def gpi_returns(noise, lambdas=(0.0, 0.5, 1.0), episodes=50, seeds=(0, 1, 2), horizon=40,
                lam_true=0.5):
    env = load_environment("fourrooms", noise_prob=noise)
    spec = env.reward_spec(lam_true)
    pols = base_policies(env)
    out = {}
    for lh in lambdas:
        pset = C.build_policy_set(env.mdp, pols, _goal_lambda(env, lh))
        runs = [C.run_gpe_gpi(env.mdp, spec, pset, episodes, horizon, seed=s) for s in seeds]
        out[lh] = (np.concatenate([r.discounted_returns for r in runs]),
                   np.concatenate([r.returns for r in runs]), runs)
    return out


def _goal_lambda(env, lam):
    v = np.ones(env.mdp.n_states)
    v[env.goal_states] = lam
    return v


def _mean_se(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def gpi_ordering(seed=0):
    parts, ok = [], True
    for noise in (0.0, 0.2):
        res = gpi_returns(noise, seeds=(seed, seed + 1, seed + 2))
        stats = {lh: _mean_se(v[0]) for lh, v in res.items()}
        m5, s5 = stats[0.5]
        for other in (0.0, 1.0):
            m, s = stats[other]
            joint = math.sqrt(s5 ** 2 + s ** 2)
            ok &= (m5 - m) > joint
        parts.append(f"noise {noise}: " + " ".join(
            f"lam_hat={lh}:{stats[lh][0]:.3f}+-{stats[lh][1]:.3f}" for lh in sorted(stats)))
    return ok, "; ".join(parts)


# 9 ----------------------------------------------------------------------

def bound_trial(seed, n_states=6, n_actions=3, n_policies=3, gamma=0.9,
                lambdas=(0.3, 0.7), concentration=1.0):
    rng = np.random.default_rng(seed)
    mdp = E.random_mdp(rng, n_states, n_actions, gamma, concentration)
    lam_t = lambdas[seed % len(lambdas)]
    lam_h = lambdas[(seed // len(lambdas)) % len(lambdas)]
    pols = [C.optimal_policy_for(mdp, rng.random(n_states)) for _ in range(n_policies)]
    spec = RewardSpec(rng.random(n_states), lam_t)
    return C.gpi_bound_check(mdp, spec, pols, lam_t, lam_h, seed=seed)


def gpi_bound(seed=0, trials=500):
    violations, worst = [], np.inf
    for k in range(trials):
        rep = bound_trial(seed * 100_000 + k)
        worst = min(worst, float(rep.slack.min()))
        if not rep.ok:
            violations.append(rep.seed)
    detail = f"{len(violations)} violating trials of {trials}; min slack {_g(worst)}"
    if violations:
        detail += f"; seeds {violations[:5]}"
    return not violations, detail


# 10 ---------------------------------------------------------------------

def lambda_estimation(seed=0, out_dir=None):
    from .cli import main as cli_main

    exact = True
    for lam in np.round(np.arange(0, 1.01, 0.1), 10):
        r = 10.0 * lam ** np.arange(8)
        pairs = np.column_stack([r[:-1], r[1:]])
        exact &= abs(estimate_lambda(pairs) - lam) <= 1e-12
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(out_dir or tmp) / "forage"
        code = cli_main(["forage", "--env", "fourrooms", "--learn-lambda", "--seed", str(seed),
                         "--out", str(out), "--quiet"])
        summary = _read_summary(out / "summary.csv")
    final = summary["final_lambda_hat"]
    learned, baseline = summary["mean_return_learned"], summary["mean_return_baseline"]
    ok = exact and code == 0 and abs(final - 0.5) < 0.05 and learned >= baseline
    return ok, (f"noiseless exact={exact}; final lambda_hat={final:.4f}; "
                f"mean return {learned:.3f} vs fixed lambda_hat=1 {baseline:.3f}")


def _read_summary(path):
    import csv

    with open(path) as fh:
        return {row["key"]: float(row["value"]) for row in csv.DictReader(fh)}


# 11 ---------------------------------------------------------------------

def cycle_mdp(length, gamma):
    T = np.zeros((length, 1, length))
    for i in range(length):
        T[i, 0, (i + 1) % length] = 1.0
    return E.TabularMDP(T, gamma, np.eye(length)[0])


def subadditivity(seed=0, horizon=2000):
    strict, equal_err = True, 0.0
    one = None
    for length in (2, 3, 5):
        mdp = cycle_mdp(length, 0.9)
        one = E.Policy(np.ones((length, 1)))
        A, B = [0], list(range(1, length))
        def val(X, lam):
            return R.lambda_set_operator(mdp, one, 0, X, lam, horizon)[0]
        a, b, ab = val(A, 0.5), val(B, 0.5), val(A + B, 0.5)
        strict &= ab < a + b
        a1, b1, ab1 = val(A, 1.0), val(B, 1.0), val(A + B, 1.0)
        equal_err = max(equal_err, abs(ab1 - (a1 + b1)))
    ok = strict and equal_err <= 1e-12
    return ok, f"strict at lambda=0.5: {strict}; |union - sum| at lambda=1: {_g(equal_err)}"


# 12 ---------------------------------------------------------------------

def q_lambda_ordering(seed=0, episodes=500, horizon=100):
    env = load_environment("tworooms")
    spec = env.reward_spec(0.5)
    means = {}
    for la in (0.5, 1.0):
        disc, undisc = [], []
        for s in range(3):
            res = q_lambda_learning(env.mdp, spec, LearnerConfig(
                alpha=0.1, lam=_goal_lambda(env, la), episodes=episodes,
                horizon=horizon, seed=seed + s))
            disc.append(res.discounted_returns[-100:].mean())
            undisc.append(res.returns[-100:].mean())
        means[la] = (float(np.mean(disc)), float(np.mean(undisc)), disc)
    ok = means[0.5][0] > means[1.0][0]
    return ok, (f"final-100 discounted return {means[0.5][0]:.3f} vs {means[1.0][0]:.3f} "
                f"(undiscounted {means[0.5][1]:.3f} vs {means[1.0][1]:.3f})")


# 13 ---------------------------------------------------------------------

def td_target_identity(seed=0, n_mdps=20):
    worst = 0.0
    for k in range(n_mdps):
        rng = np.random.default_rng(seed * 1000 + k)
        n = int(rng.integers(3, 9))
        mdp = E.random_mdp(rng, n, 2, float(rng.uniform(0.5, 0.99)))
        pi = E.random_policy(rng, n, 2)
        lam = float(rng.random())
        P = E.policy_transition_matrix(mdp, pi)
        varphi = O.lambda_r_direct(P, mdp.gamma, lam)
        w = rng.random(n)
        phi = np.eye(n)
        v = varphi @ w
        for s in range(n):
            for s2 in np.flatnonzero(P[s] > 0):
                lhs = lambda_value_td_target(v, varphi, w, phi, (s, s2), mdp.gamma, lam)
                rhs = float(w @ lambda_backup(varphi[s2], s, mdp.gamma, lam))
                worst = max(worst, abs(lhs - rhs))
    return worst <= 1e-12, f"max |target - w.backup| = {_g(worst)}"


# 14 ---------------------------------------------------------------------

DETERMINISM_SUBSET = "1,3,4,11,13"


def determinism(seed=0):
    from .cli import main as cli_main

    with tempfile.TemporaryDirectory() as tmp:
        dirs = []
        for rep in ("a", "b"):
            base = Path(tmp) / rep
            codes = [
                cli_main(["check", "--only", DETERMINISM_SUBSET, "--seed", str(seed),
                          "--out", str(base / "check"), "--quiet"]),
                cli_main(["learn", "--env", "tworooms", "--lambdas", "0.5", "--episodes", "5",
                          "--seeds", str(seed), "--out", str(base / "learn"), "--quiet"]),
                cli_main(["gpi", "--env", "fourrooms", "--lambdas", "0.5", "--episodes", "3",
                          "--seeds", str(seed), "--out", str(base / "gpi"), "--quiet"]),
                cli_main(["eval", "--env", "policy_eval", "--lambda", "0.5", "--method", "td",
                          "--episodes", "20", "--seed", str(seed), "--out", str(base / "eval"),
                          "--quiet"]),
            ]
            if any(codes):
                return False, f"subcommand exit codes {codes}"
            dirs.append(base)
        files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*.csv"))
        same = [(dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files]
    return all(same) and bool(files), f"{sum(same)}/{len(files)} CSV files byte-identical"


CRITERIA = {
    1: ("toy-MDP advantage", toy_advantage, 1.0),
    2: ("convergence envelope", convergence_envelope, 30.0),
    3: ("contraction", contraction, None),
    4: ("limit identities", limit_identities, None),
    5: ("max-value bound", max_value_bound, None),
    6: ("oracle agreement", oracle_agreement, 120.0),
    7: ("policy-evaluation ordering", policy_evaluation, None),
    8: ("GPI ordering", gpi_ordering, 120.0),
    9: ("GPI mismatch bound", gpi_bound, 300.0),
    10: ("lambda estimation", lambda_estimation, None),
    11: ("subadditivity", subadditivity, None),
    12: ("Q_lambda ordering", q_lambda_ordering, None),
    13: ("TD-target identity", td_target_identity, None),
    14: ("determinism", determinism, None),
}


def run_criterion(number, seed=0):
    name, fn, limit = CRITERIA[number]
    t0 = time.perf_counter()
    passed, detail = fn(seed=seed)
    return Result(number, name, bool(passed), detail, time.perf_counter() - t0, limit)


def run_all(only=None, seed=0, echo=None):
    results = []
    for number in sorted(only or CRITERIA):
        res = run_criterion(number, seed)
        if echo:
            echo(res.line())
        results.append(res)
    return results

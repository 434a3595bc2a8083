"""Command-line entry point: ``lambdarep <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 failed
acceptance criteria.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import compose as C
from . import env_core as E
from . import oracle as O
from . import representation as R
from .analysis import agent_vs_mvt, base_policies, learn_lambda_gpi
from .environments import load_environment, read_config
from .errors import ConfigError, LambdaRepError
from .export import (matrix_to_csv, residual_log_csv, rows_to_csv, write_manifest,
                     write_text)
from .td_learn import (LearnerConfig, lambda_f_policy_evaluation, q_lambda_learning,
                       td_policy_evaluation)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3, 4
WORKERS_ENV = "LAMBDAREP_WORKERS"


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items):
    """Order-preserving map, fanned out to worker processes when configured."""
    items = list(items)
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(n) as pool:
        return list(pool.map(fn, *zip(*items)))


def build_parser():
    parser = argparse.ArgumentParser(prog="lambdarep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, env=True):
        if env:
            p.add_argument("--env", default="fourrooms",
                           help="shipped environment name or path to a JSON config")
            p.add_argument("--gamma", type=float, default=None, help="override discount")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress stdout summary")

    p = sub.add_parser("eval", help="evaluate a policy's lambda representation")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--method", choices=("dp", "td", "lf"), default="dp")
    p.add_argument("--policy", default=None,
                   help="JSON map state -> action probabilities (default: walk to first target)")
    p.add_argument("--tol", type=float, default=R.DEFAULT_TOL)
    p.add_argument("--episodes", type=int, default=1500)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.1)

    p = sub.add_parser("learn", help="online Q_lambda-learning")
    common(p)
    p.add_argument("--lambdas", type=_floats, default=[0.5, 1.0])
    p.add_argument("--true-lambda", type=float, default=None)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--seeds", type=_ints, default=None)

    p = sub.add_parser("gpi", help="GPE+GPI with a library of base policies")
    common(p)
    p.add_argument("--lambdas", type=_floats, default=[0.0, 0.5, 1.0])
    p.add_argument("--true-lambda", type=float, default=None)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--horizon", type=int, default=40)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--seeds", type=_ints, default=None)
    p.add_argument("--policy-dir", default=None,
                   help="directory of policy JSON files (default: walk to each target)")

    p = sub.add_parser("forage", help="foraging run with optional lambda learning")
    common(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--lambda-hat", type=float, default=None)
    g.add_argument("--learn-lambda", action="store_true")
    p.add_argument("--true-lambda", type=float, default=None)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--horizon", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--mvt-seeds", type=int, default=3)

    p = sub.add_parser("oracle", help="compare DP against Monte-Carlo rollouts")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--rollouts", type=int, default=10_000)
    p.add_argument("--state", type=int, default=0)

    p = sub.add_parser("check", help="run the acceptance criteria")
    common(p, env=False)
    p.add_argument("--only", type=_ints, default=None, help="criterion numbers, e.g. 1,3,4")

    p = sub.add_parser("rerun", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def _out_dir(args):
    return Path(args.out or Path("runs") / args.command)


def _env(args, **overrides):
    return load_environment(args.env, gamma=args.gamma, **overrides)


def _echo(args, text):
    if not args.quiet:
        print(text)


def load_policy(path, mdp):
    """Policy JSON: {"state": [p(a0), ..., p(aK)]} with every state present."""
    data = json.loads(Path(path).read_text())
    probs = np.zeros((mdp.n_states, mdp.n_actions))
    for key, row in data.items():
        s = int(key)
        if not 0 <= s < mdp.n_states:
            raise ConfigError(f"{path}: state {s} out of range")
        probs[s] = row
    missing = np.flatnonzero(probs.sum(axis=1) == 0)
    if missing.size:
        raise ConfigError(f"{path}: no action probabilities for states {missing.tolist()}")
    return E.Policy(probs)


def policy_to_json(pi):
    return {str(s): [float(p) for p in row] for s, row in enumerate(pi.probs)}


def cmd_eval(args, argv):
    env = _env(args)
    mdp = env.mdp
    lam = env.lam.copy()
    lam[env.goal_states] = args.lam
    pi = (load_policy(args.policy, mdp) if args.policy
          else C.shortest_path_policy(mdp, env.target_states[0]))
    out = _out_dir(args)
    if args.method == "dp":
        sol = R.solve_lambda_r(mdp, pi, lam, tol=args.tol)
        phi = sol.phi
        write_text(out / "iterations.csv", residual_log_csv(sol.residuals))
    elif args.method == "td":
        phi = td_policy_evaluation(mdp, pi, lam, args.episodes, args.horizon, args.alpha,
                                   seed=args.seed)
    else:
        model = lambda_f_policy_evaluation(mdp, pi, np.eye(mdp.n_states), lam, args.episodes,
                                           args.horizon, args.alpha, seed=args.seed)
        phi = model.table()
    values = phi @ env.r_bar
    write_text(out / "lambda_r.csv", matrix_to_csv(phi))
    write_text(out / "values.csv", rows_to_csv(["state", "value"], enumerate(values)))
    write_manifest(out, "eval", argv, args.seed, env.config)
    _echo(args, f"wrote {out}/lambda_r.csv ({mdp.n_states} states, method {args.method})")
    return EXIT_OK


def _seeds(args):
    return args.seeds if args.seeds else [args.seed]


def _learn_job(env_source, gamma, lam_true, lam_agent, episodes, horizon, alpha, seed):
    env = load_environment(env_source, gamma=gamma)
    spec = env.reward_spec(lam_true)
    lam = np.ones(env.mdp.n_states)
    lam[env.goal_states] = lam_agent
    return q_lambda_learning(env.mdp, spec, LearnerConfig(
        alpha=alpha, lam=lam, episodes=episodes, horizon=horizon, seed=seed))


def cmd_learn(args, argv):
    env = _env(args)
    cfg = read_config(args.env)
    jobs = [(cfg, args.gamma, args.true_lambda, la, args.episodes, args.horizon, args.alpha, s)
            for la in args.lambdas for s in _seeds(args)]
    results = _map(_learn_job, jobs)
    rows, summary = [], []
    for job, res in zip(jobs, results):
        la, seed = job[3], job[7]
        for ep in range(args.episodes):
            rows.append((la, seed, ep, res.returns[ep], res.discounted_returns[ep], res.steps[ep]))
        tail = min(100, args.episodes)
        summary.append((la, seed, res.returns[-tail:].mean(), res.discounted_returns[-tail:].mean()))
    out = _out_dir(args)
    write_text(out / "returns.csv", rows_to_csv(
        ["agent_lambda", "seed", "episode", "return", "discounted_return", "steps"], rows))
    write_text(out / "summary.csv", rows_to_csv(
        ["agent_lambda", "seed", "final_return", "final_discounted_return"], summary))
    write_manifest(out, "learn", argv, args.seed, env.config)
    for la in args.lambdas:
        vals = [s[3] for s in summary if s[0] == la]
        _echo(args, f"agent lambda {la}: final discounted return {np.mean(vals):.3f}")
    return EXIT_OK


def _policies_from_dir(path, mdp):
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ConfigError(f"no policy files in {path}")
    return [load_policy(f, mdp) for f in files], [f.stem for f in files]


def _gpi_job(env_source, gamma, noise, lam_true, lam_hat, episodes, horizon, seed, policies):
    env = load_environment(env_source, gamma=gamma, noise_prob=noise)
    spec = env.reward_spec(lam_true)
    lam = np.ones(env.mdp.n_states)
    lam[env.goal_states] = lam_hat
    pset = C.build_policy_set(env.mdp, policies, lam)
    return C.run_gpe_gpi(env.mdp, spec, pset, episodes, horizon, seed=seed)


def cmd_gpi(args, argv):
    env = _env(args, noise_prob=args.noise)
    if args.policy_dir:
        pols, names = _policies_from_dir(args.policy_dir, env.mdp)
    else:
        pols = base_policies(env)
        names = [f"target{t}" for t in env.target_states]
    cfg = read_config(args.env)
    jobs = [(cfg, args.gamma, args.noise, args.true_lambda, lh, args.episodes, args.horizon, s, pols)
            for lh in args.lambdas for s in _seeds(args)]
    results = _map(_gpi_job, jobs)
    rows, traj = [], []
    for job, res in zip(jobs, results):
        lh, seed = job[4], job[7]
        for ep, tr in enumerate(res.traces):
            rows.append((lh, seed, ep, res.returns[ep], res.discounted_returns[ep], res.steps[ep]))
            traj.append({"agent_lambda": lh, "seed": seed, "episode": ep,
                         "cells": [list(env.mdp.layout.coords_of(s)) for s in tr.states]})
    out = _out_dir(args)
    write_text(out / "results.csv", rows_to_csv(
        ["agent_lambda", "seed", "episode", "return_undiscounted", "return_discounted", "steps"],
        rows))
    summary = []
    for lh in args.lambdas:
        d = np.array([r[4] for r in rows if r[0] == lh])
        se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
        summary.append((lh, d.mean(), se, d.size))
        _echo(args, f"lambda_hat {lh}: mean discounted return {d.mean():.3f} +- {se:.3f}")
    write_text(out / "summary.csv", rows_to_csv(
        ["agent_lambda", "mean_discounted_return", "se", "episodes"], summary))
    write_text(out / "trajectories.json", json.dumps(traj) + "\n")
    write_text(out / "policies.json", json.dumps(
        {n: policy_to_json(p) for n, p in zip(names, pols)}, sort_keys=True) + "\n")
    write_manifest(out, "gpi", argv, args.seed, env.config)
    return EXIT_OK


def cmd_forage(args, argv):
    env = _env(args)
    spec = env.reward_spec(args.true_lambda)
    pols = base_policies(env)
    out = _out_dir(args)
    lam_true = float(spec.lam[env.goal_states[0]])
    if args.learn_lambda:
        run = learn_lambda_gpi(env.mdp, spec, pols, args.episodes, args.horizon,
                               seed=args.seed, initial=1.0, lr=args.lr)
        base = learn_lambda_gpi(env.mdp, spec, pols, args.episodes, args.horizon,
                                seed=args.seed, initial=1.0, learn=False)
    else:
        lh = 1.0 if args.lambda_hat is None else args.lambda_hat
        run = learn_lambda_gpi(env.mdp, spec, pols, args.episodes, args.horizon,
                               seed=args.seed, initial=lh, learn=False)
        base = None
    write_text(out / "lambda_hat.csv", rows_to_csv(
        ["episode", "lambda_hat"], enumerate(run.lambda_hat)))
    rows = [("agent", ep, r, d) for ep, (r, d) in enumerate(zip(run.returns, run.discounted_returns))]
    if base is not None:
        rows += [("baseline", ep, r, d)
                 for ep, (r, d) in enumerate(zip(base.returns, base.discounted_returns))]
    write_text(out / "returns.csv", rows_to_csv(
        ["run", "episode", "return", "discounted_return"], rows))
    # leave-time comparison for the final agent over independent seeds
    final_lam = float(run.lambda_hat[-1])
    by_seed = {}
    for k in range(max(3, args.mvt_seeds)):
        s = args.seed + 1000 + k
        by_seed[s] = learn_lambda_gpi(env.mdp, spec, pols, 10, args.horizon, seed=s,
                                      initial=final_lam, learn=False).traces
    mvt_rows = []
    for gamma in (0.99, 1.0):
        summ = agent_vs_mvt(by_seed, spec, gamma=gamma, environment=env.name)
        mvt_rows.append((env.name, gamma, summ.mean_diff, summ.se_diff,
                         summ.mean_diff_discounted, summ.se_diff_discounted))
    write_text(out / "mvt.csv", rows_to_csv(
        ["environment", "gamma", "mean_leave_diff", "se", "mean_leave_diff_discounted",
         "se_discounted"], mvt_rows))
    detail = agent_vs_mvt(by_seed, spec, gamma=0.99, environment=env.name).rows
    write_text(out / "mvt_patches.csv", rows_to_csv(
        ["environment_id", "seed", "patch_idx", "leave_diff_discounted",
         "leave_diff_undiscounted"], detail))
    summary = [("final_lambda_hat", final_lam), ("true_lambda", lam_true),
               ("mean_return_learned", run.discounted_returns.mean())]
    if base is not None:
        summary.append(("mean_return_baseline", base.discounted_returns.mean()))
    write_text(out / "summary.csv", rows_to_csv(["key", "value"], summary))
    write_manifest(out, "forage", argv, args.seed, env.config)
    _echo(args, "\n".join(f"{k}: {v:.4f}" for k, v in summary))
    return EXIT_OK


def cmd_oracle(args, argv):
    env = _env(args)
    mdp = env.mdp
    pi = E.Policy.uniform(mdp.n_states, mdp.n_actions)
    P = E.policy_transition_matrix(mdp, pi)
    lam = env.lam.copy()
    lam[env.goal_states] = args.lam
    dp = R.solve_lambda_r_matrix(P, mdp.gamma, lam, tol=1e-9).phi[args.state]
    est = O.mc_lambda_r(mdp, pi, lam, args.state, args.rollouts, seed=args.seed)
    z = np.where(est.se > 0, np.abs(est.mean - dp) / np.where(est.se > 0, est.se, 1), 0.0)
    ok = np.abs(est.mean - dp) <= O.SE_MULTIPLIER * est.se + est.bias_bound
    rows = [(args.state, j, dp[j], est.mean[j], est.se[j], z[j], bool(ok[j]))
            for j in range(mdp.n_states)]
    out = _out_dir(args)
    write_text(out / "agreement.csv", rows_to_csv(
        ["state", "target", "dp", "mc", "se", "z", "within"], rows))
    value, se = est.functional(env.r_bar)
    truth = float(dp @ env.r_bar)
    write_text(out / "value.csv", rows_to_csv(
        ["state", "dp_value", "mc_value", "se"], [(args.state, truth, value, se)]))
    write_manifest(out, "oracle", argv, args.seed, env.config)
    _echo(args, f"{int(ok.sum())}/{ok.size} entries within 3 SE; "
                f"value dp {truth:.4f} mc {value:.4f} +- {se:.4f}")
    return EXIT_OK


def cmd_check(args, argv):
    from .acceptance import CRITERIA, run_all

    only = args.only
    if only and any(k not in CRITERIA for k in only):
        raise ConfigError(f"unknown criterion in {only}; valid: {sorted(CRITERIA)}")
    results = run_all(only, seed=args.seed, echo=None if args.quiet else print)
    out = _out_dir(args)
    write_text(out / "acceptance.csv", rows_to_csv(
        ["criterion", "name", "passed", "detail"],
        [(r.number, r.name, r.passed, r.detail) for r in results]))
    write_manifest(out, "check", argv, args.seed, {"only": only})
    return EXIT_OK if all(r.ok for r in results) else EXIT_ACCEPTANCE


def cmd_rerun(args, argv):
    manifest = json.loads(Path(args.manifest).read_text())
    old = list(manifest["argv"])
    if "--out" in old:
        i = old.index("--out")
        del old[i:i + 2]
    return main(old + ["--out", args.out])


COMMANDS = {"eval": cmd_eval, "learn": cmd_learn, "gpi": cmd_gpi, "forage": cmd_forage,
            "oracle": cmd_oracle, "check": cmd_check, "rerun": cmd_rerun}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LambdaRepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: solving, sweeping, learning and self-verification.

Subcommands: solve, arq, search-eta, simulate, learn, sweep, verify.  Single
results print JSON to stdout; tables are written as CSV with a stable header
(schema tag in the first column).  Relative output paths are resolved against
$AOI_SCHED_OUTDIR when set.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import arq
from .exact import evaluate_exact
from .lagrange import EtaSearchConfig, search_eta_star, solve_constrained
from .mdp import Action, ChannelModel, Truncation
from .policies import PeriodicPolicy, ThresholdPolicy
from .rvi import SolverConfig, bellman_residual, solve
from .sarsa import LearnerConfig, train
from .simulate import baseline_periodic, evaluate_simulated, run

STATS_SCHEMA = "aoi-stats-1"
SWEEP_SCHEMA = "aoi-sweep-1"
TRACE_SCHEMA = "aoi-trace-1"


def _outpath(name: str | None) -> Path | None:
    if name is None:
        return None
    path = Path(name)
    base = os.environ.get("AOI_SCHED_OUTDIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p0", type=float, default=0.5, help="first-attempt error probability")
    p.add_argument(
        "--lam", "--lambda", dest="lam", type=float, default=1.0,
        help="per-retransmission error decay",
    )
    p.add_argument("--rmax", type=int, default=0, help="retransmission cap (ARQ: 0)")
    p.add_argument("--nmax", type=int, default=150, help="age cap of the solver truncation")


def _model_from(args) -> tuple[ChannelModel, Truncation]:
    model = ChannelModel(args.p0, args.lam, args.rmax)
    trunc = Truncation(args.nmax, max(args.rmax, 0))
    return model, trunc


def _stats_row(policy_id, p0, lam, r_max, c_max, stats):
    return [
        STATS_SCHEMA,
        policy_id,
        p0,
        lam,
        r_max,
        c_max,
        f"{stats.mean_aoi:.12g}",
        f"{stats.var_aoi:.12g}",
        f"{stats.mean_cost:.12g}",
    ]


STATS_HEADER = [
    "schema",
    "policy",
    "p0",
    "lam",
    "r_max",
    "c_max",
    "mean_aoi",
    "var_aoi",
    "mean_cost",
]


def cmd_solve(args) -> int:
    model, trunc = _model_from(args)
    cfg = SolverConfig(epsilon=args.epsilon, max_iters=args.max_iters)
    out = solve(model, trunc, args.eta, cfg, unconstrained=args.unconstrained)
    res = evaluate_exact(out.policy, model, trunc)
    if args.out:
        rows = []
        for s in sorted(out.h):
            q_vals = [out.q.get((s, a), "") for a in Action]
            q_fmt = [f"{v:.12g}" if v != "" else "" for v in q_vals]
            rows.append(
                [s.delta, s.r, f"{out.h[s]:.12g}", *q_fmt, out.policy.actions[s].code]
            )
        _write_csv(
            _outpath(args.out),
            ["delta", "r", "h", "q_idle", "q_new", "q_retx", "action"],
            rows,
        )
    summary = {
        "eta": args.eta,
        "gain": out.gain,
        "iterations": out.iterations,
        "residual": out.residual,
        "avg_aoi": res.avg_aoi,
        "avg_cost": res.avg_cost,
    }
    if args.rmax == 0:
        transmit_ages = [s.delta for s, a in out.policy.actions.items() if a != Action.IDLE]
        summary["threshold"] = min(transmit_ages) if transmit_ages else None
    print(json.dumps(summary, indent=2))
    return 0


def cmd_arq(args) -> int:
    rt = arq.optimal_policy(args.p, args.cmax)
    record = {
        "p": args.p,
        "c_max": args.cmax,
        "delta_cmax": rt.delta_cmax,
        "delta1": rt.delta1,
        "delta2": rt.delta2,
        "mu_star": rt.mu_star,
        "transmit_prob": rt.transmit_prob,
        "avg_cost": rt.avg_cost,
        "avg_aoi": rt.avg_aoi,
    }
    if args.format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(record.keys())
        writer.writerow(record.values())
    else:
        print(json.dumps(record, indent=2))
    return 0


def cmd_search_eta(args) -> int:
    model, trunc = _model_from(args)
    cfg = EtaSearchConfig(eta0=args.eta0, xi=args.xi, max_steps=args.max_steps)
    result = search_eta_star(model, trunc, args.cmax, cfg)
    if args.trace_out:
        _write_csv(
            _outpath(args.trace_out),
            ["step", "eta", "avg_cost", "avg_aoi", "gain", "phase"],
            [
                [row.step, f"{row.eta:.12g}", f"{row.avg_cost:.12g}", f"{row.avg_aoi:.12g}", f"{row.gain:.12g}", row.phase]
                for row in result.trace
            ],
        )
    print(
        json.dumps(
            {
                "eta_star": result.eta_star,
                "bracket": list(result.bracket),
                "exact_hit": result.exact_hit,
                "probes": len(result.trace),
            },
            indent=2,
        )
    )
    return 0


def _build_policy(args, model, trunc):
    kind = args.policy
    if kind == "threshold":
        return ThresholdPolicy(args.threshold, args.transmit_prob)
    if kind == "periodic":
        return baseline_periodic(args.cmax)
    if kind == "always-new":
        return ThresholdPolicy(1, 1.0)
    if kind == "optimal":
        return solve_constrained(model, trunc, args.cmax).mixed
    if kind == "arq-optimal":
        return arq.optimal_policy(model.p0, args.cmax).policy()
    raise ValueError(f"unknown policy kind {kind!r}")


def cmd_simulate(args) -> int:
    model, trunc = _model_from(args)
    policy = _build_policy(args, model, trunc)
    stats = evaluate_simulated(policy, model, args.horizon, args.reps, args.seed)
    if args.trace_out:
        _, trace = run(policy, model, min(args.horizon, args.trace_slots), args.seed, collect_trace=True)
        _write_csv(
            _outpath(args.trace_out),
            ["t", "delta", "r", "action", "success"],
            [
                [rec.t, rec.state_before.delta, rec.state_before.r, rec.action.code,
                 "" if rec.success is None else int(rec.success)]
                for rec in trace
            ],
        )
    if args.out:
        _write_csv(
            _outpath(args.out),
            STATS_HEADER,
            [_stats_row(policy.describe(), model.p0, model.lam, model.r_max, args.cmax, stats)],
        )
    print(
        json.dumps(
            {
                "policy": policy.describe(),
                "mean_aoi": stats.mean_aoi,
                "var_aoi": stats.var_aoi,
                "mean_cost": stats.mean_cost,
                "var_cost": stats.var_cost,
                "horizon": args.horizon,
                "replications": args.reps,
            },
            indent=2,
        )
    )
    return 0


def cmd_learn(args) -> int:
    model, trunc = _model_from(args)
    cfg_common = dict(
        trunc=trunc,
        tau=args.tau,
        eta0=args.eta0,
        eta_adapt=not args.no_eta_adapt,
        eta_step=args.eta_step,
        c_max=args.cmax,
        horizon=args.steps,
    )
    if args.steps == 0:
        if args.timeline_out:
            _write_csv(
                _outpath(args.timeline_out),
                ["n", "mean_running_aoi", "var_running_aoi", "mean_running_cost", "mean_eta", "mean_gain"],
                [],
            )
        print(json.dumps({"replications": args.reps, "steps": 0}))
        return 0

    aoi = np.zeros((args.reps, args.steps))
    cost = np.zeros((args.reps, args.steps))
    etas = np.zeros((args.reps, args.steps))
    gains = np.zeros((args.reps, args.steps))
    final_state = None
    for rep in range(args.reps):
        ls, tl = train(model, LearnerConfig(seed=args.seed + rep, **cfg_common))
        aoi[rep], cost[rep] = tl.running_aoi, tl.running_cost
        etas[rep], gains[rep] = tl.eta, tl.gain
        if rep == 0:
            final_state = ls

    if args.timeline_out:
        stride = max(1, args.steps // args.timeline_points)
        idx = list(range(stride - 1, args.steps, stride))
        if idx[-1] != args.steps - 1:
            idx.append(args.steps - 1)
        _write_csv(
            _outpath(args.timeline_out),
            ["n", "mean_running_aoi", "var_running_aoi", "mean_running_cost", "mean_eta", "mean_gain"],
            [
                [k + 1, f"{aoi[:, k].mean():.12g}",
                 f"{(aoi[:, k].var(ddof=1) if args.reps > 1 else 0.0):.12g}",
                 f"{cost[:, k].mean():.12g}", f"{etas[:, k].mean():.12g}", f"{gains[:, k].mean():.12g}"]
                for k in idx
            ],
        )
    if args.qtable_out and final_state is not None:
        rows = []
        for i, s in enumerate(final_state.space.states):
            vals = [
                f"{final_state.q[i, a]:.12g}" if final_state.space.admissible[i, a] else ""
                for a in Action
            ]
            rows.append([s.delta, s.r, *vals])
        _write_csv(_outpath(args.qtable_out), ["delta", "r", "q_idle", "q_new", "q_retx"], rows)

    summary = {
        "replications": args.reps,
        "steps": args.steps,
        "final_mean_running_aoi": float(aoi[:, -1].mean()),
        "final_mean_running_cost": float(cost[:, -1].mean()),
    }
    if args.compare_rvi:
        sol = solve_constrained(model, trunc, args.cmax)
        summary["rvi_mixture_aoi"] = sol.achieved_aoi
        summary["rvi_mixture_cost"] = sol.achieved_cost
        summary["gap"] = summary["final_mean_running_aoi"] - sol.achieved_aoi
    print(json.dumps(summary, indent=2))
    return 0


def _sweep_point(task):
    protocol, p0, lam, r_max, c_max, n_max, horizon, reps, seed = task
    try:
        if protocol == "arq":
            model = ChannelModel(p0, 1.0, 0)
            trunc = Truncation(n_max, 0)
            rt = arq.optimal_policy(p0, c_max)
            policy = rt.policy()
            exact_aoi, exact_cost = rt.avg_aoi, rt.avg_cost
            eta_star = ""
        elif protocol == "harq":
            model = ChannelModel(p0, lam, r_max)
            trunc = Truncation(n_max, r_max)
            sol = solve_constrained(model, trunc, c_max)
            policy = sol.mixed
            exact_aoi, exact_cost = sol.achieved_aoi, sol.achieved_cost
            eta_star = f"{sol.eta_star:.12g}"
        elif protocol == "baseline":
            model = ChannelModel(p0, lam, r_max)
            trunc = Truncation(n_max, r_max)
            policy = baseline_periodic(c_max)
            res = evaluate_exact(policy, model, trunc)
            exact_aoi, exact_cost = res.avg_aoi, res.avg_cost
            eta_star = ""
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
        if horizon > 0:
            stats = evaluate_simulated(policy, model, horizon, reps, seed)
            sim = [f"{stats.mean_aoi:.12g}", f"{stats.var_aoi:.12g}", f"{stats.mean_cost:.12g}"]
        else:
            sim = ["", "", ""]
        return [
            SWEEP_SCHEMA, protocol, p0, lam, r_max, c_max, eta_star,
            f"{exact_aoi:.12g}", f"{exact_cost:.12g}", *sim, "",
        ]
    except Exception as exc:  # per-point failures become rows, the sweep continues
        return [SWEEP_SCHEMA, protocol, p0, lam, r_max, c_max, "", "", "", "", "", "", f"{type(exc).__name__}: {exc}"]


SWEEP_HEADER = [
    "schema", "protocol", "p0", "lam", "r_max", "c_max", "eta_star",
    "exact_aoi", "exact_cost", "sim_mean_aoi", "sim_var_aoi", "sim_mean_cost", "error",
]


def cmd_sweep(args) -> int:
    file_cfg = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)

    def pick(name, default):
        flag = getattr(args, name.replace("-", "_"), None)
        if flag is not None:
            return flag
        return file_cfg.get(name, default)

    p0s = pick("p0", [0.5])
    lams = pick("lam", [0.5])
    rmaxs = pick("rmax", [3])
    cmaxs = pick("cmax", [round(0.1 * k, 10) for k in range(1, 11)])
    protocols = pick("protocols", ["arq", "harq", "baseline"])
    horizon = pick("horizon", 10_000)
    reps = pick("reps", 1000 if not args.quick else 50)
    n_max = pick("nmax", 150)
    seed = pick("seed", 0)
    if args.quick:
        horizon = min(horizon, 2000)
        reps = min(reps, 50)

    tasks = [
        (prot, p0, lam, rmax, cmax, n_max, horizon, reps, seed)
        for p0, lam, rmax, cmax, prot in itertools.product(p0s, lams, rmaxs, cmaxs, protocols)
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]

    out = _outpath(args.out)
    if out:
        _write_csv(out, SWEEP_HEADER, rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(SWEEP_HEADER)
        writer.writerows(rows)
    failures = sum(1 for r in rows if r[-1])
    print(f"# sweep: {len(rows)} points, {failures} failed", file=sys.stderr)
    return 0


def _verify_checks(quick: bool, perturb: str | None):
    """Cross-module oracle suites; ``perturb`` deliberately breaks one identity."""
    tol_rel = 1e-8

    def bump(name, x):
        return x + 1e-3 if perturb == name else x

    # Closed-form threshold cost/age against exact chain evaluation.
    ps = [0.2, 0.5, 0.8] if quick else [0.1, 0.3, 0.5, 0.7, 0.9]
    deltas = [1, 2, 5, 9] if quick else [1, 2, 3, 5, 8, 13, 21, 34, 50]
    worst = 0.0
    for p in ps:
        model = ChannelModel(p, 1.0, 0)
        for d in deltas:
            extra = int(math.ceil(math.log(1e-13) / math.log(p))) + 2 if p > 0 else 4
            res = evaluate_exact(ThresholdPolicy(d), model, Truncation(d + extra, 0))
            c_err = abs(res.avg_cost - bump("arq-cost", arq.cost_of_threshold(p, d)))
            j_err = abs(res.avg_aoi - bump("arq-aoi", arq.aoi_of_threshold(p, d))) / arq.aoi_of_threshold(p, d)
            worst = max(worst, c_err, j_err)
    yield "arq-closed-forms-vs-exact-chain", worst <= tol_rel, f"max rel err {worst:.2e}"

    # Lagrangian identity: L == J + eta * C.
    worst = 0.0
    for p in ps:
        for d in deltas:
            for eta in (0.5, 2.0, 10.0, 40.0):
                lhs = arq.lagrangian_cost(p, d, eta)
                rhs = bump("lagrangian-identity", arq.aoi_of_threshold(p, d) + eta * arq.cost_of_threshold(p, d))
                worst = max(worst, abs(lhs - rhs) / abs(rhs))
    yield "lagrangian-identity", worst <= 1e-12, f"max rel err {worst:.2e}"

    # Closed-form threshold candidates against brute-force minimization.
    etas = [0.5, 2.0, 7.0, 19.0] if quick else [0.5, 1.0, 2.0, 5.0, 10.0, 19.0, 33.0, 50.0]
    ok = True
    detail = ""
    for p in ps:
        for eta in etas:
            grid = range(1, 301 if quick else 1001)
            values = {d: bump("lemma2", arq.lagrangian_cost(p, d, eta)) for d in grid}
            best = min(values, key=values.get)
            lo, hi = arq.threshold_candidates(p, eta)
            if min(values[lo], values[hi]) > values[best] + 1e-12 * abs(values[best]):
                ok = False
                detail = f"p={p} eta={eta}: brute-force {best} beats candidates ({lo},{hi})"
                break
    yield "threshold-candidates-vs-brute-force", ok, detail or "candidates attain the minimum"

    # RVI on an ARQ instance: threshold structure within the candidate pair.
    p, eta = 0.5, 10.0
    model = ChannelModel(p, 1.0, 0)
    trunc = Truncation(120 if quick else 500, 0)
    out = solve(model, trunc, eta)
    acts = out.policy.actions
    tx_ages = sorted(s.delta for s, a in acts.items() if a != Action.IDLE)
    thr = tx_ages[0] if tx_ages else None
    is_thresh = thr is not None and all(
        (a != Action.IDLE) == (s.delta >= thr) for s, a in acts.items()
    )
    lo, hi = arq.threshold_candidates(p, eta)
    resid = bellman_residual(out, model, trunc, eta)
    ok = is_thresh and thr in (lo, hi) and resid <= bump("rvi-residual", 2e-8)
    yield "rvi-threshold-structure", ok, f"threshold={thr} candidates=({lo},{hi}) residual={resid:.2e}"

    # Budget met with equality by the constructed mixture.
    cases = [(0.5, 1.0, 0, 0.35)] if quick else [(0.5, 1.0, 0, 0.35), (0.3, 0.5, 3, 0.4)]
    worst = 0.0
    for p0, lam, rmax, cmax in cases:
        model = ChannelModel(p0, lam, rmax)
        sol = solve_constrained(model, Truncation(120, rmax), cmax)
        worst = max(worst, abs(sol.achieved_cost - bump("budget-equality", cmax)))
    yield "budget-met-with-equality", worst <= 1e-6, f"max |cost - budget| {worst:.2e}"

    # Simulation agrees with exact evaluation within 3 standard errors.
    model = ChannelModel(0.5, 0.5, 3)
    trunc = Truncation(100, 3)
    horizon, reps = (20_000, 8) if quick else (200_000, 8)
    sims = [
        ("threshold", ThresholdPolicy(4)),
        ("periodic", PeriodicPolicy(3)),
    ]
    ok = True
    detail = ""
    for name, pol in sims:
        exact_res = evaluate_exact(pol, model, trunc)
        stats = evaluate_simulated(pol, model, horizon, reps, seed=7)
        se = math.sqrt(stats.var_aoi / reps) if stats.var_aoi > 0 else 0.0
        err = abs(stats.mean_aoi - bump("sim-vs-exact", exact_res.avg_aoi))
        if err > 3.0 * se + 1e-3:
            ok = False
            detail = f"{name}: |sim-exact|={err:.4g} > 3se={3 * se:.4g}"
            break
    yield "simulation-vs-exact-evaluation", ok, detail or "all policies within 3 standard errors"


def cmd_verify(args) -> int:
    failures = 0
    for name, ok, detail in _verify_checks(args.quick, args.perturb):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failures += 0 if ok else 1
    print(f"# verify: {failures} failure(s)")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aoi-sched", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="relative value iteration for a fixed charge")
    _model_args(p)
    p.add_argument("--eta", type=float, default=5.0)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=1_000_000)
    p.add_argument("--unconstrained", action="store_true", help="budget-free mode: idling removed")
    p.add_argument("--out", help="CSV dump of h/Q/policy tables")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("arq", help="closed-form optimal randomized threshold")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--cmax", type=float, required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_arq)

    p = sub.add_parser("search-eta", help="multiplier search for a budget")
    _model_args(p)
    p.add_argument("--cmax", type=float, required=True)
    p.add_argument("--eta0", type=float, default=1.0)
    p.add_argument("--xi", type=float, default=0.2)
    p.add_argument("--max-steps", type=int, default=40)
    p.add_argument("--trace-out", help="CSV trace of (step, eta, cost, aoi, gain)")
    p.set_defaults(func=cmd_search_eta)

    p = sub.add_parser("simulate", help="Monte-Carlo evaluation of a policy")
    _model_args(p)
    p.add_argument("--policy", choices=("threshold", "periodic", "always-new", "optimal", "arq-optimal"), default="threshold")
    p.add_argument("--threshold", type=int, default=4)
    p.add_argument("--transmit-prob", type=float, default=1.0)
    p.add_argument("--cmax", type=float, default=0.4)
    p.add_argument("--horizon", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="stats CSV")
    p.add_argument("--trace-out", help="slot trace CSV (first --trace-slots slots)")
    p.add_argument("--trace-slots", type=int, default=1000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="online learning without channel knowledge")
    _model_args(p)
    p.add_argument("--cmax", type=float, default=0.4)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--eta0", type=float, default=2.0)
    p.add_argument("--eta-step", type=float, default=0.5)
    p.add_argument("--no-eta-adapt", action="store_true")
    p.add_argument("--timeline-out", help="aggregated learning-curve CSV")
    p.add_argument("--timeline-points", type=int, default=200)
    p.add_argument("--qtable-out", help="final table CSV (first replication)")
    p.add_argument("--compare-rvi", action="store_true", help="append planned-policy reference")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("sweep", help="grid experiments over budgets and channels")
    p.add_argument("--config", help="JSON experiment config; flags override")
    p.add_argument("--p0", type=float, nargs="+")
    p.add_argument("--lam", type=float, nargs="+")
    p.add_argument("--rmax", type=int, nargs="+")
    p.add_argument("--cmax", type=float, nargs="+")
    p.add_argument("--protocols", nargs="+", choices=("arq", "harq", "baseline"))
    p.add_argument("--horizon", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--nmax", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="reduced horizon and replications")
    p.add_argument("--out", help="sweep CSV (stdout when omitted)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the cross-module oracle suites")
    p.add_argument("--quick", action="store_true", help="reduced grids, finishes in seconds")
    p.add_argument("--perturb", help=argparse.SUPPRESS)  # negative-control hook
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

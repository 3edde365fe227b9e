"""Command-line driver: ``bassmle {simulate,fit,experiment,verify}``.

Exit codes: 0 success, 1 inequality violated, 2 invalid input, 3 too few adoptions.
"""

import argparse
import json
import math
import os
import sys

from .estimator import fit_mle, fit_mle_natural
from .experiments import (
    MseReport,
    MseRow,
    TheoremConstants,
    run_diagnostics,
    run_m_invariance_check,
    run_mse_experiment,
    verify_theorem_bound,
)
from .io import (
    FormatError,
    dumps_json,
    load_experiment_config,
    load_sim_config,
    read_path,
    read_price_csv,
    report_csv,
    report_json,
    write_path,
)
from .model import MarketParams, TransformedParams, from_transformed, make_response, to_transformed
from .pricing import ConstantPolicy, SchedulePolicy
from .simulate import SimConfig, simulate
from .validation import InsufficientDataError

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID, EXIT_INSUFFICIENT = 0, 1, 2, 3

REFERENCE = {"alpha": 0.3, "beta": 0.1, "m": 2000}


class _Invalid(Exception):
    pass


def _params_from_args(args, m, required=True):
    natural = args.alpha is not None or args.beta is not None
    transformed = args.alpha_p is not None or args.beta_p is not None
    if natural and transformed:
        raise _Invalid("give --alpha/--beta or --alpha-p/--beta-p, not both")
    if natural:
        if args.alpha is None or args.beta is None:
            raise _Invalid("--alpha and --beta must be given together")
        return MarketParams(args.alpha, args.beta, m)
    if transformed:
        if args.alpha_p is None or args.beta_p is None:
            raise _Invalid("--alpha-p and --beta-p must be given together")
        return from_transformed(TransformedParams(args.alpha_p, args.beta_p), m)
    if required:
        raise _Invalid("missing parameters: --alpha/--beta or --alpha-p/--beta-p")
    return MarketParams(REFERENCE["alpha"], REFERENCE["beta"], m)


def _add_param_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha-p", type=float)
    p.add_argument("--beta-p", type=float)


def cmd_simulate(args):
    if args.config:
        cfg = load_sim_config(args.config)
    else:
        if args.m is None:
            raise _Invalid("--m is required")
        params = _params_from_args(args, args.m)
        if (args.horizon is None) == (args.target_n is None):
            raise _Invalid("give exactly one of --horizon and --target-n")
        if args.price_file and args.price is not None:
            raise _Invalid("give --price or --price-file, not both")
        if args.price_file:
            policy = SchedulePolicy(read_price_csv(args.price_file))
        else:
            policy = ConstantPolicy(0.0 if args.price is None else args.price)
        cfg = SimConfig(params, make_response(args.x), policy, horizon=args.horizon,
                        target_n=args.target_n, seed=args.seed, tail=args.tail)
    if args.transformed:
        tp = to_transformed(cfg.params)
    path = simulate(cfg)
    write_path(path, args.out)
    final = path.adoption_times[-1] if path.n else 0.0
    line = f"n={path.n} final_time={_show(final)} horizon={_show(path.horizon)} seed={cfg.seed}"
    if args.transformed:
        line += f" alpha_p={_show(tp.alpha_p)} beta_p={_show(tp.beta_p)}"
    print(line)
    return EXIT_OK


def _show(v):
    return repr(float(v))


def cmd_fit(args):
    try:
        path = read_path(args.path)
    except OSError as exc:
        raise _Invalid(f"cannot read path file: {exc}") from None
    x = make_response(args.x)
    out = {}
    if args.parametrization in ("transformed", "both"):
        out["transformed"] = fit_mle(path, x).to_dict()
    if args.parametrization in ("natural", "both"):
        out["natural"] = fit_mle_natural(path, x).to_dict()
    doc = out if args.parametrization == "both" else out[args.parametrization]
    text = dumps_json(doc)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args):
    config = load_experiment_config(args.config)
    os.makedirs(args.out_dir, exist_ok=True)
    report = run_mse_experiment(config)
    tp0 = config.true_transformed
    constants = TheoremConstants.from_params(tp0, config.delta_bar_1, config.delta_bar_2)
    bound = verify_theorem_bound(report, constants, tp0)
    invariance = None
    if config.m_grid:
        n_inv = config.invariance_n or config.n_grid[0]
        invariance = run_m_invariance_check(config, config.m_grid, n_inv)
    with open(os.path.join(args.out_dir, "report.csv"), "w") as fh:
        fh.write(report_csv(report))
    with open(os.path.join(args.out_dir, "report.json"), "w") as fh:
        fh.write(report_json(config, report, bound, invariance))
    lo, hi = report.slope_ci
    print(f"slope={report.slope:.4f} ci95=[{lo:.4f}, {hi:.4f}] "
          f"slope_beta_natural={report.slope_beta_natural:.4f}")
    invalid = [r.n for r in report.rows if r.invalid]
    if invalid:
        print(f"rows with >5% excluded fits: n={invalid}")
    print(f"bound_check={'pass' if bound.passed else 'fail'} alpha_theta={bound.alpha_theta:.6g} "
          f"empirical_constant={bound.empirical_constant:.6g} delta_bar_needed={bound.delta_bar_needed:.6g}")
    if invariance is not None:
        print(f"m_invariance slope={invariance.slope:.4f} {'pass' if invariance.passed else 'fail'}")
    return EXIT_OK


def _report_from_json(filename):
    try:
        with open(filename) as fh:
            doc = json.load(fh)
        rows = [MseRow(**{k: (math.nan if v is None else v) for k, v in r.items()})
                for r in doc["report"]["rows"]]
        config = doc["config"]
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise _Invalid(f"cannot read report: {exc}") from None
    rep = MseReport(rows, math.nan, (math.nan, math.nan), math.nan, (math.nan, math.nan), math.nan)
    return rep, config


def cmd_verify(args):
    failed = []
    checks = ["fisher", "hellinger", "bound"] if args.check == "all" else [args.check]
    m = args.m if args.m is not None else REFERENCE["m"]
    if args.beta_p is not None and args.alpha_p is None and args.alpha is None:
        # --beta-p alone is enough for the Fisher sandwich; alpha_p falls back to the reference
        reference = to_transformed(MarketParams(REFERENCE["alpha"], REFERENCE["beta"], m))
        tp = TransformedParams(reference.alpha_p, args.beta_p)
    else:
        tp = to_transformed(_params_from_args(args, m, required=False))
    if "fisher" in checks or "hellinger" in checks:
        n_values = [args.n] if args.n is not None else None
        deltas = [args.delta] if args.delta is not None else None
        states = [args.state] if args.state is not None else None
        diag = run_diagnostics(tp, m, deltas=deltas, states=states, n_values=n_values,
                               price=args.price, x=args.x, delta_bar_1=args.delta_bar_1,
                               delta_bar_2=args.delta_bar_2)
        if "fisher" in checks:
            for r in diag.fisher_rows:
                print(f"fisher n={r['n']} m={r['m']} beta_p={_show(r['beta_p'])} lower={_show(r['lower'])} "
                      f"exact={_show(r['exact'])} upper={_show(r['upper'])} {'ok' if r['holds'] else 'VIOLATED'}")
                if not r["holds"]:
                    failed.append(r)
        if "hellinger" in checks:
            bad = [r for r in diag.hellinger_rows if not (r["holds"] and r["affinity_le_exp"])]
            moved = [r for r in diag.hellinger_rows if r["delta"] > 0]
            worst = min(moved, key=lambda r: r["hellinger_sq"] / r["kl_bound"], default=None)
            print(f"hellinger rows={len(diag.hellinger_rows)} skipped={diag.skipped} violations={len(bad)}")
            if worst is not None:
                print(f"hellinger tightest: state={worst['state']} direction={worst['direction']} "
                      f"delta={_show(worst['delta'])} hellinger_sq={_show(worst['hellinger_sq'])} "
                      f"bound={_show(worst['kl_bound'])}")
            for r in bad:
                print(f"VIOLATED hellinger: {r}")
            failed += bad
    if "bound" in checks:
        if args.report:
            report, cfg_doc = _report_from_json(args.report)
            try:
                tp0 = to_transformed(MarketParams(cfg_doc["alpha"], cfg_doc["beta"], cfg_doc["m"]))
            except (KeyError, ValueError) as exc:
                raise _Invalid(f"report config unusable: {exc}") from None
            db1, db2 = cfg_doc.get("delta_bar_1", 1.0), cfg_doc.get("delta_bar_2", 1.0)
        elif args.config:
            config = load_experiment_config(args.config)
            report = run_mse_experiment(config)
            tp0, db1, db2 = config.true_transformed, config.delta_bar_1, config.delta_bar_2
        else:
            report = None
            if args.check == "bound":
                raise _Invalid("--check bound needs --report or --config")
            print("bound: skipped (no --report or --config)")
        if report is not None:
            bound = verify_theorem_bound(report, TheoremConstants.from_params(tp0, db1, db2), tp0)
            for r in bound.rows:
                print(f"bound n={r['n']} mse_total={_show(r['mse_total'])} limit={_show(r['bound'])} "
                      f"{'ok' if r['passed'] else 'VIOLATED'}")
            print(f"bound empirical_constant={_show(bound.empirical_constant)} alpha_theta={_show(bound.alpha_theta)} "
                  f"delta_bar_needed={_show(bound.delta_bar_needed)}")
            failed += [r for r in bound.rows if not r["passed"]]
    print("verify: " + ("FAIL" if failed else "pass"))
    return EXIT_VIOLATION if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="bassmle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one adoption path")
    _add_param_flags(p)
    p.add_argument("--m", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--target-n", type=int)
    p.add_argument("--tail", type=float, default=0.0, help="observation window after the n-th adoption")
    p.add_argument("--price", type=float)
    p.add_argument("--price-file")
    p.add_argument("--x", choices=["const", "exp"], default="const")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON simulation config (replaces the parameter flags)")
    p.add_argument("--transformed", action="store_true", help="also report (alpha_p, beta_p)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood fit of a path file")
    p.add_argument("--path", required=True)
    p.add_argument("--x", choices=["const", "exp"], default="const")
    p.add_argument("--report")
    p.add_argument("--parametrization", choices=["transformed", "natural", "both"], default="transformed")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="Monte Carlo MSE experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="check the bound's inequalities")
    p.add_argument("--check", choices=["fisher", "hellinger", "bound", "all"], default="all")
    _add_param_flags(p)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--state", type=int)
    p.add_argument("--price", type=float, default=0.0)
    p.add_argument("--x", choices=["const", "exp"], default="const")
    p.add_argument("--delta-bar-1", type=float, default=1.0)
    p.add_argument("--delta-bar-2", type=float, default=1.0)
    p.add_argument("--config")
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (_Invalid, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

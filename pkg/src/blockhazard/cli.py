"""Command-line surface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``evaluate``, ``ablate``,
``bench``.  Options can come from an INI-style config file (sections ``sim``,
``fit``, ``run``) with command-line flags taking precedence.  Exit codes:
0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import bench as bench_mod
from .data import validate
from .estimator import FitConfig, fit
from .io import (
    PanelFormatError,
    read_panel_csv,
    write_fit_json,
    write_panel_csv,
    write_policy_csv,
)
from .links import LinkFunction
from .metrics import average_auc, concordance_index, normalized_mse
from .policy import cumulative_regret, decision_accuracy, policy_table
from .simulate import SimConfig, generate_synthetic

__all__ = ["main", "cli"]


def _build_parser():
    parser = argparse.ArgumentParser(prog="blockhazard")
    parser.add_argument("--config", help="INI config file with sim/fit/run sections")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic panel + truth tensor")
    sim.add_argument("--n", type=int)
    sim.add_argument("--t", type=int)
    sim.add_argument("--k", type=int)
    sim.add_argument("--censor-frac", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out-dir", default=".")

    fit_p = sub.add_parser("fit", help="fit the block hazard model to a panel CSV")
    fit_p.add_argument("--panel", required=True)
    fit_p.add_argument("--ranks", help="comma-separated r1,r2,r3")
    fit_p.add_argument("--max-iter", type=int)
    fit_p.add_argument("--stepsize", type=float)
    fit_p.add_argument("--weight-source", choices=["entropy-balance", "uniform", "provided"])
    fit_p.add_argument("--link", choices=["logistic", "probit", "laplacian"])
    fit_p.add_argument("--sigma", type=float)
    fit_p.add_argument("--seed", type=int)
    fit_p.add_argument("--out", default="fit.json")

    pred = sub.add_parser("predict", help="write the policy table for a fitted model")
    pred.add_argument("--fit", required=True)
    pred.add_argument("--k", type=int, required=True)
    pred.add_argument("--out", default="policy.csv")

    ev = sub.add_parser("evaluate", help="score a fit against truth or held-out data")
    ev.add_argument("--fit", required=True)
    ev.add_argument("--truth", help="truth tensor JSON from simulate")
    ev.add_argument("--panel", help="held-out panel CSV for C-index / AUC")
    ev.add_argument("--out", default="metrics.json")

    ab = sub.add_parser("ablate", help="run the ablation grid")
    ab.add_argument("--cells", default="300,5,3;100,5,2", help="semicolon-separated N,T,k")
    ab.add_argument("--reps", type=int, default=20)
    ab.add_argument("--workers", type=int, default=os.cpu_count())
    ab.add_argument("--out-dir", default=".")

    be = sub.add_parser("bench", help="run the convergence benchmark grid")
    be.add_argument("--n-values", default="100,300,500,1000,2000")
    be.add_argument("--t", type=int, default=5)
    be.add_argument("--k", type=int, default=2)
    be.add_argument("--reps", type=int, default=20)
    be.add_argument("--workers", type=int, default=os.cpu_count())
    be.add_argument("--out-dir", default=".")
    return parser


def _load_config(path):
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise PanelFormatError(f"config file {path!r} not found")
    return cp


def _merged(args, section, cp, key, cast, default):
    cli_val = getattr(args, key.replace("-", "_"), None)
    if cli_val is not None:
        return cli_val
    if cp is not None and cp.has_option(section, key):
        return cast(cp.get(section, key))
    return default


def _cmd_simulate(args, cp):
    cfg = SimConfig(
        N=_merged(args, "sim", cp, "n", int, 100),
        T=_merged(args, "sim", cp, "t", int, 5),
        k=_merged(args, "sim", cp, "k", int, 2),
        censor_frac=_merged(args, "sim", cp, "censor-frac", float, 0.2),
        seed=_merged(args, "sim", cp, "seed", int, 0),
    )
    panel, theta_true, _ = generate_synthetic(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    write_panel_csv(panel, os.path.join(args.out_dir, "panel.csv"))
    with open(os.path.join(args.out_dir, "theta_true.json"), "w") as fh:
        json.dump({"dims": list(theta_true.shape), "data": theta_true.tolist()}, fh)
    print(f"wrote panel.csv and theta_true.json to {args.out_dir}")
    return 0


def _cmd_fit(args, cp):
    panel = read_panel_csv(args.panel)
    problems = validate(panel)
    if problems:
        print("invalid panel: " + "; ".join(problems[:5]), file=sys.stderr)
        return 1
    ranks_str = _merged(args, "fit", cp, "ranks", str, None)
    ranks = tuple(int(v) for v in ranks_str.split(",")) if ranks_str else (1, 1, min(panel.n_arms, panel.k + 1))
    if len(ranks) != 3:
        print("ranks must be three comma-separated integers", file=sys.stderr)
        return 1
    if ranks[0] > panel.N or ranks[1] > panel.T or ranks[2] > panel.n_arms:
        print(
            f"ranks {ranks} exceed panel bounds (N={panel.N}, T={panel.T}, L={panel.n_arms})",
            file=sys.stderr,
        )
        return 1
    cfg = FitConfig(
        ranks=ranks,
        max_iter=_merged(args, "fit", cp, "max-iter", int, 1000),
        stepsize=_merged(args, "fit", cp, "stepsize", float, None),
        weight_source=_merged(args, "fit", cp, "weight-source", str, "entropy-balance"),
        link=LinkFunction(
            _merged(args, "fit", cp, "link", str, "logistic"),
            _merged(args, "fit", cp, "sigma", float, 1.0),
        ),
        seed=_merged(args, "fit", cp, "seed", int, 0),
    )
    result = fit(panel, cfg)
    write_fit_json(result, args.out)
    print(
        f"fit finished: loglik={result.loss_trace[-1]:.6g} "
        f"iterations={result.iterations} converged={result.converged}"
    )
    return 0


def _load_theta(path):
    with open(path) as fh:
        payload = json.load(fh)
    key = "theta_hat" if "theta_hat" in payload else "data"
    return np.array(payload[key])


def _cmd_predict(args, cp):
    theta = _load_theta(args.fit)
    table = policy_table(theta, LinkFunction())
    write_policy_csv(table, args.k, args.out)
    print(f"wrote policy table to {args.out}")
    return 0


def _cmd_evaluate(args, cp):
    theta_hat = _load_theta(args.fit)
    link = LinkFunction()
    metrics = {}
    if args.truth:
        theta_true = _load_theta(args.truth)
        metrics["l2"] = normalized_mse(theta_hat, theta_true)
        truth_pol = policy_table(theta_true, link)
        est_pol = policy_table(theta_hat, link)
        metrics["regret"] = cumulative_regret(truth_pol.survival, est_pol.d_opt, truth_pol.d_opt)
        metrics["accuracy"] = decision_accuracy(est_pol.d_opt, truth_pol.d_opt)
    if args.panel:
        panel = read_panel_csv(args.panel)
        table = policy_table(theta_hat, link)
        arm = panel.arm_index()
        pred = table.lifetime[np.arange(panel.N), arm]
        times = panel.Y.sum(axis=1)
        metrics["c_index"] = concordance_index(pred, times, panel.delta)
        metrics["average_auc"] = average_auc(-pred, times, panel.delta, panel.T)
    if not metrics:
        print("nothing to evaluate: provide --truth and/or --panel", file=sys.stderr)
        return 1
    with open(args.out, "w") as fh:
        json.dump(metrics, fh, indent=2)
    for key, value in metrics.items():
        print(f"{key} = {value:.6g}")
    return 0


def _cmd_ablate(args, cp):
    cells = []
    for chunk in args.cells.split(";"):
        n, t, k = (int(v) for v in chunk.split(","))
        cells.append((n, t, k))
    rows = bench_mod.run_ablation(cells, reps=args.reps, workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    bench_mod.write_table_csv(rows, os.path.join(args.out_dir, "ablation.csv"))
    print(f"wrote ablation.csv to {args.out_dir}")
    return 0


def _cmd_bench(args, cp):
    n_values = tuple(int(v) for v in args.n_values.split(","))
    rows = bench_mod.run_convergence(
        n_values=n_values, t_values=(args.t,), k_values=(args.k,),
        reps=args.reps, workers=args.workers,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    bench_mod.write_table_csv(rows, os.path.join(args.out_dir, "convergence.csv"))
    bench_mod.write_plot_json(
        rows, "N", ["l2_mean", "misclass_mean"], os.path.join(args.out_dir, "convergence_plot.json")
    )
    print(f"wrote convergence.csv and convergence_plot.json to {args.out_dir}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "bench": _cmd_bench,
}


def cli(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cp = _load_config(args.config) if args.config else None
        return _COMMANDS[args.command](args, cp)
    except (PanelFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FloatingPointError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()

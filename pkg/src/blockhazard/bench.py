"""Seeded replication harness for the synthetic experiments.

Each replication generates a panel, fits the requested model variants and
scores recovery (normalized tensor MSE), clustering (permutation-minimized
misclassification), and decision quality (cumulative regret, accuracy)
against the generating truth.  Drivers aggregate replications into per-cell
tables with standard errors and emit CSV / plot-data JSON.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .estimator import FitConfig, fit, fit_group_glm, init_theta
from .links import LinkFunction
from .metrics import classification_error, normalized_mse
from .policy import cumulative_regret, decision_accuracy, policy_table
from .simulate import SimConfig, generate_synthetic, true_labels

__all__ = [
    "CellResult",
    "bench_fit_config",
    "run_replicate",
    "run_convergence",
    "run_ablation",
    "run_regret",
    "write_table_csv",
    "write_plot_json",
]

VARIANTS = ("group-w", "group", "factor-w", "GLM-w", "pooled-logit", "oracle")


def bench_fit_config(sim_cfg: SimConfig, **overrides) -> FitConfig:
    """Fit configuration used by the benchmark cells."""
    defaults = dict(
        ranks=(1, 1, sim_cfg.k + 1),
        max_iter=1000,
        weight_source="entropy-balance",
        stepsize=1.75e-5,
        covariate_assisted=True,
        seed=sim_cfg.seed,
    )
    defaults.update(overrides)
    return FitConfig(**defaults)


def run_replicate(
    sim_cfg: SimConfig,
    fit_cfg: FitConfig | None = None,
    variants: tuple[str, ...] = ("group-w",),
) -> dict:
    """One seeded replication; returns per-variant metric dicts."""
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown variants {sorted(unknown)}")
    if fit_cfg is None:
        fit_cfg = bench_fit_config(sim_cfg)
    panel, theta_true, _ = generate_synthetic(sim_cfg)
    link = LinkFunction("logistic", 1.0)
    z_true = true_labels(sim_cfg)
    truth_policy = policy_table(theta_true, link)
    out = {}
    for variant in variants:
        t0 = time.perf_counter()
        labels = None
        if variant == "group-w":
            res = fit(panel, replace(fit_cfg, weight_source="entropy-balance"))
            theta_hat, labels = res.theta_hat, res.labels
        elif variant == "group":
            res = fit(panel, replace(fit_cfg, weight_source="uniform"))
            theta_hat, labels = res.theta_hat, res.labels
        elif variant == "factor-w":
            res = fit(panel, replace(fit_cfg, mode3="factor", weight_source="entropy-balance"))
            theta_hat = res.theta_hat
        elif variant == "GLM-w":
            from .estimator import resolve_weights

            weighted = resolve_weights(panel, replace(fit_cfg, weight_source="entropy-balance"))
            theta_hat = fit_group_glm(weighted, z_true)
        elif variant == "pooled-logit":
            theta_hat = init_theta(panel, link)
        else:  # oracle
            theta_hat = theta_true
        runtime = time.perf_counter() - t0
        est_policy = policy_table(theta_hat, link)
        record = {
            "l2": normalized_mse(theta_hat, theta_true),
            "regret": cumulative_regret(truth_policy.survival, est_policy.d_opt, truth_policy.d_opt),
            "accuracy": decision_accuracy(est_policy.d_opt, truth_policy.d_opt),
            "runtime": runtime,
        }
        if labels is not None:
            record["misclass"] = classification_error(labels, z_true, sim_cfg.k + 1)
        out[variant] = record
    return out


def _replicate_star(args):
    return run_replicate(*args)


def _run_cells(cells, reps, variants, fit_overrides, workers, base_seed):
    """Runs reps replications per cell, optionally on a process pool."""
    jobs = []
    for cell_idx, (n, t, k) in enumerate(cells):
        for rep in range(reps):
            sim_cfg = SimConfig(N=n, T=t, k=k, seed=base_seed + 1000 * cell_idx + rep)
            fit_cfg = bench_fit_config(sim_cfg, **fit_overrides)
            jobs.append((cell_idx, (sim_cfg, fit_cfg, variants)))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_star, [j[1] for j in jobs]))
    else:
        results = [_replicate_star(j[1]) for j in jobs]
    per_cell = {i: [] for i in range(len(cells))}
    failures = {i: 0 for i in range(len(cells))}
    for (cell_idx, _), res in zip(jobs, results):
        if res is None:
            failures[cell_idx] += 1
        else:
            per_cell[cell_idx].append(res)
    return per_cell, failures


def _aggregate(records, variant, key):
    vals = np.array([r[variant][key] for r in records if key in r[variant]])
    if vals.size == 0:
        return np.nan, np.nan
    se = vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else 0.0
    return float(vals.mean()), float(se)


def run_convergence(
    n_values=(100, 300, 500, 1000, 2000),
    t_values=(5,),
    k_values=(2,),
    reps: int = 20,
    workers: int | None = None,
    base_seed: int = 0,
    fit_overrides: dict | None = None,
) -> list[dict]:
    """Estimation/clustering error versus sample size for the main method."""
    if reps < 2:
        raise ValueError("reps must be at least 2")
    cells = [(n, t, k) for t in t_values for k in k_values for n in n_values]
    per_cell, failures = _run_cells(
        cells, reps, ("group-w",), fit_overrides or {}, workers, base_seed
    )
    rows = []
    for idx, (n, t, k) in enumerate(cells):
        records = per_cell[idx]
        l2_mean, l2_se = _aggregate(records, "group-w", "l2")
        mis_mean, mis_se = _aggregate(records, "group-w", "misclass")
        rt_mean, _ = _aggregate(records, "group-w", "runtime")
        rows.append(
            {
                "N": n, "T": t, "k": k,
                "l2_mean": l2_mean, "l2_se": l2_se,
                "misclass_mean": mis_mean, "misclass_se": mis_se,
                "runtime_mean": rt_mean,
                "reps": len(records), "failures": failures[idx],
            }
        )
    return rows


def run_ablation(
    cells=((300, 5, 3), (100, 5, 2)),
    reps: int = 20,
    workers: int | None = None,
    base_seed: int = 0,
    fit_overrides: dict | None = None,
    variants=("GLM-w", "factor-w", "group", "group-w"),
) -> list[dict]:
    """Normalized MSE per ablation variant per cell."""
    per_cell, failures = _run_cells(
        list(cells), reps, tuple(variants), fit_overrides or {}, workers, base_seed
    )
    rows = []
    for idx, (n, t, k) in enumerate(cells):
        records = per_cell[idx]
        row = {"N": n, "T": t, "k": k, "reps": len(records), "failures": failures[idx]}
        for variant in variants:
            mean, se = _aggregate(records, variant, "l2")
            row[f"l2_{variant}"] = mean
            row[f"l2_{variant}_se"] = se
        rows.append(row)
    return rows


def run_regret(
    cells=((500, 5, 2), (1000, 5, 2), (2000, 5, 2)),
    reps: int = 20,
    workers: int | None = None,
    base_seed: int = 0,
    fit_overrides: dict | None = None,
    variants=("group-w", "group", "pooled-logit", "oracle"),
) -> list[dict]:
    """Cumulative regret and decision accuracy per method per cell."""
    per_cell, failures = _run_cells(
        list(cells), reps, tuple(variants), fit_overrides or {}, workers, base_seed
    )
    rows = []
    for idx, (n, t, k) in enumerate(cells):
        records = per_cell[idx]
        row = {"N": n, "T": t, "k": k, "reps": len(records), "failures": failures[idx]}
        for variant in variants:
            for key in ("regret", "accuracy"):
                mean, se = _aggregate(records, variant, key)
                row[f"{key}_{variant}"] = mean
                row[f"{key}_{variant}_se"] = se
        rows.append(row)
    return rows


def write_table_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def write_plot_json(rows: list[dict], x_key: str, y_keys: list[str], path) -> None:
    """Emits x/y/series triples consumable by any plotting tool."""
    series = [
        {
            "name": y,
            "x": [row[x_key] for row in rows],
            "y": [row.get(y) for row in rows],
        }
        for y in y_keys
    ]
    with open(path, "w") as fh:
        json.dump({"series": series}, fh, indent=2)

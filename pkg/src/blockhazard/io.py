"""CSV and JSON serialization for panels, fits and policy tables.

Panel CSV schema: ``unit_id, x_1..x_d, a_1..a_k, delta, y_1..y_T[, weight]``.
Floats are written with 17 significant digits so re-ingestion is bit-exact.
"""

from __future__ import annotations

import csv
import json
import re

import numpy as np

from .data import ObservedPanel, decode_treatment
from .estimator import FitResult
from .policy import PolicyTable

__all__ = [
    "read_panel_csv",
    "write_panel_csv",
    "write_fit_json",
    "write_policy_csv",
    "PanelFormatError",
]

FLOAT_FMT = "%.17g"


class PanelFormatError(ValueError):
    """Malformed panel CSV; message carries the offending line/column."""


def _indexed_columns(header, prefix):
    pattern = re.compile(rf"^{prefix}_(\d+)$")
    cols = sorted(
        (int(m.group(1)), name)
        for name in header
        if (m := pattern.match(name))
    )
    expected = list(range(1, len(cols) + 1))
    if [c[0] for c in cols] != expected:
        raise PanelFormatError(f"columns {prefix}_1..{prefix}_n must be contiguous from 1")
    return [c[1] for c in cols]


def read_panel_csv(path) -> ObservedPanel:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PanelFormatError("missing header row")
        header = reader.fieldnames
        for required in ("unit_id", "delta"):
            if required not in header:
                raise PanelFormatError(f"missing required column {required!r}")
        x_cols = _indexed_columns(header, "x")
        a_cols = _indexed_columns(header, "a")
        y_cols = _indexed_columns(header, "y")
        if not x_cols or not a_cols or not y_cols:
            missing = [p for p, c in (("x", x_cols), ("a", a_cols), ("y", y_cols)) if not c]
            raise PanelFormatError(f"missing required column group(s): {missing}")
        has_weight = "weight" in header
        X, A, delta, Y, weights = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                X.append([float(row[c]) for c in x_cols])
            except (TypeError, ValueError):
                raise PanelFormatError(f"line {lineno}: non-numeric covariate")
            A.append(_binary_cells(row, a_cols, lineno))
            delta.append(_binary_cell(row["delta"], "delta", lineno))
            Y.append(_binary_cells(row, y_cols, lineno))
            if has_weight:
                try:
                    weights.append(float(row["weight"]))
                except (TypeError, ValueError):
                    raise PanelFormatError(f"line {lineno}: non-numeric weight")
        if not X:
            raise PanelFormatError("no data rows")
    panel = ObservedPanel(
        X=np.array(X),
        A=np.array(A),
        delta=np.array(delta),
        Y=np.array(Y),
        weights=np.array(weights) if has_weight else None,
    )
    drops = np.diff(panel.Y, axis=1)
    bad = np.flatnonzero((drops > 0).any(axis=1))
    if bad.size:
        raise PanelFormatError(f"unit row {int(bad[0])}: non-monotone trajectory")
    return panel


def _binary_cells(row, cols, lineno):
    return [_binary_cell(row[c], c, lineno) for c in cols]


def _binary_cell(value, name, lineno):
    if value not in ("0", "1", 0, 1):
        raise PanelFormatError(f"line {lineno}: column {name!r} must be 0 or 1, got {value!r}")
    return int(value)


def write_panel_csv(panel: ObservedPanel, path) -> None:
    header = (
        ["unit_id"]
        + [f"x_{j + 1}" for j in range(panel.d)]
        + [f"a_{j + 1}" for j in range(panel.k)]
        + ["delta"]
        + [f"y_{t + 1}" for t in range(panel.T)]
    )
    if panel.weights is not None:
        header.append("weight")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(panel.N):
            row = [i]
            row += [FLOAT_FMT % v for v in panel.X[i]]
            row += [int(v) for v in panel.A[i]]
            row.append(int(panel.delta[i]))
            row += [int(v) for v in panel.Y[i]]
            if panel.weights is not None:
                row.append(FLOAT_FMT % panel.weights[i])
            writer.writerow(row)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def write_fit_json(result: FitResult, path) -> None:
    payload = {
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "wall_time": float(result.wall_time),
        "final_loglik": float(result.loss_trace[-1]),
        "loss_trace": result.loss_trace.tolist(),
        "labels": result.labels.tolist() if result.labels is not None else None,
        "label_change_sweeps": list(result.label_changes),
        "theta_hat": result.theta_hat.tolist(),
    }
    if result.bt is not None:
        payload["core"] = result.bt.core.tolist()
        payload["U1"] = result.bt.U1.tolist()
        payload["U2"] = result.bt.U2.tolist()
    if result.U3 is not None:
        payload["U3"] = result.U3.tolist()
    if result.diagnostics is not None:
        payload["diagnostics"] = {k: _jsonable(v) for k, v in result.diagnostics.as_dict().items()}
    with open(path, "w") as fh:
        json.dump(payload, fh)


def write_policy_csv(table: PolicyTable, k: int, path) -> None:
    """One row per (unit, arm): bits, expected lifetime, chosen flag."""
    n, _, n_arms = table.survival.shape
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "arm", "bits", "expected_lifetime", "chosen"])
        for i in range(n):
            for l in range(n_arms):
                bits = "".join(str(b) for b in decode_treatment(l, k))
                writer.writerow(
                    [i, l, bits, FLOAT_FMT % table.lifetime[i, l], int(table.d_opt[i] == l)]
                )

"""Recovery, clustering and survival goodness-of-fit metrics."""

from __future__ import annotations

from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "classification_error",
    "misclassification_loss",
    "normalized_mse",
    "concordance_index",
    "time_dependent_auc",
    "average_auc",
]

EXACT_PERMUTATION_LIMIT = 8


def _check_labels(c, d, r3):
    c = np.asarray(c, dtype=int)
    d = np.asarray(d, dtype=int)
    if c.shape != d.shape:
        raise ValueError("label vectors must have equal length")
    for v in (c, d):
        if v.size and (v.min() < 0 or v.max() >= r3):
            raise ValueError(f"labels out of range [0, {r3})")
    return c, d


def classification_error(c, d, r3: int) -> float:
    """Permutation-minimized label disagreement rate.

    Exact search over all permutations for small ``r3``; Hungarian assignment
    on the confusion matrix otherwise (also exact for this objective).
    """
    c, d = _check_labels(c, d, r3)
    n = c.size
    if n == 0:
        return 0.0
    confusion = np.zeros((r3, r3))
    np.add.at(confusion, (c, d), 1.0)
    if r3 <= EXACT_PERMUTATION_LIMIT:
        best = min(
            sum(c[l] != pi[d[l]] for l in range(n))
            for pi in permutations(range(r3))
        )
        return best / n
    rows, cols = linear_sum_assignment(-confusion)
    matched = confusion[rows, cols].sum()
    return float((n - matched) / n)


def misclassification_loss(c, d, core_rows: np.ndarray) -> float:
    """Permutation-minimized mean squared gap between the block-mean rows
    selected by the two labelings.  ``core_rows`` holds the r3 mean rows of
    the mode-3 unfolded core."""
    core_rows = np.atleast_2d(np.asarray(core_rows, dtype=float))
    r3 = core_rows.shape[0]
    c, d = _check_labels(c, d, r3)
    n = c.size
    if n == 0:
        return 0.0
    gap = np.array(
        [[np.sum((core_rows[a] - core_rows[b]) ** 2) for b in range(r3)] for a in range(r3)]
    )
    if r3 <= EXACT_PERMUTATION_LIMIT:
        best = min(
            sum(gap[c[l], pi[d[l]]] for l in range(n))
            for pi in permutations(range(r3))
        )
        return float(best / n)
    # cost of assigning estimated cluster b -> permutation target p
    cost = np.zeros((r3, r3))
    for b in range(r3):
        members = np.flatnonzero(d == b)
        for p in range(r3):
            cost[b, p] = gap[c[members], p].sum() if members.size else 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / n)


def normalized_mse(theta_hat: np.ndarray, theta_true: np.ndarray) -> float:
    """``||theta_hat - theta_true||_F^2 / ||theta_true||_F^2``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_hat.shape != theta_true.shape:
        raise ValueError("shape mismatch")
    denom = np.sum(theta_true**2)
    if denom == 0:
        raise ValueError("true tensor is identically zero")
    return float(np.sum((theta_hat - theta_true) ** 2) / denom)


def concordance_index(predicted_lifetimes, observed_times, delta) -> float:
    """Censoring-aware C-index.

    A pair is comparable when the smaller observed time is an event; it is
    concordant when the unit with the smaller observed time also has the
    smaller predicted lifetime, with prediction ties counted 1/2.
    """
    pred = np.asarray(predicted_lifetimes, dtype=float)
    time = np.asarray(observed_times, dtype=float)
    event = np.asarray(delta, dtype=int)
    n = pred.size
    concordant = 0.0
    comparable = 0
    for i in range(n):
        if event[i] != 1:
            continue
        shorter = time[i]
        others = np.flatnonzero((time > shorter) | ((time == shorter) & (event == 0)))
        for j in others:
            comparable += 1
            if pred[i] < pred[j]:
                concordant += 1.0
            elif pred[i] == pred[j]:
                concordant += 0.5
    if comparable == 0:
        raise ValueError("no comparable pairs")
    return float(concordant / comparable)


def time_dependent_auc(scores, observed_times, delta, t) -> float:
    """Cumulative/dynamic AUC at time ``t``.

    ``scores`` are risk scores (higher means earlier expected exit).  Cases
    are units with an observed event by time ``t``; controls are units still
    retained past ``t``.  No censoring-weight correction is applied.
    """
    scores = np.asarray(scores, dtype=float)
    time = np.asarray(observed_times, dtype=float)
    event = np.asarray(delta, dtype=int)
    cases = (time <= t) & (event == 1)
    controls = time > t
    if not cases.any() or not controls.any():
        raise ValueError(f"degenerate case/control split at t={t}")
    s_case = scores[cases]
    s_ctrl = scores[controls]
    wins = (s_case[:, None] > s_ctrl[None, :]).sum()
    ties = (s_case[:, None] == s_ctrl[None, :]).sum()
    return float((wins + 0.5 * ties) / (s_case.size * s_ctrl.size))


def average_auc(scores, observed_times, delta, horizon: int) -> float:
    """Equal-weight average of the time-dependent AUC over t = 1..horizon,
    skipping times with a degenerate class."""
    vals = []
    for t in range(1, horizon + 1):
        try:
            vals.append(time_dependent_auc(scores, observed_times, delta, t))
        except ValueError:
            continue
    if not vals:
        raise ValueError("no evaluable time points")
    return float(np.mean(vals))

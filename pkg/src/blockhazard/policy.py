"""Downstream causal quantities: survival curves, lifetimes, optimal arms,
regret and decision accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hazard import survival_tensor
from .links import LinkFunction

__all__ = [
    "PolicyTable",
    "policy_table",
    "cumulative_regret",
    "decision_accuracy",
    "average_survival",
]


@dataclass
class PolicyTable:
    """Per-unit survival probabilities, expected lifetimes and chosen arms."""

    survival: np.ndarray  # (N, T, L)
    lifetime: np.ndarray  # (N, L) expected lifetimes, sum of survival over t
    d_opt: np.ndarray  # (N,) decimal arm indices


def policy_table(theta: np.ndarray, link: LinkFunction) -> PolicyTable:
    """Evaluates every arm; ties break toward the lowest arm index."""
    theta = np.asarray(theta, dtype=float)
    if not np.isfinite(theta).all():
        raise ValueError("theta contains non-finite entries")
    surv = survival_tensor(theta, link)
    lifetime = surv.sum(axis=1)
    d_opt = lifetime.argmax(axis=1)  # argmax returns the first maximizer
    return PolicyTable(survival=surv, lifetime=lifetime, d_opt=d_opt)


def cumulative_regret(true_survival: np.ndarray, d_hat, d_opt) -> float:
    """Mean over units of the summed survival-probability gap between the
    true-optimal and the chosen arms, evaluated on the truth."""
    p = np.asarray(true_survival, dtype=float)
    d_hat = np.asarray(d_hat, dtype=int)
    d_opt = np.asarray(d_opt, dtype=int)
    n = p.shape[0]
    if d_hat.shape != (n,) or d_opt.shape != (n,):
        raise ValueError("decision vectors must have one entry per unit")
    idx = np.arange(n)
    gap = p[idx, :, d_opt] - p[idx, :, d_hat]
    return float(gap.sum() / n)


def decision_accuracy(d_hat, d_opt) -> float:
    d_hat = np.asarray(d_hat, dtype=int)
    d_opt = np.asarray(d_opt, dtype=int)
    if d_hat.shape != d_opt.shape:
        raise ValueError("decision vectors must have equal length")
    return float(np.mean(d_hat == d_opt))


def average_survival(theta: np.ndarray, link: LinkFunction, arm: int) -> np.ndarray:
    """Length-T population-average survival curve under one arm."""
    surv = survival_tensor(np.asarray(theta, dtype=float), link)
    if not 0 <= arm < surv.shape[2]:
        raise IndexError(f"arm {arm} out of range")
    return surv[:, :, arm].mean(axis=0)

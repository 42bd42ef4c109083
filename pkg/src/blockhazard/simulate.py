"""Synthetic churn-panel generator.

The true parameter tensor is the product form
``theta[i, t, l] = (X_i' eta_N) * ((t+1) * eta_T / T) * cum(l) * eta_L``
(0-based t; cum(l) counts active treatments in arm l).  Potential retention
trajectories are generated sequentially per arm with hazard ``expit(theta)``,
treatments follow a logistic assignment model, and a fixed fraction of units
is right-censored at an integer time drawn uniformly from 0..lifetime.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import ObservedPanel, cum_active
from .links import LinkFunction

__all__ = ["SimConfig", "generate_synthetic", "true_labels", "true_theta"]


@dataclass
class SimConfig:
    N: int = 100
    T: int = 5
    k: int = 2
    d: int = 3
    eta_N: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))
    eta_T: float = 1.0
    eta_L: float = 1.0
    alpha_A: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.5]))
    censor_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.eta_N = np.asarray(self.eta_N, dtype=float)
        self.alpha_A = np.asarray(self.alpha_A, dtype=float)
        if self.N < 1 or self.T < 1 or self.k < 1:
            raise ValueError("N, T and k must be positive")
        if self.eta_N.size != self.d or self.alpha_A.size != self.d:
            raise ValueError("eta_N and alpha_A must have length d")
        if not 0.0 <= self.censor_frac < 1.0:
            raise ValueError("censor_frac must lie in [0, 1)")

    @property
    def n_arms(self) -> int:
        return 2**self.k


def true_theta(cfg: SimConfig, X: np.ndarray) -> np.ndarray:
    """True (N, T, L) parameter tensor for given covariates."""
    unit = X @ cfg.eta_N  # (N,)
    time = (np.arange(1, cfg.T + 1) * cfg.eta_T) / cfg.T  # (T,)
    arm = np.array([cum_active(l, cfg.k) * cfg.eta_L for l in range(cfg.n_arms)])  # (L,)
    return unit[:, None, None] * time[None, :, None] * arm[None, None, :]


def true_labels(cfg: SimConfig) -> np.ndarray:
    """Ground-truth cluster labels: arms grouped by active-treatment count."""
    return np.array([cum_active(l, cfg.k) for l in range(cfg.n_arms)], dtype=int)


def generate_synthetic(cfg: SimConfig):
    """Returns ``(panel, theta_true, y_full)``.

    ``y_full`` is the full (N, T, L) potential-outcome tensor before
    treatment selection and censoring; the panel's observed trajectories are
    the realized-arm slices with censoring applied.
    """
    rng = np.random.default_rng(cfg.seed)
    X = rng.standard_normal((cfg.N, cfg.d))
    theta = true_theta(cfg, X)
    hazard = expit(theta)

    # potential outcomes, sequential per arm, monotone by construction
    y_full = np.zeros((cfg.N, cfg.T, cfg.n_arms), dtype=int)
    alive = np.ones((cfg.N, cfg.n_arms), dtype=bool)
    for t in range(cfg.T):
        draws = rng.random((cfg.N, cfg.n_arms))
        alive &= draws < hazard[:, t, :]
        y_full[:, t, :] = alive.astype(int)

    # treatment assignment, independent per dimension
    p_treat = expit(X @ cfg.alpha_A)
    A = (rng.random((cfg.N, cfg.k)) < p_treat[:, None]).astype(int)
    powers = 1 << np.arange(cfg.k - 1, -1, -1)
    arm = (A * powers).sum(axis=1)

    Y = y_full[np.arange(cfg.N), :, arm].copy()
    lifetimes = Y.sum(axis=1)

    delta = np.ones(cfg.N, dtype=int)
    n_censor = int(round(cfg.censor_frac * cfg.N))
    if n_censor > 0:
        censored = rng.choice(cfg.N, size=n_censor, replace=False)
        delta[censored] = 0
        for i in censored:
            c_time = rng.integers(0, lifetimes[i] + 1)  # inclusive of both ends
            Y[i, c_time:] = 0

    panel = ObservedPanel(X=X, A=A, delta=delta, Y=Y)
    return panel, theta, y_full

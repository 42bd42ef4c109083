"""Entropy-balancing weights for covariate balance.

For each treatment dimension j and arm value a, the weights on the units with
``A_{i,j} = a`` maximize entropy subject to summing to one and matching the
full-sample moments of a set of basis functions.  The solution has the
exponential-tilting form ``rho_i ∝ exp(lambda' b_i)`` and is found by damped
Newton on the strictly convex dual, with a gradient-ascent fallback.

Basis columns are standardized internally; the solved weights are invariant
to affine rescaling of the basis, so this only improves conditioning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import ObservedPanel

__all__ = [
    "BalanceProblem",
    "EntropyWeights",
    "build_basis",
    "entropy_balance",
    "balance_panel",
    "combine_weights",
    "weight_diagnostics",
]

DUAL_NORM_CAP = 1e4


def build_basis(X: np.ndarray, order: int = 1, standardize: bool = True) -> np.ndarray:
    """Moment basis: order 1 gives the raw covariates, order 2 appends their
    elementwise squares.  Columns are standardized to mean 0, variance 1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.isfinite(X).all():
        raise ValueError("covariates contain non-finite values")
    if order == 1:
        basis = X.copy()
    elif order == 2:
        basis = np.hstack([X, X**2])
    else:
        raise ValueError(f"unsupported basis order {order}")
    if standardize:
        mean = basis.mean(axis=0)
        sd = basis.std(axis=0)
        sd[sd < 1e-12] = 1.0
        basis = (basis - mean) / sd
    return basis


@dataclass
class BalanceProblem:
    """One (dimension, arm) weighting problem."""

    arm_mask: np.ndarray  # boolean, units with A_{i,j} = a
    basis: np.ndarray  # (N, B) basis evaluations for all units
    target: np.ndarray | None = None  # defaults to the full-sample basis mean

    def __post_init__(self):
        self.arm_mask = np.asarray(self.arm_mask, dtype=bool)
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if not self.arm_mask.any():
            raise ValueError("arm is empty")
        if not np.isfinite(self.basis).all():
            raise ValueError("basis contains non-finite values")
        if self.target is None:
            self.target = self.basis.mean(axis=0)
        else:
            self.target = np.asarray(self.target, dtype=float)


@dataclass
class EntropyWeights:
    """Solved weights for one problem; ``rho`` is zero off the arm."""

    rho: np.ndarray
    dual: np.ndarray
    residual: float
    converged: bool
    iterations: int


def _dual_value_grad_hess(lam, b_arm, target):
    scores = b_arm @ lam
    scores -= scores.max()
    w = np.exp(scores)
    w /= w.sum()
    mean = w @ b_arm
    value = np.log(np.sum(np.exp(scores))) - lam @ target  # up to the shifted max
    grad = mean - target
    centered = b_arm - mean
    hess = centered.T @ (centered * w[:, None])
    return value, grad, hess, w


def entropy_balance(
    problem: BalanceProblem,
    tol: float = 1e-8,
    max_iter: int = 200,
    ridge: float = 0.0,
) -> EntropyWeights:
    """Solves one balance problem by damped Newton on the dual.

    ``ridge`` adds a quadratic penalty on the multipliers, a documented knob
    for softening conflicting constraints (default off).
    """
    b_arm = problem.basis[problem.arm_mask]
    n_arm, n_basis = b_arm.shape
    if n_arm < n_basis + 1:
        warnings.warn(
            f"arm has {n_arm} units for {n_basis} balance constraints; "
            "the problem may be infeasible",
            stacklevel=2,
        )
    target = problem.target
    lam = np.zeros(n_basis)
    converged = False
    it = 0
    residual = np.inf
    for it in range(1, max_iter + 1):
        _, grad, hess, w = _dual_value_grad_hess(lam, b_arm, target)
        if ridge > 0:
            grad = grad + ridge * lam
            hess = hess + ridge * np.eye(n_basis)
        residual = float(np.max(np.abs(grad)))
        if residual <= tol:
            converged = True
            break
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(n_basis), -grad)
        except np.linalg.LinAlgError:
            step = -grad
        # backtracking on the dual objective
        scale = 1.0
        base = _dual_objective(lam, b_arm, target, ridge)
        for _ in range(40):
            cand = lam + scale * step
            if _dual_objective(cand, b_arm, target, ridge) < base:
                lam = cand
                break
            scale *= 0.5
        else:
            lam = lam - 1e-3 * grad  # gradient fallback
        if np.linalg.norm(lam) > DUAL_NORM_CAP:
            raise RuntimeError(
                "entropy balance dual diverged; constraints appear infeasible "
                f"(||lambda|| > {DUAL_NORM_CAP:g})"
            )
    _, grad, _, w = _dual_value_grad_hess(lam, b_arm, target)
    residual = float(np.max(np.abs(grad + (ridge * lam if ridge > 0 else 0.0))))
    rho = np.zeros(problem.basis.shape[0])
    rho[problem.arm_mask] = w
    return EntropyWeights(rho=rho, dual=lam, residual=residual, converged=converged, iterations=it)


def _dual_objective(lam, b_arm, target, ridge):
    scores = b_arm @ lam
    shift = scores.max()
    value = shift + np.log(np.sum(np.exp(scores - shift))) - lam @ target
    if ridge > 0:
        value += 0.5 * ridge * float(lam @ lam)
    return value


def balance_panel(
    panel: ObservedPanel,
    order: int = 1,
    tol: float = 1e-8,
    max_iter: int = 200,
    ridge: float = 0.0,
) -> dict[tuple[int, int], EntropyWeights]:
    """Solves every (dimension, arm-value) problem for a panel."""
    basis = build_basis(panel.X, order=order)
    solved = {}
    for j in range(panel.k):
        for a in (0, 1):
            mask = panel.A[:, j] == a
            if not mask.any():
                raise RuntimeError(f"no units with A[:, {j}] == {a}; cannot balance")
            problem = BalanceProblem(arm_mask=mask, basis=basis)
            solved[(j, a)] = entropy_balance(problem, tol=tol, max_iter=max_iter, ridge=ridge)
    return solved


def combine_weights(
    panel: ObservedPanel,
    solved: dict[tuple[int, int], EntropyWeights],
    scale: str = "count",
) -> np.ndarray:
    """Per-unit weight: product over treatment dimensions of the unit's
    solved arm weight.

    With ``scale="count"`` (the default) each dimension's arm weights are
    multiplied by the sample size, so they sum to N per arm — the
    Horvitz-Thompson convention for inverse-propensity weights, whose raw
    scale grows like 2^k.  With ``scale="mean"`` the combined weights are
    normalized to mean 1 instead.
    """
    if scale not in ("count", "mean"):
        raise ValueError(f"unknown weight scale {scale!r}")
    w = np.ones(panel.N)
    for j in range(panel.k):
        for a in (0, 1):
            if (j, a) not in solved:
                raise KeyError(f"missing solved problem for dimension {j}, arm {a}")
            mask = panel.A[:, j] == a
            w[mask] *= panel.N * solved[(j, a)].rho[mask]
    if scale == "mean":
        mean = w.mean()
        if mean <= 0:
            raise RuntimeError("combined weights have nonpositive mean")
        w = w / mean
    return w


def weight_diagnostics(weights: np.ndarray, ratio_cap: float = 100.0) -> dict:
    """Min/max, effective sample size and a positivity flag."""
    w = np.asarray(weights, dtype=float)
    ess = float(w.sum() ** 2 / np.sum(w**2)) if w.size else 0.0
    wmin, wmax = (float(w.min()), float(w.max())) if w.size else (np.nan, np.nan)
    flagged = bool(w.size and wmin > 0 and wmax / wmin > ratio_cap)
    return {
        "min": wmin,
        "max": wmax,
        "ess": ess,
        "positivity_flag": flagged,
    }

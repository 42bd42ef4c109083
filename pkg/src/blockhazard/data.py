"""Observed-data model for churn trajectories.

A unit's record is ``(X_i, A_i, delta_i, Y_i)``: covariates, a binary
treatment vector, a churn indicator (``delta=0`` means censored) and a
monotone 0/1 retention trajectory.  The treatment vector is written with its
leftmost bit most significant, so ``(0,0,0,1,1)`` encodes to arm 3.

Boundary convention: every unit is retained before the horizon starts
(``Y_{i,0} := 1``), so the first period always enters the risk set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ObservedPanel",
    "encode_treatment",
    "decode_treatment",
    "cum_active",
    "risk_indicator",
    "risk_matrix",
    "observed_lifetime",
    "validate",
]


def encode_treatment(bits) -> int:
    """Base-2 value of a binary vector, leftmost bit most significant."""
    bits = np.asarray(bits)
    if bits.size == 0:
        raise ValueError("treatment vector must be nonempty")
    if not np.isin(bits, (0, 1)).all():
        raise ValueError("treatment vector must be binary")
    value = 0
    for b in bits.tolist():
        value = (value << 1) | int(b)
    return value


def decode_treatment(l: int, k: int) -> np.ndarray:
    """Inverse of :func:`encode_treatment` for a k-bit vector."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not 0 <= l < 2**k:
        raise ValueError(f"arm index {l} out of range for k={k}")
    return np.array([(l >> (k - 1 - j)) & 1 for j in range(k)], dtype=int)


def cum_active(l: int, k: int) -> int:
    """Number of active treatments (popcount) in arm ``l``."""
    if not 0 <= l < 2**k:
        raise ValueError(f"arm index {l} out of range for k={k}")
    return int(l).bit_count()


@dataclass
class ObservedPanel:
    """Per-unit observed records plus optional likelihood weights.

    Attributes:
      X: (N, d) covariates.
      A: (N, k) binary treatment assignments.
      delta: (N,) churn indicators; 0 marks a censored unit.
      Y: (N, T) monotone retention trajectories.
      weights: optional (N,) strictly positive weights.
    """

    X: np.ndarray
    A: np.ndarray
    delta: np.ndarray
    Y: np.ndarray
    weights: np.ndarray | None = None
    _arm: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=int))
        self.delta = np.asarray(self.delta, dtype=int).ravel()
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=int))
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float).ravel()

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    @property
    def k(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_arms(self) -> int:
        return 2**self.k

    def arm_index(self) -> np.ndarray:
        """Decimal arm index of each unit's assigned treatment vector."""
        if self._arm is None or self._arm.shape[0] != self.N:
            powers = 1 << np.arange(self.k - 1, -1, -1)
            self._arm = (self.A * powers).sum(axis=1).astype(int)
        return self._arm

    def effective_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.N)
        return self.weights


def risk_indicator(panel: ObservedPanel, i: int, t: int) -> int:
    """1 iff unit ``i`` was retained at period ``t - 1`` (``t`` is 1-based)."""
    if not 0 <= i < panel.N:
        raise IndexError(f"unit {i} out of range")
    if not 1 <= t <= panel.T:
        raise IndexError(f"time {t} out of range 1..{panel.T}")
    if t == 1:
        return 1
    return int(panel.Y[i, t - 2])


def risk_matrix(panel: ObservedPanel) -> np.ndarray:
    """(N, T) matrix of risk-set indicators, column t-1 holding 1(Y_{i,t-1}=1)."""
    r = np.ones_like(panel.Y)
    r[:, 1:] = panel.Y[:, :-1]
    return r


def observed_lifetime(panel: ObservedPanel, i: int) -> int:
    """Count of retained periods in unit ``i``'s trajectory."""
    if not 0 <= i < panel.N:
        raise IndexError(f"unit {i} out of range")
    return int(panel.Y[i].sum())


def observed_lifetimes(panel: ObservedPanel) -> np.ndarray:
    return panel.Y.sum(axis=1).astype(int)


def validate(panel: ObservedPanel) -> list[str]:
    """Returns a list of invariant violations (empty means the panel is valid)."""
    violations = []
    n = panel.N
    if panel.X.shape[0] != n:
        violations.append(f"X has {panel.X.shape[0]} rows, expected {n}")
    if panel.A.shape[0] != n:
        violations.append(f"A has {panel.A.shape[0]} rows, expected {n}")
    if panel.delta.shape[0] != n:
        violations.append(f"delta has {panel.delta.shape[0]} entries, expected {n}")
    if not np.isfinite(panel.X).all():
        violations.append("X contains non-finite values")
    if not np.isin(panel.A, (0, 1)).all():
        violations.append("A contains non-binary values")
    if not np.isin(panel.delta, (0, 1)).all():
        violations.append("delta contains non-binary values")
    if not np.isin(panel.Y, (0, 1)).all():
        violations.append("Y contains non-binary values")
    else:
        drops = np.diff(panel.Y, axis=1)
        bad = np.flatnonzero((drops > 0).any(axis=1))
        for i in bad:
            violations.append(f"unit {i}: trajectory is not monotone nonincreasing")
    if panel.weights is not None:
        if panel.weights.shape[0] != n:
            violations.append(f"weights has {panel.weights.shape[0]} entries, expected {n}")
        else:
            bad = np.flatnonzero(~(np.isfinite(panel.weights) & (panel.weights > 0)))
            for i in bad:
                violations.append(f"unit {i}: weight must be positive and finite")
    return violations

"""Symmetric CDF-style link functions with first and second derivatives.

All links satisfy ``f(x) + f(-x) = 1``, ``f'(x) = f'(-x)`` and
``f''(x) = -f''(-x)``, which is what the 1-bit likelihood machinery relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, ndtr

__all__ = ["LinkFunction", "LINK_KINDS"]

LINK_KINDS = ("logistic", "probit", "laplacian")

_SQRT2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class LinkFunction:
    """A scaled link ``f(theta)``; ``sigma`` is the scale parameter."""

    kind: str = "logistic"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def evaluate(self, theta):
        """Returns ``(f, f', f'')`` evaluated elementwise at ``theta``."""
        theta = np.asarray(theta, dtype=float)
        u = theta / self.sigma
        s = self.sigma
        if self.kind == "logistic":
            f = expit(u)
            fp = f * (1.0 - f) / s
            fpp = fp * (1.0 - 2.0 * f) / s
        elif self.kind == "probit":
            f = ndtr(u)
            phi = np.exp(-0.5 * u * u) / _SQRT2PI
            fp = phi / s
            fpp = -u * phi / (s * s)
        else:  # laplacian
            half_exp = 0.5 * np.exp(-np.abs(u))
            f = np.where(u < 0, half_exp, 1.0 - half_exp)
            fp = half_exp / s
            fpp = np.where(u < 0, half_exp, -half_exp) / (s * s)
            fpp = np.where(u == 0, 0.0, fpp)
        return f, fp, fpp

    def __call__(self, theta):
        return self.evaluate(theta)[0]

    def log_f(self, theta):
        """``log f(theta)`` without underflow in the lower tail (logistic only
        uses the closed form; other links clamp)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "logistic":
            return log_expit(theta / self.sigma)
        return np.log(np.clip(self(theta), 1e-300, None))

    def log_1mf(self, theta):
        """``log(1 - f(theta))``; by symmetry equals ``log f(-theta)``."""
        return self.log_f(-np.asarray(theta, dtype=float))

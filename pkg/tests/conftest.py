"""Shared fixtures and small-panel builders for the test suite."""

import numpy as np
import pytest

from blockhazard.data import ObservedPanel


def make_panel(rng, n=6, t=4, k=2, d=3, censor_frac=0.25, weights=False):
    """Random valid panel: monotone trajectories, binary arms, some censoring."""
    x = rng.standard_normal((n, d))
    a = rng.integers(0, 2, size=(n, k))
    lifetimes = rng.integers(0, t + 1, size=n)
    y = (np.arange(t)[None, :] < lifetimes[:, None]).astype(int)
    delta = (rng.random(n) > censor_frac).astype(int)
    w = np.exp(rng.standard_normal(n) * 0.3) if weights else None
    return ObservedPanel(X=x, A=a, delta=delta, Y=y, weights=w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_panel(rng):
    return make_panel(rng)

"""Observed-panel model: treatment codes, risk sets, validation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockhazard.data import (
    ObservedPanel,
    cum_active,
    decode_treatment,
    encode_treatment,
    observed_lifetime,
    risk_indicator,
    risk_matrix,
    validate,
)
from conftest import make_panel


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_encode_decode_roundtrip(k):
    for l in range(2**k):
        bits = decode_treatment(l, k)
        assert encode_treatment(bits) == l
        assert cum_active(l, k) == int(bits.sum())


@settings(max_examples=100, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=10))
def test_encode_decode_roundtrip_property(bits):
    l = encode_treatment(bits)
    assert 0 <= l < 2 ** len(bits)
    assert np.array_equal(decode_treatment(l, len(bits)), bits)


def test_encode_msb_first():
    assert encode_treatment([0, 0, 0, 1, 1]) == 3
    assert encode_treatment([1, 0]) == 2
    assert encode_treatment([1]) == 1


def test_encode_validation():
    with pytest.raises(ValueError):
        encode_treatment([])
    with pytest.raises(ValueError):
        encode_treatment([0, 2])
    with pytest.raises(ValueError):
        decode_treatment(4, 2)
    with pytest.raises(ValueError):
        cum_active(-1, 2)


def test_arm_index_matches_encode(rng):
    panel = make_panel(rng, n=10, k=3)
    arm = panel.arm_index()
    for i in range(panel.N):
        assert arm[i] == encode_treatment(panel.A[i])


def test_risk_matrix_matches_indicator(rng):
    panel = make_panel(rng, n=8, t=5)
    risk = risk_matrix(panel)
    for i in range(panel.N):
        for t in range(1, panel.T + 1):
            assert risk[i, t - 1] == risk_indicator(panel, i, t)


def test_first_period_always_at_risk(rng):
    """Units count as retained before the horizon, so period 1 is universal."""
    panel = make_panel(rng, n=12)
    assert (risk_matrix(panel)[:, 0] == 1).all()


def test_observed_lifetime(rng):
    panel = make_panel(rng, n=10, t=6)
    for i in range(panel.N):
        assert observed_lifetime(panel, i) == panel.Y[i].sum()
    with pytest.raises(IndexError):
        observed_lifetime(panel, panel.N)


def test_risk_indicator_bounds(rng):
    panel = make_panel(rng)
    with pytest.raises(IndexError):
        risk_indicator(panel, 0, 0)
    with pytest.raises(IndexError):
        risk_indicator(panel, 0, panel.T + 1)
    with pytest.raises(IndexError):
        risk_indicator(panel, panel.N, 1)


def test_validate_clean_panel(rng):
    assert validate(make_panel(rng)) == []


def test_validate_catches_violations(rng):
    panel = make_panel(rng, n=5, t=4)
    panel.Y[0] = [0, 1, 1, 0]  # resurrection
    msgs = validate(panel)
    assert any("monotone" in m for m in msgs)

    panel = make_panel(rng, n=5)
    panel.A[1, 0] = 2
    assert any("A contains" in m for m in validate(panel))

    panel = make_panel(rng, n=5)
    panel.delta[2] = 3
    assert any("delta contains" in m for m in validate(panel))

    panel = make_panel(rng, n=5)
    panel.X[0, 0] = np.nan
    assert any("non-finite" in m for m in validate(panel))

    panel = make_panel(rng, n=5, weights=True)
    panel.weights[3] = -1.0
    assert any("weight" in m for m in validate(panel))

    panel = make_panel(rng, n=5)
    panel.X = panel.X[:3]
    assert any("X has" in m for m in validate(panel))


def test_effective_weights_default(rng):
    panel = make_panel(rng, weights=False)
    assert np.array_equal(panel.effective_weights(), np.ones(panel.N))
    weighted = make_panel(rng, weights=True)
    assert np.array_equal(weighted.effective_weights(), weighted.weights)


def test_panel_dims(rng):
    panel = make_panel(rng, n=7, t=4, k=3, d=2)
    assert (panel.N, panel.T, panel.k, panel.d, panel.n_arms) == (7, 4, 3, 2, 8)

"""Policy table, regret and decision accuracy."""

import numpy as np
import pytest

from blockhazard.hazard import survival_tensor
from blockhazard.links import LinkFunction
from blockhazard.policy import (
    average_survival,
    cumulative_regret,
    decision_accuracy,
    policy_table,
)


def test_policy_table_picks_best_lifetime(rng):
    link = LinkFunction()
    theta = rng.standard_normal((6, 4, 3))
    table = policy_table(theta, link)
    surv = survival_tensor(theta, link)
    assert np.allclose(table.survival, surv)
    assert np.allclose(table.lifetime, surv.sum(axis=1))
    for i in range(6):
        assert table.lifetime[i, table.d_opt[i]] == table.lifetime[i].max()


def test_policy_tie_breaks_low_arm():
    theta = np.zeros((2, 3, 4))  # all arms identical
    table = policy_table(theta, LinkFunction())
    assert (table.d_opt == 0).all()


def test_policy_rejects_nonfinite():
    theta = np.zeros((2, 2, 2))
    theta[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        policy_table(theta, LinkFunction())


def test_regret_zero_for_oracle(rng):
    link = LinkFunction()
    theta = rng.standard_normal((5, 4, 3))
    table = policy_table(theta, link)
    assert cumulative_regret(table.survival, table.d_opt, table.d_opt) == 0.0


def test_regret_matches_hand_computation():
    # 1 unit, 2 periods, 2 arms with known survival probabilities
    surv = np.array([[[0.9, 0.5], [0.8, 0.2]]])
    d_opt = np.array([0])
    d_hat = np.array([1])
    expected = (0.9 - 0.5) + (0.8 - 0.2)
    assert np.isclose(cumulative_regret(surv, d_hat, d_opt), expected)


def test_regret_nonnegative_at_true_optimum(rng):
    link = LinkFunction()
    theta = rng.standard_normal((10, 4, 4))
    truth = policy_table(theta, link)
    d_bad = (truth.d_opt + 1) % 4
    assert cumulative_regret(truth.survival, d_bad, truth.d_opt) >= 0


def test_regret_shape_validation(rng):
    surv = rng.random((3, 2, 2))
    with pytest.raises(ValueError):
        cumulative_regret(surv, np.array([0, 1]), np.array([0, 1, 0]))


def test_decision_accuracy():
    assert decision_accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert decision_accuracy([0, 1, 2], [0, 1, 3]) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        decision_accuracy([0, 1], [0, 1, 2])


def test_average_survival(rng):
    link = LinkFunction()
    theta = rng.standard_normal((8, 5, 3))
    curve = average_survival(theta, link, 1)
    surv = survival_tensor(theta, link)
    assert np.allclose(curve, surv[:, :, 1].mean(axis=0))
    assert (np.diff(curve) <= 1e-15).all()
    with pytest.raises(IndexError):
        average_survival(theta, link, 3)

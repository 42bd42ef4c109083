"""Entropy-balancing weights: closed forms, residuals, optimality."""

import numpy as np
import pytest

from blockhazard.balance import (
    BalanceProblem,
    balance_panel,
    build_basis,
    combine_weights,
    entropy_balance,
    weight_diagnostics,
)
from blockhazard.simulate import SimConfig, generate_synthetic
from conftest import make_panel


def test_two_atom_closed_form():
    """With two units and one constraint the weights solve a linear equation:
    w * b1 + (1 - w) * b2 = target."""
    basis = np.array([[2.0], [-1.0], [0.5], [0.5]])
    mask = np.array([True, True, False, False])
    problem = BalanceProblem(arm_mask=mask, basis=basis)
    target = basis.mean()  # 0.5
    sol = entropy_balance(problem, tol=1e-12)
    w_expected = (target - basis[1, 0]) / (basis[0, 0] - basis[1, 0])
    assert np.isclose(sol.rho[0], w_expected, atol=1e-10)
    assert np.isclose(sol.rho[1], 1 - w_expected, atol=1e-10)
    assert (sol.rho[~mask] == 0).all()
    assert sol.residual <= 1e-10


def test_balance_residual_on_synthetic_panels():
    for seed in range(5):
        panel, _, _ = generate_synthetic(SimConfig(N=200, T=5, k=2, seed=seed))
        solved = balance_panel(panel, tol=1e-8)
        basis = build_basis(panel.X)
        target = basis.mean(axis=0)
        for (j, a), sol in solved.items():
            assert sol.converged
            achieved = sol.rho @ basis
            assert np.max(np.abs(achieved - target)) <= 1e-8


def entropy_of(w):
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


def test_entropy_optimality_brute_force():
    """Among feasible weights the solution has maximum entropy: moving along
    any direction in the constraint null space cannot increase it."""
    rng = np.random.default_rng(3)
    for trial in range(10):
        n = 12
        basis = rng.standard_normal((n, 2))
        mask = np.ones(n, dtype=bool)
        problem = BalanceProblem(arm_mask=mask, basis=basis)
        sol = entropy_balance(problem, tol=1e-12)
        w = sol.rho
        base = entropy_of(w)
        # null space of [basis'; 1'] gives feasible directions
        constraints = np.vstack([basis.T, np.ones(n)])
        _, _, vt = np.linalg.svd(constraints)
        null = vt[constraints.shape[0]:]
        for _ in range(50):
            direction = null.T @ rng.standard_normal(null.shape[0])
            for eps in (1e-4, -1e-4):
                cand = w + eps * direction
                if (cand <= 0).any():
                    continue
                assert entropy_of(cand) <= base + 1e-10


def test_affine_basis_invariance(rng):
    """Solved weights are unchanged by affine rescaling of the basis."""
    n = 30
    x = rng.standard_normal((n, 3))
    mask = rng.random(n) < 0.5
    mask[:4] = True
    sol_a = entropy_balance(BalanceProblem(arm_mask=mask, basis=x), tol=1e-12)
    scaled = x * np.array([2.0, -0.5, 10.0]) + np.array([1.0, -3.0, 0.25])
    sol_b = entropy_balance(BalanceProblem(arm_mask=mask, basis=scaled), tol=1e-12)
    assert np.allclose(sol_a.rho, sol_b.rho, atol=1e-8)


def test_build_basis_orders(rng):
    x = rng.standard_normal((50, 2))
    b1 = build_basis(x, order=1, standardize=False)
    assert np.array_equal(b1, x)
    b2 = build_basis(x, order=2, standardize=False)
    assert np.array_equal(b2, np.hstack([x, x**2]))
    std = build_basis(x, order=2)
    assert np.allclose(std.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(std.std(axis=0), 1, atol=1e-12)
    with pytest.raises(ValueError):
        build_basis(x, order=3)
    with pytest.raises(ValueError):
        build_basis(np.array([[np.nan]]))


def test_combine_weights_scales(rng):
    panel, _, _ = generate_synthetic(SimConfig(N=150, T=5, k=2, seed=1))
    solved = balance_panel(panel)
    w = combine_weights(panel, solved)
    assert w.shape == (panel.N,)
    assert (w > 0).all()
    # inverse-propensity convention: each dimension's arm weights sum to N,
    # so the combined mass is about 2^k per unit on average
    assert abs(w.mean() - 4.0) < 1.0
    for j in range(panel.k):
        for a in (0, 1):
            mask = panel.A[:, j] == a
            assert np.isclose(panel.N * solved[(j, a)].rho[mask].sum(), panel.N)
    w_mean = combine_weights(panel, solved, scale="mean")
    assert np.isclose(w_mean.mean(), 1.0, atol=1e-12)
    assert np.allclose(w / w.mean(), w_mean, atol=1e-12)
    with pytest.raises(ValueError):
        combine_weights(panel, solved, scale="sum")


def test_combine_weights_missing_key(rng):
    panel, _, _ = generate_synthetic(SimConfig(N=50, T=5, k=2, seed=2))
    solved = balance_panel(panel)
    solved.pop((0, 1))
    with pytest.raises(KeyError):
        combine_weights(panel, solved)


def test_balance_panel_empty_arm():
    panel = make_panel(np.random.default_rng(0), n=6, k=2)
    panel.A[:, 0] = 1  # nobody with A[:,0] == 0
    with pytest.raises(RuntimeError):
        balance_panel(panel)


def test_infeasible_constraints_raise():
    """A target outside the convex hull of the arm's basis values diverges."""
    basis = np.array([[1.0], [2.0], [3.0], [-50.0]])
    problem = BalanceProblem(
        arm_mask=np.array([True, True, True, False]), basis=basis
    )
    with pytest.raises(RuntimeError):
        entropy_balance(problem, max_iter=5000)


def test_small_arm_warns():
    # 3 constraints on a 3-unit arm is under-determined and warns; the target
    # (the full mean) sits at the arm centroid, so the problem stays solvable
    basis = np.vstack([np.eye(3), np.full((3, 3), 1.0 / 3.0)])
    mask = np.array([True, True, True, False, False, False])
    with pytest.warns(UserWarning):
        sol = entropy_balance(BalanceProblem(arm_mask=mask, basis=basis))
    assert np.allclose(sol.rho[:3], 1.0 / 3.0, atol=1e-6)


def test_weight_diagnostics():
    w = np.array([1.0, 1.0, 2.0])
    d = weight_diagnostics(w)
    assert d["min"] == 1.0 and d["max"] == 2.0
    assert np.isclose(d["ess"], 16.0 / 6.0)
    assert not d["positivity_flag"]
    assert weight_diagnostics(np.array([1e-4, 1.0]))["positivity_flag"]

"""Gradient ascent with nearest-neighbor cluster updates.

The fit maximizes the weighted 1-bit hazard log-likelihood over a block
Tucker parameterization: warm start from a pooled discrete-hazard logistic
regression, factor initialization by truncated SVD of the warm-start tensor's
unfoldings, Lloyd k-means on the projected mode-3 rows, then alternating
gradient steps on the factors, a nearest-neighbor relabeling of the treatment
arms, and a gradient step on the core.

During the sweeps the factor matrices are deliberately left unnormalized so
that the overall scale of the parameter tensor is spread across all three
blocks.  With orthonormal factors the entire magnitude sits in the core,
whose partial gradient is then orders of magnitude smaller than the factor
gradients, and no shared stepsize can move both; splitting the scale keeps
the blocks comparably conditioned under a single stepsize.  The returned
``BlockTucker`` is re-orthonormalized (QR with the scale absorbed into the
core) so the reported decomposition has orthonormal factors while
reconstructing the same tensor the sweeps produced.

The relabeling is a single Lloyd assignment on the current tensor: the rows
of ``Theta x1 Q1' x2 Q2'`` (mode-3 unfolding) are reassigned to the nearest
projected block mean.  The block-mean rows are exactly the cluster centroids
of the projected arm rows, so the current labels are a fixed point whenever
every row is already nearest its own block mean.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import balance
from .data import ObservedPanel, cum_active, risk_matrix, validate
from .hazard import (
    BlockTucker,
    TheoryDiagnostics,
    grad_mode3_factor,
    grad_theta,
    grad_factors,
    membership_matrix,
    theory_diagnostics,
    weighted_loglik,
)
from .links import LinkFunction
from .tensor import mode_product, svd_top_r, unfold

__all__ = [
    "FitConfig",
    "FitResult",
    "init_theta",
    "init_factors",
    "init_clusters",
    "membership_and_W",
    "init_core",
    "pgd_iterate",
    "fit",
    "covariate_assisted_U1",
    "select_ranks_bic",
    "fit_group_glm",
]


@dataclass
class FitConfig:
    ranks: tuple[int, int, int] = (1, 1, 3)
    stepsize: float | None = None  # default resolved to stepsize_scale / (N * T)
    stepsize_scale: float = 0.1
    max_iter: int = 1000
    kmeans_restarts: int = 10
    tol: float = 1e-8
    seed: int = 0
    link: LinkFunction = field(default_factory=LinkFunction)
    weight_source: str = "entropy-balance"  # or "uniform", "provided"
    balance_order: int = 1
    covariate_assisted: bool = False
    mode3: str = "membership"  # or "factor" (no clustering; orthonormal U3)
    grad_refresh: bool = True  # recompute the gradient with updated factors before the core step
    init_clip: float = 10.0

    def __post_init__(self):
        r1, r2, r3 = self.ranks
        if min(r1, r2, r3) < 1:
            raise ValueError("ranks must be positive")
        if self.stepsize is not None and self.stepsize <= 0:
            raise ValueError("stepsize must be positive")
        if self.weight_source not in ("entropy-balance", "uniform", "provided"):
            raise ValueError(f"unknown weight source {self.weight_source!r}")
        if self.mode3 not in ("membership", "factor"):
            raise ValueError(f"unknown mode3 option {self.mode3!r}")


@dataclass
class FitResult:
    bt: BlockTucker | None
    theta_hat: np.ndarray
    loss_trace: np.ndarray
    labels: np.ndarray | None
    label_changes: list[int]
    diagnostics: TheoryDiagnostics | None
    converged: bool
    iterations: int
    wall_time: float
    U3: np.ndarray | None = None  # only for the factor-variant mode 3


def _hazard_rows(panel: ObservedPanel, extra_arm_feature: bool):
    """Person-period design for the pooled logistic warm start.

    Rows are the at-risk (unit, period) cells of the observed arms; failure
    rows of censored units get weight zero.
    """
    risk = risk_matrix(panel)
    arm = panel.arm_index()
    feats, resp, wts = [], [], []
    time_feat = (np.arange(1, panel.T + 1)) / panel.T
    cum_feat = np.array([cum_active(l, panel.k) for l in range(panel.n_arms)]) / panel.k
    w = panel.effective_weights()
    for i in range(panel.N):
        for t in range(panel.T):
            if risk[i, t] == 0:
                continue
            y = panel.Y[i, t]
            weight = w[i] * (1.0 if y == 1 else panel.delta[i])
            if weight == 0:
                continue
            row = [1.0, *panel.X[i], time_feat[t]]
            if extra_arm_feature:
                row.append(cum_feat[arm[i]])
            feats.append(row)
            resp.append(y)
            wts.append(weight)
    return np.array(feats), np.array(resp, dtype=float), np.array(wts)


def _irls_logistic(design, response, weights, max_iter=50, ridge=1e-8, tol=1e-10):
    """Weighted logistic regression by damped Newton; returns coefficients."""
    from scipy.special import expit

    n, p = design.shape
    beta = np.zeros(p)
    for _ in range(max_iter):
        eta = np.clip(design @ beta, -30, 30)
        mu = expit(eta)
        grad = design.T @ (weights * (response - mu)) - ridge * beta
        curv = weights * mu * (1 - mu)
        hess = design.T @ (design * curv[:, None]) + ridge * np.eye(p)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad / max(np.abs(curv).sum(), 1.0)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    return beta


def init_theta(panel: ObservedPanel, link: LinkFunction, clip: float = 10.0) -> np.ndarray:
    """Warm-start tensor from a pooled discrete-hazard logistic regression.

    Features: intercept, covariates, normalized period, and normalized
    active-treatment count; the fitted linear predictor is evaluated on every
    (unit, period, arm) cell, clipped to ``[-clip, clip]``.
    """
    design, response, weights = _hazard_rows(panel, extra_arm_feature=True)
    if design.size == 0 or len(set(response.tolist())) < 2:
        warnings.warn("degenerate warm-start design; falling back to a zero tensor", stacklevel=2)
        return np.zeros((panel.N, panel.T, panel.n_arms))
    beta = _irls_logistic(design, response, weights)
    intercept, bx, bt, bc = beta[0], beta[1 : 1 + panel.d], beta[1 + panel.d], beta[2 + panel.d]
    time_feat = np.arange(1, panel.T + 1) / panel.T
    cum_feat = np.array([cum_active(l, panel.k) for l in range(panel.n_arms)]) / panel.k
    theta0 = (
        intercept
        + (panel.X @ bx)[:, None, None]
        + (bt * time_feat)[None, :, None]
        + (bc * cum_feat)[None, None, :]
    )
    return np.clip(theta0, -clip, clip)


def init_factors(theta0: np.ndarray, ranks: tuple[int, int, int]):
    """Truncated-SVD factors from the warm-start tensor's unfoldings."""
    r1, r2, _ = ranks
    u1, _ = svd_top_r(unfold(theta0, 1), r1)
    u2, _ = svd_top_r(unfold(theta0, 2), r2)
    return u1, u2


def _refill_empty(labels: np.ndarray, dists: np.ndarray, r3: int) -> None:
    """Moves the farthest-from-its-center rows into empty clusters, in place.

    Each empty cluster takes a distinct donor row, so several empty clusters
    cannot fight over the same row.
    """
    taken = set()
    for b in range(r3):
        if (labels == b).any():
            continue
        order = np.argsort(dists.min(axis=1))[::-1]
        candidates = [
            far for far in order
            if far not in taken and (labels == labels[far]).sum() > 1
        ]
        if not candidates:  # every cluster is a singleton; take any free row
            candidates = [far for far in order if far not in taken]
        far = candidates[0]
        labels[far] = b
        taken.add(int(far))


def _lloyd(rows: np.ndarray, r3: int, restarts: int, seed: int, max_iter: int = 100):
    """K-means with deterministic seeded restarts and farthest-point refill."""
    n = rows.shape[0]
    best_labels, best_wcss = None, np.inf
    for rep in range(restarts):
        rng = np.random.default_rng(seed + rep)
        centers = rows[rng.choice(n, size=r3, replace=False)].copy()
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            dists = ((rows[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = dists.argmin(axis=1)
            _refill_empty(new_labels, dists, r3)
            if (new_labels == labels).all() and _ > 0:
                break
            labels = new_labels
            for b in range(r3):
                centers[b] = rows[labels == b].mean(axis=0)
        wcss = float(((rows - centers[labels]) ** 2).sum())
        if wcss < best_wcss - 1e-15:
            best_wcss, best_labels = wcss, labels.copy()
    return best_labels, best_wcss


def init_clusters(theta0, u1, u2, r3: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Cluster the projected mode-3 rows of the warm-start tensor."""
    projected = mode_product(mode_product(theta0, 1, u1.T), 2, u2.T)
    rows = unfold(projected, 3)
    if rows.shape[0] < r3:
        raise ValueError(f"need at least r3={r3} arms, got {rows.shape[0]}")
    labels, _ = _lloyd(rows, r3, restarts, seed)
    return labels


def membership_and_W(z: np.ndarray, r3: int):
    """One-hot membership and its column-normalized (averaging) companion."""
    m = membership_matrix(z, r3)
    counts = m.sum(axis=0)
    if (counts == 0).any():
        raise ValueError("empty cluster")
    return m, m / counts


def init_core(theta0, u1, u2, w):
    """Projected block means ``theta0 x1 U1' x2 U2' x3 W'``."""
    return mode_product(mode_product(mode_product(theta0, 1, u1.T), 2, u2.T), 3, np.asarray(w).T)


def _orthonormalize(u: np.ndarray) -> np.ndarray:
    """QR projection onto orthonormal matrices, continuous in the input.

    The sign convention (positive R diagonal) keeps each column of Q aligned
    with the corresponding input column, so a small gradient step never flips
    a factor's sign out from under the core.
    """
    q, r = np.linalg.qr(u)
    flip = np.sign(np.diag(r))
    flip[flip == 0] = 1.0
    return q * flip[None, :]


def covariate_assisted_U1(panel: ObservedPanel, u1: np.ndarray, ridge: float = 1e-8):
    """Least-squares split of U1 into a covariate-explained part and residual."""
    x = panel.X
    gram = x.T @ x + ridge * np.eye(panel.d)
    u10 = np.linalg.solve(gram, x.T @ u1)
    u11 = u1 - x @ u10
    return u10, u11


def _span_projector(x: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Orthogonal projector onto the column span of the covariate matrix."""
    gram = x.T @ x + ridge * np.eye(x.shape[1])
    return x @ np.linalg.solve(gram, x.T)


@dataclass
class _State:
    core: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    z: np.ndarray | None
    u3: np.ndarray | None
    loss: float


def _balance_scale(state: _State) -> None:
    """Spread the core's magnitude evenly across the free blocks, in place.

    After initialization the factor matrices are orthonormal and all of the
    tensor's scale sits in the core, which makes the core's gradient orders of
    magnitude smaller than the factor gradients under a shared stepsize.
    Splitting the norm evenly (cube roots over ``U1, U2, core``, fourth roots
    when mode 3 is a free factor too) leaves the reconstruction unchanged while
    equalizing the blocks' sensitivities.
    """
    s = float(np.linalg.norm(state.core))
    if s <= 0.0:
        return
    if state.u3 is None:
        root = s ** (1.0 / 3.0)
        state.u1 = state.u1 * root
        state.u2 = state.u2 * root
        state.core = state.core / s * root
    else:
        root = s ** (1.0 / 4.0)
        state.u1 = state.u1 * root
        state.u2 = state.u2 * root
        state.u3 = state.u3 * root
        state.core = state.core / s * root


def _renormalize_output(state: _State) -> None:
    """Restore orthonormal factors in place without changing the reconstruction.

    The sweep loop lets scale live in the factor matrices; before reporting we
    QR-factor ``U1`` and ``U2`` (and ``U3`` when it is a free factor) and absorb
    the triangular parts into the core, so downstream consumers see orthonormal
    factors and a core that carries all of the magnitude.
    """
    q1, r1 = np.linalg.qr(state.u1)
    q2, r2 = np.linalg.qr(state.u2)
    state.u1, state.u2 = q1, q2
    state.core = mode_product(mode_product(state.core, 1, r1), 2, r2)
    if state.u3 is not None:
        q3, r3m = np.linalg.qr(state.u3)
        state.u3 = q3
        state.core = mode_product(state.core, 3, r3m)


def _mode3_matrix(state: _State, r3: int) -> np.ndarray:
    if state.z is not None:
        return membership_matrix(state.z, r3)
    return state.u3


def _reconstruct(state: _State, r3: int) -> np.ndarray:
    m = _mode3_matrix(state, r3)
    return mode_product(mode_product(mode_product(state.core, 1, state.u1), 2, state.u2), 3, m)


def pgd_iterate(
    state: _State,
    panel: ObservedPanel,
    link: LinkFunction,
    config: FitConfig,
    eta: float,
) -> _State:
    """One full sweep of factor, label and core updates; returns the new state."""
    r3 = state.core.shape[2]
    theta = _reconstruct(state, r3)
    grad = grad_theta(panel, theta, link)
    m_old = _mode3_matrix(state, r3)

    # factor ascent steps, both gradients at the start-of-sweep state
    if state.z is not None:
        bt = BlockTucker(core=state.core, U1=state.u1, U2=state.u2, z=state.z)
        _, d_u1, d_u2 = grad_factors(grad, bt)
    else:
        proj23 = mode_product(mode_product(grad, 2, state.u2.T), 3, state.u3.T)
        d_u1 = unfold(proj23, 1) @ unfold(state.core, 1).T
        proj13 = mode_product(mode_product(grad, 1, state.u1.T), 3, state.u3.T)
        d_u2 = unfold(proj13, 2) @ unfold(state.core, 2).T
    u1 = state.u1 + eta * d_u1
    u2 = state.u2 + eta * d_u2
    if config.covariate_assisted:
        u1 = _span_projector(panel.X) @ u1

    z_new = state.z
    u3_new = state.u3
    if state.z is not None:
        # nearest-neighbor relabeling: one Lloyd assignment of the projected
        # arm rows to the projected block means, in the orthonormalized basis
        theta_mid = mode_product(mode_product(mode_product(state.core, 1, u1), 2, u2), 3, m_old)
        grad_mid = grad_theta(panel, theta_mid, link) if config.grad_refresh else grad
        q1 = _orthonormalize(u1)
        q2 = _orthonormalize(u2)
        projected = mode_product(mode_product(theta_mid, 1, q1.T), 2, q2.T)
        f_rows = unfold(projected, 3)
        w_old = m_old / m_old.sum(axis=0)
        s_rows = unfold(mode_product(projected, 3, w_old.T), 3)
        dists = ((f_rows[:, None, :] - s_rows[None, :, :]) ** 2).sum(axis=2)
        z_new = dists.argmin(axis=1)
        _refill_empty(z_new, dists, r3)
        m_new = membership_matrix(z_new, r3)
        if config.grad_refresh and not np.array_equal(z_new, state.z):
            theta_mid = mode_product(mode_product(mode_product(state.core, 1, u1), 2, u2), 3, m_new)
            grad_mid = grad_theta(panel, theta_mid, link)
        d_core = mode_product(mode_product(mode_product(grad_mid, 1, u1.T), 2, u2.T), 3, m_new.T)
    else:
        theta_mid = mode_product(mode_product(mode_product(state.core, 1, u1), 2, u2), 3, state.u3)
        grad_mid = grad_theta(panel, theta_mid, link) if config.grad_refresh else grad
        d_u3 = grad_mode3_factor(grad_mid, state.core, u1, u2, state.u3)
        u3_new = state.u3 + eta * d_u3
        d_core = mode_product(
            mode_product(mode_product(grad_mid, 1, u1.T), 2, u2.T), 3, u3_new.T
        )

    core = state.core + eta * d_core
    new_state = _State(core=core, u1=u1, u2=u2, z=z_new, u3=u3_new, loss=np.nan)
    if not np.isfinite(core).all() or np.abs(core).max() > 1e10:
        raise FloatingPointError("core blew up during sweep")
    new_state.loss = weighted_loglik(panel, _reconstruct(new_state, r3), link)
    if not np.isfinite(new_state.loss):
        raise FloatingPointError("non-finite loss during sweep")
    return new_state


def resolve_weights(panel: ObservedPanel, config: FitConfig) -> ObservedPanel:
    """Returns a panel whose weights field matches the configured source."""
    if config.weight_source == "provided":
        if panel.weights is None:
            raise ValueError("weight source 'provided' but the panel has no weights")
        return panel
    if config.weight_source == "uniform":
        return ObservedPanel(panel.X, panel.A, panel.delta, panel.Y, np.ones(panel.N))
    solved = balance.balance_panel(panel, order=config.balance_order)
    w = balance.combine_weights(panel, solved)
    return ObservedPanel(panel.X, panel.A, panel.delta, panel.Y, w)


def fit(panel: ObservedPanel, config: FitConfig) -> FitResult:
    """Full pipeline: weights, warm start, initialization, PGD sweeps."""
    start = time.perf_counter()
    problems = validate(panel)
    if problems:
        raise ValueError("invalid panel: " + "; ".join(problems[:5]))
    r1, r2, r3 = config.ranks
    if r1 > panel.N or r2 > panel.T or r3 > panel.n_arms:
        raise ValueError(f"ranks {config.ranks} exceed panel dims "
                         f"({panel.N}, {panel.T}, {panel.n_arms})")
    panel = resolve_weights(panel, config)
    link = config.link
    eta = config.stepsize if config.stepsize is not None else config.stepsize_scale / (panel.N * panel.T)

    # warm start from the unweighted panel: the initializer is not the
    # estimand, and weighting it only inflates its variance at small N
    theta0 = init_theta(
        ObservedPanel(panel.X, panel.A, panel.delta, panel.Y, np.ones(panel.N)),
        link,
        clip=config.init_clip,
    )
    if not theta0.any():
        theta0 = theta0 + 1e-6  # keep the SVD well defined on the degenerate path

    def initialize():
        u1, u2 = init_factors(theta0, config.ranks)
        if config.covariate_assisted:
            u1 = _orthonormalize(_span_projector(panel.X) @ u1)
        if config.mode3 == "membership":
            z = init_clusters(theta0, u1, u2, r3, config.kmeans_restarts, config.seed)
            _, w = membership_and_W(z, r3)
            core = init_core(theta0, u1, u2, w)
            st = _State(core=core, u1=u1, u2=u2, z=z, u3=None, loss=np.nan)
        else:
            u3, _ = svd_top_r(unfold(theta0, 3), r3)
            core = mode_product(
                mode_product(mode_product(theta0, 1, u1.T), 2, u2.T), 3, u3.T
            )
            st = _State(core=core, u1=u1, u2=u2, z=None, u3=u3, loss=np.nan)
        _balance_scale(st)
        st.loss = weighted_loglik(panel, _reconstruct(st, r3), link)
        return st

    state = initialize()
    init_loss = state.loss
    losses = [state.loss]
    label_changes = []
    converged = False
    plateau = 0
    backoff_used = False
    sweep = 0
    while sweep < config.max_iter:
        prev = state
        try:
            state = pgd_iterate(state, panel, link, config, eta)
        except FloatingPointError:
            warnings.warn("aborting on non-finite loss; returning last finite state", stacklevel=2)
            state = prev
            break
        sweep += 1
        if sweep == 1 and not backoff_used and state.loss < init_loss - 0.1 * abs(init_loss):
            # first sweep overshot; halve the stepsize once and restart
            backoff_used = True
            eta *= 0.5
            state = initialize()
            losses = [state.loss]
            sweep = 0
            continue
        if prev.z is not None and not np.array_equal(prev.z, state.z):
            label_changes.append(sweep)
        rel = abs(state.loss - prev.loss) / max(abs(prev.loss), 1e-12)
        plateau = plateau + 1 if rel < config.tol else 0
        losses.append(state.loss)
        if plateau >= 5:
            converged = True
            break

    theta_hat = _reconstruct(state, r3)
    _renormalize_output(state)
    if state.z is not None:
        bt = BlockTucker(core=state.core, U1=state.u1, U2=state.u2, z=state.z)
        diag = theory_diagnostics(bt, link, panel=panel, theta=theta_hat)
    else:
        bt, diag = None, None
    return FitResult(
        bt=bt,
        theta_hat=theta_hat,
        loss_trace=np.array(losses),
        labels=state.z.copy() if state.z is not None else None,
        label_changes=label_changes,
        diagnostics=diag,
        converged=converged,
        iterations=sweep,
        wall_time=time.perf_counter() - start,
        U3=state.u3,
    )


def _bic(panel: ObservedPanel, result: FitResult, ranks) -> float:
    r1, r2, r3 = ranks
    risk = risk_matrix(panel)
    n_obs = int(
        (risk * (panel.Y + (1 - panel.Y) * panel.delta[:, None])).sum()
    )
    df = r1 * r2 * r3 + panel.N * r1 + panel.T * r2 + panel.n_arms
    loglik = result.loss_trace[-1]
    return float(-2.0 * loglik + df * np.log(max(n_obs, 2)))


def select_ranks_bic(panel: ObservedPanel, grid, config: FitConfig):
    """Sequential coordinate search over the rank grid, minimizing a BIC-type
    criterion; ties break toward the smaller rank."""
    from dataclasses import replace

    grids = [sorted(set(g)) for g in grid]
    if any(len(g) == 0 for g in grids):
        raise ValueError("empty rank grid")
    current = [g[0] for g in grids]
    for axis in range(3):
        best_val, best_r = np.inf, current[axis]
        for r in grids[axis]:
            trial = current.copy()
            trial[axis] = r
            cfg = replace(config, ranks=tuple(trial))
            try:
                result = fit(panel, cfg)
            except ValueError:
                continue
            val = _bic(panel, result, trial)
            if val < best_val - 1e-9:
                best_val, best_r = val, r
        current[axis] = best_r
    return tuple(current)


def fit_group_glm(panel: ObservedPanel, group_labels: np.ndarray) -> np.ndarray:
    """Pooled logistic hazard fit stratified by a known arm grouping.

    For each group, a weighted logistic regression with intercept, covariate
    and normalized-period features is fit on the units observed in that
    group's arms; the fitted predictor fills every (i, t, l) cell with l in
    the group.  Used as the no-latent-factor ablation variant.
    """
    group_labels = np.asarray(group_labels, dtype=int)
    arm = panel.arm_index()
    theta = np.zeros((panel.N, panel.T, panel.n_arms))
    time_feat = np.arange(1, panel.T + 1) / panel.T
    risk = risk_matrix(panel)
    w = panel.effective_weights()
    for g in np.unique(group_labels):
        arms_in_g = np.flatnonzero(group_labels == g)
        units = np.flatnonzero(np.isin(arm, arms_in_g))
        feats, resp, wts = [], [], []
        for i in units:
            for t in range(panel.T):
                if risk[i, t] == 0:
                    continue
                y = panel.Y[i, t]
                weight = w[i] * (1.0 if y == 1 else panel.delta[i])
                if weight == 0:
                    continue
                feats.append([1.0, *panel.X[i], time_feat[t]])
                resp.append(y)
                wts.append(weight)
        if not feats or len(set(resp)) < 2:
            continue  # leave this group at zero
        beta = _irls_logistic(np.array(feats), np.array(resp, dtype=float), np.array(wts))
        pred = beta[0] + panel.X @ beta[1 : 1 + panel.d]
        block = pred[:, None] + (beta[1 + panel.d] * time_feat)[None, :]
        for l in arms_in_g:
            theta[:, :, l] = np.clip(block, -10, 10)
    return theta

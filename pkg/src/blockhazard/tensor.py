"""Dense 3-mode tensor algebra.

Storage convention: tensors are ``numpy`` arrays of shape ``(p1, p2, p3)``.
The fixed linearization is Fortran order (index 1 fastest, index 3 slowest),
and all indices are 0-based.

Unfolding convention (cyclic): the mode-k unfolding puts mode k on the rows
and orders the columns with mode k+1 (cyclically) fastest.  For mode 1 the
column index of element ``(i1, i2, i3)`` is ``i2 + p2 * i3``; mode 2 uses
``i3 + p3 * i1``; mode 3 uses ``i1 + p1 * i2``.  Under this convention the
mode-1 unfolding of a Tucker product ``S x1 U1 x2 U2 x3 U3`` equals
``U1 @ unfold(S, 1) @ kron(U3, U2).T``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_dense3",
    "unfold",
    "fold",
    "mode_product",
    "tucker_reconstruct",
    "kron",
    "frobenius_norm",
    "max_norm",
    "inner",
    "svd_top_r",
]

# cyclic axis order used by unfold/fold for each mode
_AXES = {1: (0, 1, 2), 2: (1, 2, 0), 3: (2, 0, 1)}


def check_dense3(t: np.ndarray) -> np.ndarray:
    """Validates that ``t`` is a finite real 3-mode array."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 3:
        raise ValueError(f"expected a 3-mode tensor, got ndim={t.ndim}")
    return t


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-k unfolding into a matrix (see module docstring for the layout)."""
    t = check_dense3(t)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    moved = np.transpose(t, _AXES[mode])
    return moved.reshape(moved.shape[0], -1, order="F")


def fold(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold` for the given target dims."""
    m = np.asarray(m, dtype=float)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    p1, p2, p3 = dims
    shape = tuple((p1, p2, p3)[a] for a in _AXES[mode])
    if m.shape != (shape[0], shape[1] * shape[2]):
        raise ValueError(f"matrix shape {m.shape} does not match unfold({dims}, {mode})")
    moved = m.reshape(shape, order="F")
    inverse = np.argsort(_AXES[mode])
    return np.transpose(moved, inverse)


def mode_product(t: np.ndarray, mode: int, u: np.ndarray) -> np.ndarray:
    """Mode-k tensor-matrix product; output size along ``mode`` is ``u.shape[0]``."""
    t = check_dense3(t)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != t.shape[mode - 1]:
        raise ValueError(
            f"matrix has {u.shape[1]} columns but tensor mode {mode} has size {t.shape[mode - 1]}"
        )
    dims = list(t.shape)
    dims[mode - 1] = u.shape[0]
    return fold(u @ unfold(t, mode), mode, tuple(dims))


def tucker_reconstruct(
    core: np.ndarray, u1: np.ndarray, u2: np.ndarray, u3: np.ndarray
) -> np.ndarray:
    """Assembles ``core x1 u1 x2 u2 x3 u3``."""
    out = mode_product(core, 1, u1)
    out = mode_product(out, 2, u2)
    return mode_product(out, 3, u3)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product (the second factor's indices vary fastest)."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t, dtype=float)))


def max_norm(t: np.ndarray) -> float:
    t = np.asarray(t, dtype=float)
    return float(np.max(np.abs(t))) if t.size else 0.0


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Tensor inner product ``sum_ijk a_ijk b_ijk``."""
    return float(np.sum(np.asarray(a, dtype=float) * np.asarray(b, dtype=float)))


def _fix_signs(u: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: first entry of nonneglible magnitude positive."""
    u = u.copy()
    for j in range(u.shape[1]):
        col = u[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
    return u


def svd_top_r(m: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-r left singular vectors and singular values.

    Computed through a symmetric eigendecomposition of the smaller Gram
    matrix, so no general SVD routine is needed for the tall-thin matrices
    that arise here.  Columns follow the package sign convention.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n_rows, n_cols = m.shape
    if not 1 <= r <= min(n_rows, n_cols):
        raise ValueError(f"rank {r} out of range for shape {m.shape}")
    if n_rows <= n_cols:
        gram = m @ m.T
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:r]
        svals = np.sqrt(np.clip(evals[order], 0.0, None))
        u = evecs[:, order]
    else:
        gram = m.T @ m
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:r]
        svals = np.sqrt(np.clip(evals[order], 0.0, None))
        v = evecs[:, order]
        u = m @ v
        # normalize; a zero singular value leaves an arbitrary orthonormal completion
        for j in range(r):
            norm = np.linalg.norm(u[:, j])
            if norm > 1e-12:
                u[:, j] /= norm
            else:
                u[:, j] = 0.0
        u = _complete_orthonormal(u)
    return _fix_signs(u), svals


def _complete_orthonormal(u: np.ndarray) -> np.ndarray:
    """Replaces zero columns with arbitrary orthonormal directions."""
    zero_cols = [j for j in range(u.shape[1]) if np.linalg.norm(u[:, j]) < 1e-12]
    if not zero_cols:
        return u
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((u.shape[0], u.shape[0])))
    filled = u.copy()
    used = [j for j in range(u.shape[1]) if j not in zero_cols]
    basis = q
    for j in zero_cols:
        for cand in basis.T:
            proj = cand - filled[:, used] @ (filled[:, used].T @ cand) if used else cand
            norm = np.linalg.norm(proj)
            if norm > 1e-8:
                filled[:, j] = proj / norm
                used.append(j)
                break
    return filled

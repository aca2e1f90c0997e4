"""Shared dense linear-algebra helpers.

All solvers go through a symmetric eigendecomposition with an explicit
smallest-eigenvalue gate: rank deficiency raises instead of silently
regularizing or falling back to a pseudo-inverse.
"""

from __future__ import annotations

import numpy as np


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part of a square matrix."""
    return 0.5 * (a + a.T)


def max_abs(a: np.ndarray) -> float:
    """Largest absolute entry, 0.0 for empty input."""
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def rel_scale(a: np.ndarray) -> float:
    """Scale used for relative tolerances: max(1, max-abs entry)."""
    return max(1.0, max_abs(a))


def gated_eigh(a: np.ndarray, rank_tol: float, error: Exception):
    """Eigendecompose a symmetric matrix, raising ``error`` when the
    smallest eigenvalue does not clear ``rank_tol`` times the largest."""
    eigvals, eigvecs = np.linalg.eigh(sym(a))
    lam_max = eigvals[-1] if eigvals.size else 0.0
    if lam_max <= 0.0 or eigvals[0] <= rank_tol * lam_max:
        raise error
    return eigvals, eigvecs


def gated_solve(a: np.ndarray, b: np.ndarray, rank_tol: float,
                error: Exception) -> np.ndarray:
    """Solve the symmetric system ``a x = b`` with eigenvalue gating."""
    eigvals, eigvecs = gated_eigh(a, rank_tol, error)
    w = eigvecs.T @ b
    w = w / (eigvals if w.ndim == 1 else eigvals[:, None])
    return eigvecs @ w


def gated_inverse(a: np.ndarray, rank_tol: float,
                  error: Exception) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix with gating."""
    eigvals, eigvecs = gated_eigh(a, rank_tol, error)
    return sym((eigvecs / eigvals) @ eigvecs.T)


def quad_form_inv(a: np.ndarray, v: np.ndarray, rank_tol: float,
                  error: Exception) -> float:
    """Quadratic form v^T a^{-1} v for symmetric positive definite ``a``."""
    eigvals, eigvecs = gated_eigh(a, rank_tol, error)
    w = eigvecs.T @ v
    return float(np.sum(w * w / eigvals))


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; tiny negative eigenvalues are clipped."""
    eigvals, eigvecs = np.linalg.eigh(sym(a))
    eigvals = np.clip(eigvals, 0.0, None)
    return sym((eigvecs * np.sqrt(eigvals)) @ eigvecs.T)

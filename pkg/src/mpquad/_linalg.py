"""Small dense linear-algebra helpers shared by the allocation modules."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

SYMMETRY_TOL = 1e-12
IDENTITY_TOL = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError, ValueError):
    """Raised when a matrix that must be positive definite is not."""


def as_vector(x, name: str = "vector") -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def as_square(x, name: str = "matrix") -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_symmetric(a: np.ndarray, name: str = "matrix", tol: float = SYMMETRY_TOL) -> None:
    if np.max(np.abs(a - a.T), initial=0.0) > tol:
        raise ValueError(f"{name} is not symmetric within {tol:g}")


def cho(a: np.ndarray, name: str = "matrix"):
    """Cholesky factor of ``a`` in scipy's ``cho_factor`` form.

    No regularization is applied; failure means ``a`` is not positive definite.
    """
    try:
        return sla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc


def spd_solve(a: np.ndarray, b: np.ndarray, name: str = "matrix") -> np.ndarray:
    return sla.cho_solve(cho(a, name), b, check_finite=False)


def spd_inverse(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    inv = spd_solve(a, np.eye(a.shape[0]), name)
    return 0.5 * (inv + inv.T)


def psd_factor(a: np.ndarray) -> np.ndarray:
    """Return ``F`` with ``F @ F.T == a`` for a positive semidefinite ``a``.

    Uses the Cholesky factor when it exists and a symmetric eigen-square-root
    otherwise, so zero eigenvalues are tolerated.
    """
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(a)
        scale = max(1.0, float(np.max(np.abs(vals), initial=0.0)))
        if vals.min(initial=0.0) < -1e-12 * scale:
            raise NotPositiveDefiniteError("matrix is not positive semidefinite") from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def rowdot(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply ``m`` to every row of ``x`` (shape ``(..., n)`` -> ``(..., r)``).

    Elementwise products reduced with ``np.sum`` keep each row's result
    independent of how many rows are processed together, unlike BLAS matmul.
    """
    return np.sum(m * x[..., None, :], axis=-1)


def sherman_morrison_inverse(sigma_inv: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(Sigma + v v')^{-1}`` from ``Sigma^{-1}`` by the rank-one update formula."""
    u = sigma_inv @ v
    return sigma_inv - np.outer(u, u) / (1.0 + v @ u)

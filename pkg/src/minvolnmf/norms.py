"""Dense-matrix utilities shared by the whole package.

Column-wise norms, singular-value quantities, the squared simplex volume
det(W^T W), and a truncated Moore-Penrose pseudoinverse.  Everything accepts
any 2-D array-like with finite float entries; SVD is the single source for
spectral quantities.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "norm_12",
    "norm_1_induced",
    "singular_values",
    "spectral_norm",
    "sigma_r",
    "gram_volume",
    "pseudoinverse",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return *a* as a 2-D float64 array, rejecting NaN/Inf entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return m


def _nonempty(m: np.ndarray, op: str) -> None:
    if m.size == 0:
        raise ValueError(f"empty input to {op}")


def norm_12(a) -> float:
    """Maximum Euclidean column norm, the induced (1,2) norm."""
    m = as_matrix(a)
    _nonempty(m, "norm_12")
    return float(np.sqrt((m * m).sum(axis=0)).max())


def norm_1_induced(a) -> float:
    """Maximum absolute column sum, the induced 1-norm."""
    m = as_matrix(a)
    _nonempty(m, "norm_1_induced")
    return float(np.abs(m).sum(axis=0).max())


def singular_values(a) -> np.ndarray:
    """All singular values of *a*, descending."""
    m = as_matrix(a)
    _nonempty(m, "singular_values")
    return np.linalg.svd(m, compute_uv=False)


def spectral_norm(a) -> float:
    """Largest singular value."""
    return float(singular_values(a)[0])


def sigma_r(a, r: int) -> float:
    """The r-th largest singular value (1-based)."""
    s = singular_values(a)
    if not 1 <= r <= s.size:
        raise ValueError(f"singular value index r={r} out of range [1, {s.size}]")
    return float(s[r - 1])


def gram_volume(w) -> float:
    """Squared volume det(W^T W) of the columns of W.

    Computed from an LU factorization of the Gram matrix; rank-deficient
    inputs return a value that is zero up to rounding.
    """
    m = as_matrix(w, "W")
    _nonempty(m, "gram_volume")
    if m.shape[1] > m.shape[0]:
        return 0.0
    return float(np.linalg.det(m.T @ m))


def pseudoinverse(w, rcond: float = 1e-12) -> np.ndarray:
    """Moore-Penrose pseudoinverse with singular values below rcond*sigma_1 dropped."""
    m = as_matrix(w, "W")
    _nonempty(m, "pseudoinverse")
    return np.linalg.pinv(m, rcond=rcond)

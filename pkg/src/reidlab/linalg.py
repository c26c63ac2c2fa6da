"""Small dense linear-algebra helpers shared across the package.

Everything is float64. Inputs are validated here so the kernel backends can
assume well-formed C-contiguous arrays.
"""

from __future__ import annotations

import numpy as np


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    return a


def as_vector(x, name: str = "vector") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {a.shape}")
    return a


def cosine_similarity(u, v) -> float:
    """cos(u, v) = u.v / (|u| |v|), defined only for nonzero vectors."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape[0] != v.shape[0]:
        raise ValueError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    if u.shape[0] == 0:
        raise ValueError("cosine similarity needs length >= 1")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm input")
    return float(np.dot(u, v)) / (nu * nv)


def pairwise_sq_euclidean(a, b) -> np.ndarray:
    """Matrix of squared Euclidean distances between rows of a and rows of b.

    Entry (i, j) = |a_i - b_j|^2, computed via |a|^2 + |b|^2 - 2 a.b and
    clamped at 0 to kill negative rounding epsilons.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"inner dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d

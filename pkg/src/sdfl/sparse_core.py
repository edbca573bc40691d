"""Dense vectors with the hard-thresholding projection used throughout.

Model parameters are plain 1-d float64 numpy arrays ("model vectors").
The projection keeps the s largest-magnitude entries and zeroes the rest,
which is the Euclidean projection onto {w : ||w||_0 <= s}. Ties between
equal magnitudes are broken toward the lowest index so that every caller
sees one deterministic representative of the (set-valued) projection.
"""

import numpy as np

from . import kernels


def as_model_vector(values) -> np.ndarray:
    """Coerce to a float64 1-d array and reject non-finite entries."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"model vector must be 1-d, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("model vector contains NaN or Inf")
    return v


def check_sparsity_budget(s: int, n: int) -> int:
    s = int(s)
    if not 1 <= s:
        raise ValueError(f"sparsity budget must be >= 1, got {s}")
    return s


def support_indices(v: np.ndarray, s: int) -> np.ndarray:
    """Indices of the s largest-magnitude entries, ties to the lowest index.

    Entries that are exactly zero still count toward the budget when fewer
    than s nonzeros exist; the projection below zeroes them anyway.
    """
    return kernels.top_s_indices(np.asarray(v, dtype=np.float64), int(s))


def hard_threshold(v: np.ndarray, s: int) -> np.ndarray:
    """Keep the s largest entries of v in absolute value, zero the rest.

    s >= len(v) returns a copy of v unchanged. Kept entries are exactly the
    input entries (no shrinkage).
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    if s >= n:
        return v.copy()
    out = np.zeros_like(v)
    idx = support_indices(v, s)
    out[idx] = v[idx]
    return out


def project_columns(W: np.ndarray, s: int) -> np.ndarray:
    """Column-wise hard threshold of an n x m matrix."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError("expected a 2-d array")
    out = np.zeros_like(W)
    for j in range(W.shape[1]):
        out[:, j] = hard_threshold(W[:, j], s)
    return out


def euclidean_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=np.float64)))


def frobenius_norm(W: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(W, dtype=np.float64)))


def sparse_readout(v: np.ndarray):
    """(indices, values) view of the nonzeros, for message building.

    Not a canonical representation; the dense array stays authoritative.
    """
    v = np.asarray(v)
    idx = np.flatnonzero(v)
    return idx, v[idx]

"""Pure-numpy kernels: top-s selection and the one-bit sign solver loop.

These are the reference implementations; `sdfl._biht_cy` provides a compiled
twin of each function. Both follow the same deterministic rules (ties toward
the lowest index, sign(0) = -1) so supports always agree; floating-point
accumulation order may differ between the backends.
"""

import numpy as np

BACKEND = "numpy"


def top_s_indices(v: np.ndarray, s: int) -> np.ndarray:
    """Indices (ascending) of the s largest |v| entries, ties to lowest index."""
    n = v.shape[0]
    if s <= 0:
        return np.empty(0, dtype=np.int64)
    if s >= n:
        return np.arange(n, dtype=np.int64)
    a = np.abs(v)
    kth = np.partition(a, n - s)[n - s]
    greater = np.flatnonzero(a > kth)
    need = s - greater.size
    if need <= 0:
        return greater[:s].astype(np.int64)
    equal = np.flatnonzero(a == kth)[:need]
    idx = np.concatenate([greater, equal])
    idx.sort()
    return idx.astype(np.int64)


def biht_solve(phi, bits, s, max_iters, stall_iters, step):
    """Sign-consistency solver: find unit-norm v, ||v||_0 <= s, sign(phi v) ~ bits.

    Subgradient step on the one-sided sign loss, hard threshold to s entries,
    renormalize; keeps the best (fewest sign mismatches) iterate seen. Stops
    on full consistency, on `stall_iters` steps without improvement, or at
    `max_iters` steps.

    Returns (v, mismatches, iters): the best unit vector, its mismatch count,
    and the number of gradient steps performed. A zero initial correlation is
    reported as (zeros, d, 0), which callers treat as a decode failure.
    """
    d, n = phi.shape
    c = np.asarray(bits, dtype=np.float64)

    a = phi.T @ c
    idx = top_s_indices(a, s)
    v = np.zeros(n)
    v[idx] = a[idx]
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return np.zeros(n), d, 0
    v /= nv

    best_v = v.copy()
    best_mis = d + 1
    since_improved = 0
    it = 0
    while True:
        y = phi[:, idx] @ v[idx]
        yp = np.where(y > 0.0, 1.0, -1.0)
        mism = np.flatnonzero(yp != c)
        mis = mism.size
        if mis < best_mis:
            best_mis = mis
            best_v = v.copy()
            since_improved = 0
        else:
            since_improved += 1
        if mis == 0 or since_improved >= stall_iters or it >= max_iters:
            break
        it += 1
        a = v.copy()
        a += step * (c[mism] @ phi[mism, :])
        idx = top_s_indices(a, s)
        v = np.zeros(n)
        v[idx] = a[idx]
        nv = np.linalg.norm(v)
        if nv == 0.0:
            break
        v /= nv
    return best_v, int(best_mis), it

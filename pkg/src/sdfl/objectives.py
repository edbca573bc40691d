"""Loss functions, synthetic problem generation, and dataset ingestion.

Two per-node objectives are supported:
  linreg:  f_i(w) = ||A_i w - b_i||^2 / (2 m_i)
  logreg:  f_i(w) = (1/m_i) sum_t [ln(1 + e^<a_t, w>) - b_t <a_t, w>]
                    + (lam/2) ||w||^2,  labels b_t in {0, 1}

The synthetic regression family plants an exactly s-sparse ground truth with
nonzero magnitudes uniform on [0.5, 2] (random signs) and observes
b_i = A_i w* + noise_scale * e_i with standard-normal A_i and e_i.
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class NodeDataset:
    features: np.ndarray  # m_i x n
    labels: np.ndarray    # m_i

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be 2-d, labels 1-d")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("row count mismatch between features and labels")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))):
            raise ValueError("dataset contains NaN or Inf")

    @property
    def m_i(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]


def linreg_value(w: np.ndarray, data: NodeDataset) -> float:
    r = data.features @ w - data.labels
    return float(r @ r) / (2.0 * data.m_i)


def linreg_grad(w: np.ndarray, data: NodeDataset) -> np.ndarray:
    r = data.features @ w - data.labels
    return (data.features.T @ r) / data.m_i


def logreg_value(w: np.ndarray, data: NodeDataset, lam: float) -> float:
    _check_binary_labels(data.labels)
    z = data.features @ w
    # ln(1 + e^z) evaluated overflow-safely
    val = float(np.sum(np.logaddexp(0.0, z) - data.labels * z)) / data.m_i
    return val + 0.5 * lam * float(w @ w)


def logreg_grad(w: np.ndarray, data: NodeDataset, lam: float) -> np.ndarray:
    _check_binary_labels(data.labels)
    z = data.features @ w
    return (data.features.T @ (expit(z) - data.labels)) / data.m_i + lam * w


def _check_binary_labels(labels: np.ndarray) -> None:
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("logistic labels must be in {0, 1}")


class NodeObjective:
    """One node's loss; dispatches on kind ('linreg' or 'logreg')."""

    def __init__(self, kind: str, data: NodeDataset, lam: float = 0.0):
        if kind not in ("linreg", "logreg"):
            raise ValueError(f"unknown objective kind {kind!r}")
        if lam < 0:
            raise ValueError("ridge penalty must be >= 0")
        self.kind = kind
        self.data = data
        self.lam = lam

    def value(self, w: np.ndarray) -> float:
        if self.kind == "linreg":
            return linreg_value(w, self.data)
        return logreg_value(w, self.data, self.lam)

    def grad(self, w: np.ndarray) -> np.ndarray:
        if self.kind == "linreg":
            return linreg_grad(w, self.data)
        return logreg_grad(w, self.data, self.lam)


def generate_linreg_problem(n: int, s: int, m: int, mi_range=(250, 750),
                            noise_scale: float = 0.5,
                            rng: np.random.Generator = None):
    """Synthetic regression instance; returns (datasets, w_star)."""
    if rng is None:
        rng = np.random.default_rng()
    if s > n:
        raise ValueError("sparsity cannot exceed dimension")
    lo, hi = int(mi_range[0]), int(mi_range[1])
    support = np.sort(rng.choice(n, size=s, replace=False))
    magnitudes = rng.uniform(0.5, 2.0, size=s)
    signs = np.where(rng.random(s) < 0.5, -1.0, 1.0)
    w_star = np.zeros(n)
    w_star[support] = signs * magnitudes
    datasets = []
    for _ in range(m):
        m_i = int(rng.integers(lo, hi + 1))
        A = rng.standard_normal((m_i, n))
        e = rng.standard_normal(m_i)
        datasets.append(NodeDataset(features=A, labels=A @ w_star + noise_scale * e))
    return datasets, w_star


def load_libsvm(path):
    """Parse a LibSVM-format text file: 'label idx:val ...', 1-based indices.

    Labels are mapped to {0, 1}: accepts native {0,1}, {-1,+1} (-1 -> 0),
    and {1,2} (1 -> 0). Any other label set is an error. The feature
    dimension is the maximum index seen. Returns (features, labels) dense.
    """
    rows, raw_labels = [], []
    n = 0
    with open(path, encoding="ascii") as fh:
        lines = fh.readlines()
    if not any(line.strip() for line in lines):
        raise ValueError(f"{path}: empty dataset")
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        try:
            raw_labels.append(float(parts[0]))
            pairs = []
            for tok in parts[1:]:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                if idx < 1:
                    raise ValueError("feature indices are 1-based")
                pairs.append((idx - 1, float(val_s)))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{lineno}: malformed line ({exc})") from None
        rows.append(pairs)
        if pairs:
            n = max(n, max(idx for idx, _ in pairs) + 1)
    features = np.zeros((len(rows), n))
    for r, pairs in enumerate(rows):
        for idx, val in pairs:
            features[r, idx] = val
    labels = _map_labels(np.asarray(raw_labels))
    return features, labels


def _map_labels(raw: np.ndarray) -> np.ndarray:
    values = set(np.unique(raw).tolist())
    if values <= {0.0, 1.0}:
        return raw.astype(np.float64)
    if values <= {-1.0, 1.0}:
        return (raw > 0).astype(np.float64)
    if values <= {1.0, 2.0}:
        return (raw > 1).astype(np.float64)
    raise ValueError(f"unsupported label set {sorted(values)}; "
                     "expected {0,1}, {-1,+1}, or {1,2}")


def partition(features: np.ndarray, labels: np.ndarray, m: int,
              rng: np.random.Generator):
    """Randomly split samples into m node datasets with sizes differing <= 1."""
    total = features.shape[0]
    if m < 1 or m > total:
        raise ValueError(f"cannot split {total} samples into {m} groups")
    perm = rng.permutation(total)
    base, extra = divmod(total, m)
    datasets, start = [], 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        take = perm[start:start + size]
        start += size
        datasets.append(NodeDataset(features=features[take], labels=labels[take]))
    return datasets


def power_lambda_max(A: np.ndarray, tol: float = 1e-6, max_iters: int = 500):
    """Largest eigenvalue of A^T A by power iteration, fixed-seed start.

    Iterates on the smaller of A^T A and A A^T (same nonzero spectrum), so
    the per-step cost is one small symmetric matvec. Returns (lam, converged)
    where converged reflects the relative successive-difference test.
    """
    m_i, n = A.shape
    G = A @ A.T if m_i < n else A.T @ A
    k = G.shape[0]
    x = np.random.default_rng(np.random.SeedSequence(271828)).standard_normal(k)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iters):
        y = G @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, True
        lam_new = float(x @ y)
        x = y / ny
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            return lam_new, True
        lam = lam_new
    return lam, False


def compute_sigma_i(data: NodeDataset, m: int, r: float, d_i: int,
                    c_knob: float = 0.1) -> float:
    """Consensus weight lambda_max(A_i^T A_i) / (m (2r + c_knob) d_i)."""
    lam, converged = power_lambda_max(data.features)
    if not converged:
        warnings.warn("power iteration did not converge; using best estimate",
                      RuntimeWarning)
    return lam / (m * (2.0 * r + c_knob) * d_i)


def estimate_lipschitz(kind: str, datasets, lam: float = 0.0) -> float:
    """Gradient Lipschitz bound, max over nodes.

    linreg: lambda_max(A^T A) / m_i; logreg: lambda_max(A^T A) / (4 m_i) + lam.
    """
    worst = 0.0
    for data in datasets:
        top, converged = power_lambda_max(data.features)
        if not converged:
            warnings.warn("power iteration did not converge; using best estimate",
                          RuntimeWarning)
        if kind == "linreg":
            li = top / data.m_i
        else:
            li = top / (4.0 * data.m_i) + lam
        worst = max(worst, li)
    return worst


_SNAP_MAGIC = b"SDP1"


def save_problem(path, datasets, w_star: np.ndarray, s: int) -> None:
    """Binary snapshot: magic, n, s, m, w*, then per node (m_i, A row-major, b)."""
    n = w_star.shape[0]
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(struct.pack("<III", n, s, len(datasets)))
        fh.write(np.ascontiguousarray(w_star, dtype="<f8").tobytes())
        for data in datasets:
            fh.write(struct.pack("<I", data.m_i))
            fh.write(np.ascontiguousarray(data.features, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(data.labels, dtype="<f8").tobytes())


def load_problem(path):
    """Inverse of save_problem; returns (datasets, w_star, s)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _SNAP_MAGIC:
            raise ValueError(f"{path}: not a problem snapshot")
        n, s, m = struct.unpack("<III", fh.read(12))
        w_star = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        datasets = []
        for _ in range(m):
            (m_i,) = struct.unpack("<I", fh.read(4))
            A = np.frombuffer(fh.read(8 * m_i * n), dtype="<f8").reshape(m_i, n).copy()
            b = np.frombuffer(fh.read(8 * m_i), dtype="<f8").copy()
            datasets.append(NodeDataset(features=A, labels=b))
    return datasets, w_star, s

"""One-bit compressed model exchange.

A sender log-rescales its sparse model, normalizes, multiplies by a seeded
random matrix and keeps only the measurement signs; the message on the wire
is (||w||, d signs). The receiver regenerates the matrix from the shared
seed, solves the sign-consistency problem under the sparsity budget,
inverts the log rescaling, and restores the transmitted norm.

Sign convention everywhere: sign(t) = 1 if t > 0 else -1 (zero maps to -1).

Wire format (little-endian): magic byte 0xB1, u32 bit count d, f64 norm,
then ceil(d/8) payload bytes, signs packed MSB-first with 1 -> +1, 0 -> -1.
A zero model is sent as a d=0 message with norm 0 and no payload.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .sparse_core import euclidean_norm

_WIRE_MAGIC = 0xB1
_HEADER = struct.Struct("<BId")


class DecodeFailure(RuntimeError):
    """The sign solver returned nothing usable; caller should fall back."""


# Regenerating a d x n Gaussian matrix costs a few ms, and every neighbour of
# a node needs the same matrix every round, so realized matrices are cached
# process-wide. ~8*d*n bytes per distinct (seed, d, n, density).
_matrix_cache: dict = {}


def clear_matrix_cache() -> None:
    _matrix_cache.clear()


@dataclass(frozen=True)
class EncodingMatrix:
    """Seeded random measurement matrix, identical on both ends of a link."""

    d: int
    n: int
    seed: int
    density: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("matrix dimensions must be positive")
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must be in (0, 1], got {self.density}")

    def realize(self) -> np.ndarray:
        """The d x n matrix; standard normal entries at density-selected spots."""
        key = (self.seed, self.d, self.n, self.density)
        mat = _matrix_cache.get(key)
        if mat is None:
            rng = np.random.default_rng(np.random.SeedSequence(self.seed))
            mat = rng.standard_normal((self.d, self.n))
            if self.density < 1.0:
                keep = rng.random((self.d, self.n)) < self.density
                mat = np.where(keep, mat, 0.0)
            mat = np.ascontiguousarray(mat)
            mat.setflags(write=False)
            _matrix_cache[key] = mat
        return mat


@dataclass(frozen=True)
class EncodedMessage:
    """(norm, signs) pair as transmitted; signs stored bit-packed."""

    norm: float
    d: int
    packed: bytes = field(repr=False)

    def __post_init__(self):
        if not (self.norm >= 0.0 and math.isfinite(self.norm)):
            raise ValueError(f"message norm must be finite and >= 0, got {self.norm}")
        if self.d < 0:
            raise ValueError("bit count must be >= 0")
        if len(self.packed) != (self.d + 7) // 8:
            raise ValueError("payload length does not match bit count")

    @property
    def is_zero(self) -> bool:
        return self.d == 0

    def signs(self) -> np.ndarray:
        """Unpacked +1/-1 sign vector of length d."""
        if self.d == 0:
            return np.empty(0, dtype=np.float64)
        bits = np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8),
                             count=self.d, bitorder="big")
        return bits.astype(np.float64) * 2.0 - 1.0

    @classmethod
    def from_signs(cls, norm: float, signs: np.ndarray) -> "EncodedMessage":
        signs = np.asarray(signs)
        packed = np.packbits((signs > 0).astype(np.uint8), bitorder="big")
        return cls(norm=float(norm), d=int(signs.size), packed=packed.tobytes())

    @classmethod
    def zero(cls) -> "EncodedMessage":
        return cls(norm=0.0, d=0, packed=b"")

    def serialize(self) -> bytes:
        return _HEADER.pack(_WIRE_MAGIC, self.d, self.norm) + self.packed

    @classmethod
    def deserialize(cls, blob: bytes) -> "EncodedMessage":
        if len(blob) < _HEADER.size:
            raise ValueError("message blob too short")
        magic, d, norm = _HEADER.unpack_from(blob)
        if magic != _WIRE_MAGIC:
            raise ValueError(f"bad magic byte 0x{magic:02X}")
        payload = blob[_HEADER.size:]
        if len(payload) != (d + 7) // 8:
            raise ValueError("payload length does not match bit count")
        return cls(norm=norm, d=d, packed=payload)

    @property
    def framed_size_bits(self) -> int:
        return 8 * (_HEADER.size + len(self.packed))


@dataclass(frozen=True)
class DecoderOptions:
    """Knobs for the sign-consistency solver."""

    max_iters: int = 100
    stall_iters: int = 10
    step_scale: float = 1.0  # gradient step = step_scale / d

    def as_dict(self):
        return {"solver": "biht", "max_iters": self.max_iters,
                "stall_iters": self.stall_iters, "step_scale": self.step_scale}


def _check_gamma(gamma: float) -> float:
    if not gamma > 1.0:
        raise ValueError(f"log base must be > 1, got {gamma}")
    return float(gamma)


def log_rescale(w: np.ndarray, gamma: float) -> np.ndarray:
    """Elementwise sign(w) * log_gamma(1 + |w|); zeros stay exactly zero."""
    gamma = _check_gamma(gamma)
    w = np.asarray(w, dtype=np.float64)
    mag = np.log1p(np.abs(w)) / math.log(gamma)
    return np.where(w == 0.0, 0.0, np.where(w > 0.0, mag, -mag))


def inverse_rescale(x: np.ndarray, gamma: float) -> np.ndarray:
    """Elementwise sign(x) * (gamma^|x| - 1); exact inverse of log_rescale."""
    gamma = _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    mag = np.expm1(np.abs(x) * math.log(gamma))
    return np.where(x == 0.0, 0.0, np.where(x > 0.0, mag, -mag))


def encode(w: np.ndarray, phi: EncodingMatrix, gamma: float) -> EncodedMessage:
    """Compress w into (||w||, sign(phi x/||x||)) with x the rescaled model."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != phi.n:
        raise ValueError(f"model has {w.shape[0]} entries, matrix expects {phi.n}")
    norm = euclidean_norm(w)
    if norm == 0.0:
        raise ValueError("cannot encode the zero vector (normalization undefined)")
    x = log_rescale(w, gamma)
    x /= euclidean_norm(x)
    y = phi.realize() @ x
    signs = np.where(y > 0.0, 1.0, -1.0)
    return EncodedMessage.from_signs(norm, signs)


def decode(msg: EncodedMessage, phi: EncodingMatrix, gamma: float, s: int,
           opts: DecoderOptions = DecoderOptions()) -> np.ndarray:
    """Recover a model estimate: solve for the signs, unrescale, restore norm.

    The returned vector has at most s nonzeros and Euclidean norm equal to
    msg.norm (up to float rounding of the final rescale). Raises
    DecodeFailure when the solver collapses to the zero vector.
    """
    gamma = _check_gamma(gamma)
    if msg.is_zero:
        return np.zeros(phi.n)
    if msg.d != phi.d:
        raise ValueError(f"message carries {msg.d} bits, matrix expects {phi.d}")
    v, _, _ = kernels.biht_solve(phi.realize(), msg.signs(), int(s),
                                 opts.max_iters, opts.stall_iters,
                                 opts.step_scale / phi.d)
    if not np.all(np.isfinite(v)) or not np.any(v):
        raise DecodeFailure("sign solver returned no usable vector")
    z = inverse_rescale(v, gamma)
    return z * (msg.norm / euclidean_norm(z))


@dataclass(frozen=True)
class BruteForceResult:
    vector: np.ndarray
    agreement: int
    support: tuple


def brute_force_decode(msg: EncodedMessage, phi: EncodingMatrix, gamma: float,
                       s: int, grid=(0.25, 0.5, 1.0, 2.0, 4.0)) -> BruteForceResult:
    """Exhaustive oracle for tiny instances (n <= 12, s <= 2): enumerate all
    supports, sign patterns, and magnitude-grid combinations; return the
    candidate whose measurement signs agree with the message on the most
    positions. Ties resolve to the first candidate in enumeration order.
    Test-only; refuses larger sizes.
    """
    n, d = phi.n, phi.d
    if n > 12 or s > 2:
        raise ValueError("brute-force decoder is limited to n <= 12, s <= 2")
    if msg.is_zero:
        return BruteForceResult(np.zeros(n), d, ())
    mat = phi.realize()
    target = msg.signs()

    def agreement_of(vec):
        y = mat @ vec
        return int(np.sum(np.where(y > 0.0, 1.0, -1.0) == target))

    best_vec, best_agree, best_support = None, -1, ()
    supports = [(j,) for j in range(n)]
    if s >= 2:
        supports += [(i, j) for i in range(n) for j in range(i + 1, n)]
    for support in supports:
        k = len(support)
        for signs_id in range(2 ** k):
            sgn = [1.0 if (signs_id >> b) & 1 == 0 else -1.0 for b in range(k)]
            for mags_id in range(len(grid) ** k):
                cand = np.zeros(n)
                rem = mags_id
                for b, j in enumerate(support):
                    cand[j] = sgn[b] * grid[rem % len(grid)]
                    rem //= len(grid)
                agree = agreement_of(cand)
                if agree > best_agree:
                    best_vec, best_agree, best_support = cand, agree, support
    z = inverse_rescale(best_vec / euclidean_norm(best_vec), gamma)
    z *= msg.norm / euclidean_norm(z)
    return BruteForceResult(z, best_agree, best_support)


def message_size_bits(msg: EncodedMessage) -> int:
    """Idealized cost of one message: 64 bits of norm plus d sign bits."""
    return 64 + msg.d


def dense_size_bits(n: int) -> int:
    """Idealized cost of shipping a dense double-precision vector."""
    return 64 * n


def decoded_support(z: np.ndarray) -> tuple:
    return tuple(np.flatnonzero(z))


__all__ = [
    "DecodeFailure", "EncodingMatrix", "EncodedMessage", "DecoderOptions",
    "BruteForceResult", "log_rescale", "inverse_rescale", "encode", "decode",
    "brute_force_decode", "message_size_bits", "dense_size_bits",
    "decoded_support", "clear_matrix_cache",
]

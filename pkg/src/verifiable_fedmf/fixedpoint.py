"""Signed fixed-point encoding into the additive ring Z_B.

Reals are scaled by ``alpha``, rounded half away from zero and embedded
two's-complement style, so residues in ``[B/2, B)`` stand for negative
numbers.  ``B`` must be a power of two: vectors are stored as ``uint64``
arrays and wrap-around arithmetic modulo 2**64 then agrees with arithmetic
modulo ``B`` after masking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, SumBoundViolation

DEFAULT_ALPHA = 10**7
DEFAULT_MODULUS = 2**34


@dataclass(frozen=True)
class FixedParams:
    alpha: int = DEFAULT_ALPHA
    modulus: int = DEFAULT_MODULUS
    max_participants: int = 1

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.modulus < 4 * self.alpha:
            raise ValueError("modulus must be at least 4 * alpha")
        if self.modulus & (self.modulus - 1) or self.modulus > 2**64:
            raise ValueError("modulus must be a power of two no larger than 2**64")
        if self.max_participants < 1:
            raise ValueError("max_participants must be >= 1")

    @property
    def half(self) -> int:
        return self.modulus // 2

    @property
    def mask(self) -> int:
        return self.modulus - 1

    @property
    def residue_bytes(self) -> int:
        """Bytes needed to pack one residue on the wire."""
        return math.ceil((self.modulus.bit_length() - 1) / 8)

    @property
    def magnitude_bits(self) -> int:
        """Bit length bound on ``|signed(residue)|``."""
        return self.modulus.bit_length() - 2


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def encode(x: float, p: FixedParams) -> int:
    x = float(x)
    q = int(_round_half_away(x * p.alpha)) if math.isfinite(x) else p.half
    if abs(q) >= p.half:
        raise OverflowError(f"{x!r} is not representable with alpha={p.alpha}, B={p.modulus}")
    return q % p.modulus


def to_signed(y: int, p: FixedParams) -> int:
    if not 0 <= y < p.modulus:
        raise ValueError(f"residue {y} outside [0, {p.modulus})")
    return y - p.modulus if y >= p.half else y


def decode(y: int, p: FixedParams) -> float:
    return to_signed(y, p) / p.alpha


class FixedVec:
    """A vector of residues mod ``B``; immutable once built."""

    __slots__ = ("values", "params")

    def __init__(self, values, params: FixedParams):
        arr = np.array(values, dtype=np.uint64)
        if arr.ndim != 1:
            raise DimensionMismatch("FixedVec must be one-dimensional")
        if arr.size and int(arr.max()) >= params.modulus:
            raise ValueError("residue out of range")
        arr.setflags(write=False)
        self.values = arr
        self.params = params

    @classmethod
    def _trusted(cls, arr: np.ndarray, params: FixedParams) -> "FixedVec":
        # Skips the range scan; callers guarantee arr is uint64 and already reduced.
        self = cls.__new__(cls)
        arr.setflags(write=False)
        self.values = arr
        self.params = params
        return self

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values.tolist())

    def __getitem__(self, i):
        return int(self.values[i])

    def __eq__(self, other):
        if not isinstance(other, FixedVec):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.params, self.values.tobytes()))

    def __repr__(self):
        return f"FixedVec({self.values.tolist()}, B={self.params.modulus})"

    def signed(self) -> list[int]:
        """Two's-complement reading of each residue as a Python int."""
        half, b = self.params.half, self.params.modulus
        return [y - b if y >= half else y for y in self.values.tolist()]


def encode_vec(xs: Iterable[float], p: FixedParams) -> FixedVec:
    x = np.asarray(list(xs) if not isinstance(xs, np.ndarray) else xs, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("encode_vec expects a one-dimensional input")
    q = _round_half_away(x * p.alpha)
    if not np.all(np.isfinite(q)) or (q.size and np.max(np.abs(q)) >= p.half):
        raise OverflowError(f"vector not representable with alpha={p.alpha}, B={p.modulus}")
    arr = q.astype(np.int64).astype(np.uint64) & np.uint64(p.mask)
    return FixedVec._trusted(arr, p)


def decode_residues(arr: np.ndarray, p: FixedParams) -> np.ndarray:
    """Elementwise :func:`decode` over a ``uint64`` array of any shape."""
    v = np.asarray(arr, dtype=np.uint64)
    neg = v >= np.uint64(p.half)
    mag = np.where(neg, (np.uint64(0) - v) & np.uint64(p.mask), v).astype(np.float64)
    return np.where(neg, -mag, mag) / p.alpha


def decode_vec(x: FixedVec) -> np.ndarray:
    return decode_residues(x.values, x.params)


def zero_vec(d: int, p: FixedParams) -> FixedVec:
    return FixedVec._trusted(np.zeros(d, dtype=np.uint64), p)


def add_mod(a: FixedVec, b: FixedVec) -> FixedVec:
    if len(a) != len(b):
        raise DimensionMismatch(f"lengths differ: {len(a)} vs {len(b)}")
    if a.params != b.params:
        raise ValueError("vectors were encoded with different parameters")
    return FixedVec._trusted((a.values + b.values) & np.uint64(a.params.mask), a.params)


def sum_mod(vecs: Sequence[FixedVec]) -> FixedVec:
    """Fold ``add_mod`` over a non-empty sequence."""
    if not vecs:
        raise ValueError("sum_mod of an empty sequence")
    p = vecs[0].params
    d = len(vecs[0])
    for v in vecs:
        if len(v) != d:
            raise DimensionMismatch("vectors of different lengths")
        if v.params != p:
            raise ValueError("vectors were encoded with different parameters")
    stacked = np.stack([v.values for v in vecs])
    return FixedVec._trusted(stacked.sum(axis=0, dtype=np.uint64) & np.uint64(p.mask), p)


def check_sum_bound(p: FixedParams, per_value_bound: float, n_k: int) -> float:
    """Return the positive margin ``B/2 - n_k * bound * alpha`` or raise."""
    margin = p.half - n_k * per_value_bound * p.alpha
    if margin <= 0:
        raise SumBoundViolation(
            margin,
            f"{n_k} x {per_value_bound} x alpha={p.alpha} = {n_k * per_value_bound * p.alpha:.4g}"
            f" does not fit below B/2 = {p.half}",
        )
    return margin

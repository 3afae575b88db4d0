"""Homomorphic vector hash over P-256 and its fixed-base speedup.

``hf(x) = sum_l signed(x[l]) * g_l`` (written multiplicatively elsewhere as
a product of powers).  Residues are read two's-complement style before
being used as exponents, so a modular sum of encodings that does not wrap
as a signed integer hashes to the product of the individual hashes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from ..errors import DimensionMismatch
from ..fixedpoint import FixedVec
from . import p256
from .p256 import Point

GENERATOR_DST = b"verifiable-fedmf/hf-generator/v1"


@dataclass(frozen=True)
class GroupParams:
    seed: bytes
    generators: tuple

    @property
    def d(self) -> int:
        return len(self.generators)

    @property
    def order(self) -> int:
        return int(p256.N)


@lru_cache(maxsize=32)
def setup_group(d: int, seed: bytes = b"verifiable-fedmf") -> GroupParams:
    if d < 1:
        raise ValueError("d must be >= 1")
    gens = tuple(
        p256.hash_to_point(GENERATOR_DST, seed + b"|" + l.to_bytes(4, "big")) for l in range(1, d + 1)
    )
    return GroupParams(seed=bytes(seed), generators=gens)


def _check_dim(x: FixedVec, d: int):
    if len(x) != d:
        raise DimensionMismatch(f"vector of length {len(x)} hashed with {d} generators")


def hf(x: FixedVec, gp: GroupParams) -> Point:
    """Reference hash: one full scalar multiplication per coordinate."""
    _check_dim(x, gp.d)
    # s * g == |s| * (-g) for negative s; this keeps scalars short
    terms = (p256.mul(s, g) if s >= 0 else p256.mul(-s, p256.neg(g)) for s, g in zip(x.signed(), gp.generators))
    return p256.point_sum(terms)


@dataclass(frozen=True, eq=False)
class PrecompTable:
    """``rows[l][j][v] = v * 2**(w*j) * g_l`` for digits ``v`` in ``[1, 2**w)``."""

    group: GroupParams
    window_bits: int
    magnitude_bits: int
    rows: tuple

    @property
    def windows(self) -> int:
        return len(self.rows[0]) if self.rows else 0


def _window_row(base, size):
    # base, 2*base, ..., (size-1)*base; index 0 unused
    acc = []
    X, Y, Z = p256.to_jacobian(None)
    for _ in range(1, size):
        X, Y, Z = p256._jadd_affine(X, Y, Z, base[0], base[1])
        acc.append((X, Y, Z))
    return [None] + p256.batch_to_affine(acc)


@lru_cache(maxsize=16)
def precompute_fixed_base(gp: GroupParams, window_bits: int = 8, magnitude_bits: int = 64) -> PrecompTable:
    """Offline tables covering exponent magnitudes below ``2**magnitude_bits``."""
    if not 1 <= window_bits <= 16:
        raise ValueError("window_bits must lie in [1, 16]")
    if magnitude_bits < 1:
        raise ValueError("magnitude_bits must be >= 1")
    size = 1 << window_bits
    n_windows = -(-magnitude_bits // window_bits)
    rows = []
    for g in gp.generators:
        base = g
        per_gen = []
        for _ in range(n_windows):
            row = _window_row(base, size)
            per_gen.append(tuple(row))
            # next base is size * base = row[size-1] + base
            base = p256.add(row[size - 1], base)
        rows.append(tuple(per_gen))
    return PrecompTable(group=gp, window_bits=window_bits, magnitude_bits=magnitude_bits, rows=tuple(rows))


def hf_precomputed(x: FixedVec, table: PrecompTable) -> Point:
    """Same value as :func:`hf`, using table lookups and mixed additions only."""
    _check_dim(x, table.group.d)
    w = table.window_bits
    digit_mask = (1 << w) - 1
    limit = 1 << table.magnitude_bits
    Pm = p256.P
    madd = p256._jadd_affine
    X, Y, Z = p256.to_jacobian(None)
    for s, rows in zip(x.signed(), table.rows):
        if s == 0:
            continue
        negative = s < 0
        mag = -s if negative else s
        if mag >= limit:
            raise ValueError(f"exponent magnitude {mag} exceeds the table range 2**{table.magnitude_bits}")
        j = 0
        while mag:
            v = mag & digit_mask
            if v:
                px, py = rows[j][v]
                X, Y, Z = madd(X, Y, Z, px, Pm - py if negative else py)
            mag >>= w
            j += 1
    return p256.to_affine((X, Y, Z))


def hash_product(hashes) -> Point:
    """Combine digests: the group operation applied across all of them."""
    return p256.point_sum(hashes)


def encode_digest(h: Point) -> bytes:
    return p256.encode_point(h)


def decode_digest(data: bytes) -> Point:
    return p256.decode_point(bytes(data))


__all__ = [
    "GroupParams",
    "PrecompTable",
    "decode_digest",
    "encode_digest",
    "hash_product",
    "hf",
    "hf_precomputed",
    "precompute_fixed_base",
    "setup_group",
]

"""NIST P-256 point arithmetic.

Affine points are ``(x, y)`` tuples of ``gmpy2.mpz``; ``None`` is the point
at infinity.  Internally sums run in Jacobian coordinates ``(X, Y, Z)``
with ``Z == 0`` for infinity.  Nothing here is constant time.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Iterable, Optional, Tuple

import gmpy2
from gmpy2 import mpz

from ..errors import InvalidPublicKey

P = mpz(2**256 - 2**224 + 2**192 + 2**96 - 1)
N = mpz(0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551)
A = P - 3
B = mpz(0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B)
G = (
    mpz(0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296),
    mpz(0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5),
)
_SQRT_EXP = (P + 1) // 4  # p = 3 mod 4

Point = Optional[Tuple[mpz, mpz]]
Jacobian = Tuple[mpz, mpz, mpz]

IDENTITY: Point = None
ENCODED_LEN = 33
_J_INF = (mpz(1), mpz(1), mpz(0))


def is_on_curve(pt: Point) -> bool:
    if pt is None:
        return True
    x, y = pt
    if not (0 <= x < P and 0 <= y < P):
        return False
    return (y * y - (x * x * x - 3 * x + B)) % P == 0


def neg(pt: Point) -> Point:
    if pt is None:
        return None
    return (pt[0], (P - pt[1]) % P)


def _jdouble(X1, Y1, Z1, p=P):
    if not Z1 or not Y1:
        return _J_INF
    delta = Z1 * Z1 % p
    gamma = Y1 * Y1 % p
    beta = X1 * gamma % p
    alpha = 3 * (X1 - delta) * (X1 + delta) % p
    X3 = (alpha * alpha - 8 * beta) % p
    Z3 = ((Y1 + Z1) ** 2 - gamma - delta) % p
    Y3 = (alpha * (4 * beta - X3) - 8 * gamma * gamma) % p
    return X3, Y3, Z3


def _jadd_affine(X1, Y1, Z1, x2, y2, p=P):
    """Jacobian + affine (mixed) addition."""
    if not Z1:
        return x2, y2, mpz(1)
    z1z1 = Z1 * Z1 % p
    u2 = x2 * z1z1 % p
    s2 = y2 * Z1 * z1z1 % p
    h = (u2 - X1) % p
    r = (s2 - Y1) % p
    if not h:
        if not r:
            return _jdouble(X1, Y1, Z1)
        return _J_INF
    hh = h * h % p
    hhh = h * hh % p
    v = X1 * hh % p
    X3 = (r * r - hhh - 2 * v) % p
    Y3 = (r * (v - X3) - Y1 * hhh) % p
    return X3, Y3, Z1 * h % p


def _jadd(X1, Y1, Z1, X2, Y2, Z2, p=P):
    if not Z1:
        return X2, Y2, Z2
    if not Z2:
        return X1, Y1, Z1
    z1z1 = Z1 * Z1 % p
    z2z2 = Z2 * Z2 % p
    u1 = X1 * z2z2 % p
    u2 = X2 * z1z1 % p
    s1 = Y1 * Z2 * z2z2 % p
    s2 = Y2 * Z1 * z1z1 % p
    h = (u2 - u1) % p
    r = (s2 - s1) % p
    if not h:
        if not r:
            return _jdouble(X1, Y1, Z1)
        return _J_INF
    hh = h * h % p
    hhh = h * hh % p
    v = u1 * hh % p
    X3 = (r * r - hhh - 2 * v) % p
    Y3 = (r * (v - X3) - s1 * hhh) % p
    return X3, Y3, Z1 * Z2 * h % p


def to_jacobian(pt: Point) -> Jacobian:
    if pt is None:
        return _J_INF
    return pt[0], pt[1], mpz(1)


def to_affine(J: Jacobian) -> Point:
    X, Y, Z = J
    if not Z:
        return None
    zi = gmpy2.invert(Z, P)
    zi2 = zi * zi % P
    return X * zi2 % P, Y * zi2 * zi % P


def batch_to_affine(Js: list[Jacobian]) -> list[Point]:
    """Normalize many points with a single field inversion."""
    out: list[Point] = [None] * len(Js)
    idx = [i for i, J in enumerate(Js) if J[2]]
    if not idx:
        return out
    prefix = []
    acc = mpz(1)
    for i in idx:
        prefix.append(acc)
        acc = acc * Js[i][2] % P
    inv = gmpy2.invert(acc, P)
    for pos in range(len(idx) - 1, -1, -1):
        i = idx[pos]
        X, Y, Z = Js[i]
        zi = inv * prefix[pos] % P
        inv = inv * Z % P
        zi2 = zi * zi % P
        out[i] = (X * zi2 % P, Y * zi2 * zi % P)
    return out


def add(p1: Point, p2: Point) -> Point:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    return to_affine(_jadd_affine(p1[0], p1[1], mpz(1), p2[0], p2[1]))


def point_sum(points: Iterable[Point]) -> Point:
    """Group sum of affine points (the multiplicative product in HF notation)."""
    # mixed additions inlined; this sits on the verification hot path
    p = P
    X1 = Y1 = Z1 = None
    for pt in points:
        if pt is None:
            continue
        x2, y2 = pt
        if Z1 is None or not Z1:
            X1, Y1, Z1 = x2, y2, mpz(1)
            continue
        z1z1 = Z1 * Z1 % p
        h = (x2 * z1z1 - X1) % p
        r = (y2 * Z1 * z1z1 - Y1) % p
        if not h:
            X1, Y1, Z1 = _jdouble(X1, Y1, Z1) if not r else _J_INF
            continue
        hh = h * h % p
        hhh = h * hh % p
        v = X1 * hh % p
        X3 = (r * r - hhh - 2 * v) % p
        X1, Y1, Z1 = X3, (r * (v - X3) - Y1 * hhh) % p, Z1 * h % p
    if Z1 is None:
        return None
    return to_affine((X1, Y1, Z1))


def mul(k: int, pt: Point) -> Point:
    """Scalar multiplication by left-to-right double-and-add."""
    k = int(k) % int(N)
    if k == 0 or pt is None:
        return None
    x, y = pt
    X, Y, Z = _J_INF
    for bit in bin(k)[2:]:
        X, Y, Z = _jdouble(X, Y, Z)
        if bit == "1":
            X, Y, Z = _jadd_affine(X, Y, Z, x, y)
    return to_affine((X, Y, Z))


def mul_base(k: int) -> Point:
    return mul(k, G)


def encode_point(pt: Point) -> bytes:
    """33-byte SEC1 compressed form; the identity is 33 zero bytes."""
    if pt is None:
        return bytes(ENCODED_LEN)
    x, y = pt
    return bytes([2 | int(y & 1)]) + int(x).to_bytes(32, "big")


@lru_cache(maxsize=1 << 16)
def decode_point(data: bytes) -> Point:
    if len(data) != ENCODED_LEN:
        raise InvalidPublicKey(f"expected {ENCODED_LEN} bytes, got {len(data)}")
    if data == bytes(ENCODED_LEN):
        return None
    prefix = data[0]
    if prefix not in (2, 3):
        raise InvalidPublicKey(f"bad point prefix {prefix:#x}")
    x = mpz(int.from_bytes(data[1:], "big"))
    if x >= P:
        raise InvalidPublicKey("x coordinate out of range")
    y = _sqrt(x * x * x - 3 * x + B)
    if y is None:
        raise InvalidPublicKey("x coordinate is not on the curve")
    if (y & 1) != (prefix & 1):
        y = P - y
    return (x, y)


def _sqrt(a) -> mpz | None:
    a %= P
    y = gmpy2.powmod(a, _SQRT_EXP, P)
    return y if y * y % P == a else None


def hash_to_point(dst: bytes, msg: bytes) -> Tuple[mpz, mpz]:
    """Deterministic try-and-increment map to a curve point with even y."""
    ctr = 0
    while True:
        digest = hashlib.sha256(dst + len(msg).to_bytes(4, "big") + msg + ctr.to_bytes(4, "big")).digest()
        x = mpz(int.from_bytes(digest, "big")) % P
        y = _sqrt(x * x * x - 3 * x + B)
        if y is not None and y:
            if y & 1:
                y = P - y
            return (x, y)
        ctr += 1

"""Pairwise key agreement (ECDH on P-256) and key derivation."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import InvalidPublicKey
from . import p256
from .p256 import Point

KDF_INFO = b"verifiable-fedmf/pairwise-mask-key/v1"
SHARED_KEY_LEN = 32


@dataclass(frozen=True)
class KeyPair:
    msk: int
    mpk: Point
    _private: ec.EllipticCurvePrivateKey = field(repr=False, compare=False, default=None)

    @property
    def public_bytes(self) -> bytes:
        return p256.encode_point(self.mpk)


def keypair_from_secret(msk: int) -> KeyPair:
    if not 1 <= msk < p256.N:
        raise ValueError("secret scalar outside [1, q)")
    priv = ec.derive_private_key(int(msk), ec.SECP256R1())
    nums = priv.public_key().public_numbers()
    mpk = (p256.mpz(nums.x), p256.mpz(nums.y))
    return KeyPair(msk=int(msk), mpk=mpk, _private=priv)


def keygen(rng=None) -> KeyPair:
    """Fresh key pair; ``rng`` needs a ``randrange`` method (defaults to the OS CSPRNG)."""
    rng = rng or secrets.SystemRandom()
    return keypair_from_secret(rng.randrange(1, int(p256.N)))


def kdf(shared_secret: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=SHARED_KEY_LEN, salt=None, info=KDF_INFO).derive(shared_secret)


def _public_key(mpk: Point) -> ec.EllipticCurvePublicKey:
    if mpk is None or not p256.is_on_curve(mpk):
        raise InvalidPublicKey("public key is not a non-identity P-256 point")
    try:
        return ec.EllipticCurvePublicNumbers(int(mpk[0]), int(mpk[1]), ec.SECP256R1()).public_key()
    except ValueError as exc:
        raise InvalidPublicKey(str(exc)) from exc


def key_agree(own: KeyPair | int, mpk: Point | bytes) -> bytes:
    """KDF over the x-coordinate of ``msk * mpk`` (the SEC1 ECDH shared secret)."""
    if isinstance(mpk, (bytes, bytearray)):
        mpk = p256.decode_point(bytes(mpk))
    pub = _public_key(mpk)
    if isinstance(own, int):
        own = keypair_from_secret(own)
    secret = own._private.exchange(ec.ECDH(), pub)
    return kdf(secret)

"""Pseudorandom mask expansion: AES-256-CTR keyed by a pairwise shared key.

The keystream for ``(item, iteration)`` starts at the 16-byte counter block
``SHA-256(item_le64 || iteration_le64)[:16]`` and increments it as a
128-bit big-endian integer.  Each mask element consumes 8 keystream bytes
read little-endian and reduced modulo ``B``.
"""

from __future__ import annotations

import hashlib
import math
from functools import lru_cache
from typing import Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

_BLOCK = 16
_WRAP = 1 << 128


def mask_nonce(item: int, iteration: int) -> bytes:
    return hashlib.sha256(item.to_bytes(8, "little") + iteration.to_bytes(8, "little")).digest()[:_BLOCK]


def _reduce(words: np.ndarray, modulus: int) -> np.ndarray:
    if modulus == 1 << 64:
        return words.copy()
    if modulus & (modulus - 1) == 0:
        return words & np.uint64(modulus - 1)
    return words % np.uint64(modulus)


def prg_mask(ck: bytes, item: int, iteration: int, d: int, modulus: int) -> np.ndarray:
    """d pseudorandom residues in [0, modulus) as a ``uint64`` array."""
    enc = Cipher(algorithms.AES(ck), modes.CTR(mask_nonce(item, iteration))).encryptor()
    stream = enc.update(bytes(8 * d))
    return _reduce(np.frombuffer(stream, dtype="<u8").astype(np.uint64), modulus)


@lru_cache(maxsize=1 << 14)
def counter_blocks(item: int, iteration: int, d: int) -> bytes:
    base = int.from_bytes(mask_nonce(item, iteration), "big")
    nblocks = math.ceil(8 * d / _BLOCK)
    return b"".join(((base + j) % _WRAP).to_bytes(_BLOCK, "big") for j in range(nblocks))


class MaskStream:
    """Batch form of :func:`prg_mask` for one shared key.

    Encrypting explicit counter blocks under AES-ECB reproduces the CTR
    keystream bit for bit, which lets one cipher call cover many items.
    """

    def __init__(self, ck: bytes):
        self._enc = Cipher(algorithms.AES(ck), modes.ECB()).encryptor()

    def masks(self, items: Sequence[int], iteration: int, d: int, modulus: int) -> np.ndarray:
        if not len(items):
            return np.zeros((0, d), dtype=np.uint64)
        stream = self._enc.update(b"".join(counter_blocks(k, iteration, d) for k in items))
        words_per_item = 2 * math.ceil(8 * d / _BLOCK)
        words = np.frombuffer(stream, dtype="<u8").reshape(len(items), words_per_item)[:, :d]
        return _reduce(words.astype(np.uint64), modulus)

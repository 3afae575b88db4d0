"""SHA-256 hash commitments."""

from __future__ import annotations

import hashlib
import hmac

COMMIT_TAG = b"verifiable-fedmf/commit/v1"
RANDOMNESS_LEN = 32
DIGEST_LEN = 32
_PREFIX = hashlib.sha256(COMMIT_TAG)


def commit(message: bytes, r: bytes) -> bytes:
    """c = SHA-256(tag || len(message) || message || r)."""
    if len(r) != RANDOMNESS_LEN:
        raise ValueError(f"commitment randomness must be {RANDOMNESS_LEN} bytes")
    h = _PREFIX.copy()
    h.update(len(message).to_bytes(8, "big"))
    h.update(message)
    h.update(r)
    return h.digest()


def decommit(message: bytes, c: bytes, r: bytes) -> bool:
    if len(r) != RANDOMNESS_LEN or len(c) != DIGEST_LEN:
        return False
    return hmac.compare_digest(commit(message, r), c)

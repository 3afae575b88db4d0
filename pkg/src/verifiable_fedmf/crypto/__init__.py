from .commitment import commit, decommit
from .homhash import (
    GroupParams,
    PrecompTable,
    decode_digest,
    encode_digest,
    hash_product,
    hf,
    hf_precomputed,
    precompute_fixed_base,
    setup_group,
)
from .keys import KeyPair, kdf, key_agree, keygen, keypair_from_secret
from .prg import MaskStream, mask_nonce, prg_mask

__all__ = [
    "GroupParams",
    "KeyPair",
    "MaskStream",
    "PrecompTable",
    "commit",
    "decode_digest",
    "decommit",
    "encode_digest",
    "hash_product",
    "hf",
    "hf_precomputed",
    "kdf",
    "key_agree",
    "keygen",
    "keypair_from_secret",
    "mask_nonce",
    "precompute_fixed_base",
    "prg_mask",
    "setup_group",
]

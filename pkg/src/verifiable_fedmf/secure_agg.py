"""Masking algebra and aggregate verification for one (item, iteration).

A participant's input is the encoding of ``v_prev / n_k - G_i``; summing
all inputs of item ``k`` reconstructs ``v_prev - sum_i G_i``.  Pairwise
masks are added by the lower-indexed party and subtracted by the higher
one, so they vanish from the modular sum.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .crypto import commit, encode_digest, hash_product, hf, hf_precomputed
from .crypto.homhash import GroupParams, PrecompTable
from .crypto.prg import MaskStream, prg_mask
from .errors import DimensionMismatch, MissingKey, ParticipantMismatch
from .fixedpoint import FixedParams, FixedVec, encode_vec, sum_mod


@dataclass(frozen=True)
class AggInput:
    item: int
    iteration: int
    vec: FixedVec


@dataclass(frozen=True)
class MaskedVec:
    item: int
    iteration: int
    owner: int
    vec: FixedVec


def participant_set(users) -> tuple[int, ...]:
    users = list(users)
    s = tuple(sorted(set(users)))
    if len(s) != len(users):
        raise ParticipantMismatch("duplicate participant")
    return s


def build_input(v_prev, G_i, n_k: int, p: FixedParams, item: int = 0, iteration: int = 0) -> AggInput:
    if n_k < 1:
        raise ValueError("n_k must be >= 1")
    v_prev = np.asarray(v_prev, dtype=np.float64)
    G_i = np.asarray(G_i, dtype=np.float64)
    if v_prev.shape != G_i.shape:
        raise DimensionMismatch(f"shape {v_prev.shape} vs {G_i.shape}")
    return AggInput(item, iteration, encode_vec(v_prev / n_k - G_i, p))


def mask(inp: AggInput, owner: int, participants: Sequence[int], keys: Mapping[int, bytes], modulus: int) -> MaskedVec:
    """Reference masking: one PRG call per neighbour."""
    acc = inp.vec.values.copy()
    d = len(acc)
    for j in participants:
        if j == owner:
            continue
        if j not in keys:
            raise MissingKey(j)
        m = prg_mask(keys[j], inp.item, inp.iteration, d, modulus)
        if owner < j:
            acc += m
        else:
            acc -= m
    acc &= np.uint64(modulus - 1)
    return MaskedVec(inp.item, inp.iteration, owner, FixedVec._trusted(acc, inp.vec.params))


def mask_many(
    inputs: Mapping[int, AggInput],
    owner: int,
    participants: Mapping[int, Sequence[int]],
    streams: Mapping[int, MaskStream],
    iteration: int,
) -> dict[int, MaskedVec]:
    """Mask every item of one user, one cipher call per neighbour.

    Produces exactly what :func:`mask` produces item by item.
    """
    items = sorted(inputs)
    if not items:
        return {}
    params = inputs[items[0]].vec.params
    d = len(inputs[items[0]].vec)
    acc = np.stack([inputs[k].vec.values for k in items])
    row_of = {k: r for r, k in enumerate(items)}
    per_peer: dict[int, list[int]] = {}
    for k in items:
        for j in participants[k]:
            if j != owner:
                per_peer.setdefault(j, []).append(k)
    for j, shared in per_peer.items():
        if j not in streams:
            raise MissingKey(j)
        ks = streams[j].masks(shared, iteration, d, params.modulus)
        rows = np.fromiter((row_of[k] for k in shared), dtype=np.intp, count=len(shared))
        if owner < j:
            acc[rows] += ks
        else:
            acc[rows] -= ks
    acc &= np.uint64(params.mask)
    return {
        k: MaskedVec(k, iteration, owner, FixedVec._trusted(acc[r].copy(), params)) for k, r in row_of.items()
    }


def aggregate(masked: Sequence[MaskedVec], participants: Sequence[int] | None = None) -> FixedVec:
    if not masked:
        raise ParticipantMismatch("no masked vectors to aggregate")
    item, it = masked[0].item, masked[0].iteration
    owners = [mv.owner for mv in masked]
    if len(set(owners)) != len(owners):
        raise ParticipantMismatch(f"duplicate owner among {sorted(owners)}")
    if any(mv.item != item or mv.iteration != it for mv in masked):
        raise ParticipantMismatch("masked vectors from different items or iterations")
    if participants is not None and sorted(owners) != sorted(participants):
        missing = sorted(set(participants) - set(owners))
        extra = sorted(set(owners) - set(participants))
        raise ParticipantMismatch(f"item {item}: missing {missing}, unexpected {extra}")
    return sum_mod([mv.vec for mv in masked])


def hash_input(vec: FixedVec, gp: GroupParams | None = None, table: PrecompTable | None = None):
    if table is not None:
        return hf_precomputed(vec, table)
    if gp is None:
        raise ValueError("need group parameters or a precomputed table")
    return hf(vec, gp)


def hash_and_commit(inp: AggInput, gp: GroupParams | None, rng=None, table: PrecompTable | None = None):
    """Return (h, c, r) with h = HF(input) and c a commitment to h's encoding.

    ``rng`` needs ``randbytes``; without one the randomness comes from the OS.
    """
    h = hash_input(inp.vec, gp, table)
    r = rng.randbytes(32) if rng is not None else secrets.token_bytes(32)
    return h, commit(encode_digest(h), r), r


def verify_aggregate(v_agg: FixedVec, hashes, gp: GroupParams | None = None, table: PrecompTable | None = None) -> bool:
    return hash_input(v_agg, gp, table) == hash_product(hashes)

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from verifiable_fedmf.crypto import MaskStream, decommit, encode_digest, hf, key_agree, keygen, setup_group
from verifiable_fedmf.errors import MissingKey, ParticipantMismatch
from verifiable_fedmf.fixedpoint import FixedParams, FixedVec, decode_vec, encode_vec, sum_mod, zero_vec
from verifiable_fedmf.secure_agg import (
    AggInput,
    aggregate,
    build_input,
    hash_and_commit,
    mask,
    mask_many,
    participant_set,
    verify_aggregate,
)

P = FixedParams()
B = P.modulus


def pairwise_keys(n, seed=0):
    rng = random.Random(seed)
    kps = [keygen(rng) for _ in range(n)]
    return [{j: key_agree(kps[i], kps[j].public_bytes) for j in range(n) if j != i} for i in range(n)]


KEYS8 = pairwise_keys(8)


def random_input(rng, d, item=0, iteration=1):
    return AggInput(item, iteration, FixedVec([rng.randrange(B) for _ in range(d)], P))


def test_build_input_examples():
    v_prev = np.array([0.25, -1.0])
    assert build_input(v_prev, np.zeros(2), 1, P).vec == encode_vec(v_prev, P)
    assert build_input(np.zeros(2), [0.5, -0.5], 3, P).vec == encode_vec([-0.5, 0.5], P)
    assert list(build_input([2.0], [0.1], 4, P).vec) == [4_000_000]
    with pytest.raises(ValueError):
        build_input([1.0], [0.0], 0, P)


def test_participant_set():
    assert participant_set([3, 1, 2]) == (1, 2, 3)
    with pytest.raises(ParticipantMismatch):
        participant_set([1, 1])


def test_singleton_mask_is_identity():
    inp = random_input(random.Random(0), 4)
    assert mask(inp, 0, [0], {}, B).vec == inp.vec


def test_mask_needs_every_neighbour_key():
    inp = random_input(random.Random(0), 4)
    with pytest.raises(MissingKey) as info:
        mask(inp, 0, [0, 1, 2], {1: KEYS8[0][1]}, B)
    assert info.value.peer == 2


def test_three_user_cancellation_100_trials():
    rng = random.Random(5)
    for trial in range(100):
        d = rng.randint(1, 8)
        inputs = [random_input(rng, d, item=trial, iteration=trial + 1) for _ in range(3)]
        masked = [mask(inputs[i], i, [0, 1, 2], KEYS8[i], B) for i in range(3)]
        assert aggregate(masked, [0, 1, 2]) == sum_mod([x.vec for x in inputs])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 32), st.integers(0, 2**32 - 1), st.integers(0, 2**31))
def test_mask_cancellation_property(n, d, item, seed):
    rng = random.Random(seed)
    iteration = rng.randrange(1, 1000)
    inputs = [random_input(rng, d, item, iteration) for _ in range(n)]
    users = list(range(n))
    masked = [mask(inputs[i], i, users, KEYS8[i], B) for i in users]
    assert aggregate(masked, users) == sum_mod([x.vec for x in inputs])


def test_individual_masked_vectors_differ_from_inputs():
    rng = random.Random(2)
    inputs = [random_input(rng, 8) for _ in range(3)]
    for i in range(3):
        assert mask(inputs[i], i, [0, 1, 2], KEYS8[i], B).vec != inputs[i].vec


def test_masks_change_between_iterations():
    rng = random.Random(4)
    v = random_input(rng, 8).vec
    a = mask(AggInput(0, 1, v), 0, [0, 1], KEYS8[0], B)
    b = mask(AggInput(0, 2, v), 0, [0, 1], KEYS8[0], B)
    assert a.vec != b.vec


def test_mask_many_equals_per_item_mask():
    rng = random.Random(9)
    lists = {0: (0, 1, 2), 1: (1, 2), 2: (1,), 3: (0, 1, 2, 3, 4)}
    owner, t, d = 1, 6, 5
    inputs = {k: random_input(rng, d, k, t) for k in lists}
    streams = {j: MaskStream(ck) for j, ck in KEYS8[owner].items()}
    batched = mask_many(inputs, owner, lists, streams, t)
    for k, s in lists.items():
        assert batched[k].vec == mask(inputs[k], owner, s, KEYS8[owner], B).vec


def test_aggregate_errors():
    with pytest.raises(ParticipantMismatch):
        aggregate([])
    rng = random.Random(1)
    a = mask(random_input(rng, 2), 0, [0, 1], KEYS8[0], B)
    with pytest.raises(ParticipantMismatch):
        aggregate([a, a])
    with pytest.raises(ParticipantMismatch):
        aggregate([a], [0, 1])
    assert aggregate([a]) == a.vec


def test_aggregate_decodes_to_plain_update():
    rng = np.random.default_rng(0)
    n, d = 5, 4
    v_prev = rng.uniform(-1, 1, d)
    grads = rng.uniform(-0.1, 0.1, (n, d))
    users = list(range(n))
    masked = [mask(build_input(v_prev, grads[i], n, P, 2, 3), i, users, KEYS8[i], B) for i in users]
    got = decode_vec(aggregate(masked, users))
    assert np.max(np.abs(got - (v_prev - grads.sum(axis=0)))) <= n / (2 * P.alpha) + 1e-12


def test_hash_and_commit_round_trip():
    gp = setup_group(3)
    inp = AggInput(0, 1, encode_vec([0.5, -0.5, 1.0], P))
    h, c, r = hash_and_commit(inp, gp, random.Random(0))
    assert decommit(encode_digest(h), c, r)
    other, _, _ = hash_and_commit(AggInput(0, 1, encode_vec([0.5, -0.5, 1.1], P)), gp)
    assert other != h
    h0, c0, r0 = hash_and_commit(AggInput(0, 1, zero_vec(3, P)), gp)
    assert h0 is None and decommit(encode_digest(h0), c0, r0)


@pytest.mark.parametrize("n_k", [1, 2, 5])
def test_verify_aggregate_honest(n_k):
    gp = setup_group(4)
    rng = np.random.default_rng(n_k)
    v_prev = rng.uniform(-1, 1, 4)
    users = list(range(n_k))
    inputs = [build_input(v_prev, rng.uniform(-0.1, 0.1, 4), n_k, P, 0, 1) for _ in users]
    hashes = [hash_and_commit(x, gp)[0] for x in inputs]
    agg = aggregate([mask(inputs[i], i, users, KEYS8[i], B) for i in users], users)
    assert verify_aggregate(agg, hashes, gp)
    bumped = FixedVec([(agg[0] + 1) % B] + list(agg)[1:], P)
    assert not verify_aggregate(bumped, hashes, gp)


def test_verify_aggregate_vacuous():
    assert verify_aggregate(zero_vec(3, P), [], setup_group(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.integers(1, B - 1))
def test_any_nonzero_delta_is_detected(pos, delta):
    gp = setup_group(3)
    rng = random.Random(pos)
    inputs = [AggInput(0, 1, encode_vec([rng.uniform(-1, 1) for _ in range(3)], P)) for _ in range(3)]
    hashes = [hf(x.vec, gp) for x in inputs]
    agg = sum_mod([x.vec for x in inputs])
    vals = list(agg)
    vals[pos] = (vals[pos] + delta) % B
    assert not verify_aggregate(FixedVec(vals, P), hashes, gp)

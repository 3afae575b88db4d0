import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from verifiable_fedmf.errors import DimensionMismatch, SumBoundViolation
from verifiable_fedmf.fixedpoint import (
    FixedParams,
    FixedVec,
    add_mod,
    check_sum_bound,
    decode,
    decode_residues,
    decode_vec,
    encode,
    encode_vec,
    sum_mod,
    to_signed,
    zero_vec,
)

P = FixedParams()
B = P.modulus
reals = st.floats(min_value=-50, max_value=50, allow_nan=False)


def test_encode_examples():
    assert encode(1.5, P) == 15_000_000
    assert encode(0.0, P) == 0
    assert encode(-0.25, P) == 2**34 - 2_500_000 == 17_177_369_184


def test_decode_examples():
    assert decode(15_000_000, P) == 1.5
    assert decode(2**34 - 2_500_000, P) == -0.25


def test_round_trip_random_sample():
    rng = np.random.default_rng(1)
    for x in rng.uniform(-50, 50, size=1000):
        assert abs(decode(encode(x, P), P) - x) <= 5e-8


def test_rounding_is_half_away_from_zero():
    p = FixedParams(alpha=2, modulus=64)
    assert encode(0.25, p) == 1
    assert encode(-0.25, p) == 63
    assert encode(0.75, p) == 2


def test_encode_rejects_out_of_range():
    with pytest.raises(OverflowError):
        encode(B / 2 / P.alpha, P)
    with pytest.raises(OverflowError):
        encode(float("nan"), P)
    with pytest.raises(OverflowError):
        encode_vec([0.0, float("inf")], P)


def test_to_signed_range_check():
    with pytest.raises(ValueError):
        to_signed(B, P)
    assert to_signed(B - 1, P) == -1


def test_add_mod_examples():
    a = FixedVec([3, 5], P)
    b = FixedVec([B - 1, 2], P)
    assert list(add_mod(a, b)) == [2, 7]
    x = encode_vec([1.0, -2.0], P)
    assert add_mod(x, encode_vec([0.0, 0.0], P)) == x
    s = add_mod(encode_vec([1.25], P), encode_vec([-2.0], P))
    assert decode_vec(s)[0] == -0.75


def test_add_mod_length_mismatch():
    with pytest.raises(DimensionMismatch):
        add_mod(zero_vec(2, P), zero_vec(3, P))


def test_sum_bound_examples():
    assert check_sum_bound(P, 2.0, 300) > 0
    with pytest.raises(SumBoundViolation) as info:
        check_sum_bound(P, 2.0, 610)
    assert info.value.margin < 0
    assert check_sum_bound(FixedParams(alpha=1, modulus=4), 0, 1) > 0


def test_params_validation():
    with pytest.raises(ValueError):
        FixedParams(modulus=3 * 2**30)
    with pytest.raises(ValueError):
        FixedParams(alpha=0)
    assert P.residue_bytes == 5


def test_fixedvec_is_read_only():
    v = encode_vec([1.0, 2.0], P)
    with pytest.raises(ValueError):
        v.values[0] = 7


@given(reals)
def test_round_trip_within_half_ulp(x):
    assert abs(decode(encode(x, P), P) - x) <= 1 / (2 * P.alpha) + 1e-12


@given(reals)
def test_negation_symmetry(x):
    e = encode(x, P)
    assert encode(-x, P) == (B - e) % B


@given(st.lists(st.integers(0, B - 1), min_size=3, max_size=3),
       st.lists(st.integers(0, B - 1), min_size=3, max_size=3),
       st.lists(st.integers(0, B - 1), min_size=3, max_size=3))
def test_add_mod_commutative_associative(a, b, c):
    a, b, c = (FixedVec(v, P) for v in (a, b, c))
    assert add_mod(a, b) == add_mod(b, a)
    assert add_mod(add_mod(a, b), c) == add_mod(a, add_mod(b, c))
    assert add_mod(a, zero_vec(3, P)) == a


@given(st.lists(reals, min_size=1, max_size=40))
def test_signed_sum_decodes_within_n_ulps(xs):
    total = sum_mod([encode_vec([x], P) for x in xs])
    assert abs(decode_vec(total)[0] - math.fsum(xs)) <= len(xs) / (2 * P.alpha) + 1e-9


@given(st.lists(st.integers(0, B - 1), min_size=1, max_size=20))
def test_vector_decode_matches_scalar(vals):
    arr = np.array(vals, dtype=np.uint64)
    expected = [decode(v, P) for v in vals]
    assert decode_residues(arr, P).tolist() == expected


@settings(max_examples=50)
@given(st.lists(reals, min_size=1, max_size=16))
def test_encode_vec_matches_scalar(xs):
    assert list(encode_vec(xs, P)) == [encode(x, P) for x in xs]

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from verifiable_fedmf.errors import MalformedMessage
from verifiable_fedmf.fixedpoint import FixedParams
from verifiable_fedmf.protocol.messages import (
    HEADER_LEN,
    NO_ITEM,
    SERVER,
    Abort,
    AggregateBroadcast,
    CommitMsg,
    DecommitMsg,
    ItemMatrixBroadcast,
    MaskedMsg,
    ParticipantLists,
    PubKey,
    RatedItems,
    WireFormat,
    decode,
    encode,
    peek,
)

FMT = WireFormat(16, FixedParams())
B = 2**34


def residues(shape, seed=0):
    return np.random.default_rng(seed).integers(0, B, size=shape, dtype=np.uint64)


SAMPLES = [
    PubKey(3, b"\x02" + bytes(range(32))),
    RatedItems(1, (0, 4, 9)),
    ItemMatrixBroadcast(0, residues((3, 16))),
    ParticipantLists(2, ((0, 1), (), (1, 2, 3))),
    CommitMsg(4, 7, 2, bytes(32)),
    MaskedMsg(0, 1, 5, residues(16, 1)),
    AggregateBroadcast(1, 5, residues(16, 2)),
    DecommitMsg(2, 0, 1, bytes(33), b"r" * 32),
    Abort(1, 3, "commitment mismatch on item 2"),
]


@pytest.mark.parametrize("msg", SAMPLES, ids=lambda m: m.kind)
def test_round_trip(msg):
    data = encode(msg, FMT)
    assert decode(data, FMT) == msg
    assert decode(data, FMT).to_bytes(FMT) == data


def test_sizes():
    assert len(CommitMsg(0, 0, 1, bytes(32)).to_bytes(FMT)) == 13 + 32
    assert len(MaskedMsg(0, 0, 1, residues(16)).to_bytes(FMT)) == 13 + 16 * 5
    assert len(DecommitMsg(0, 0, 1, bytes(33), bytes(32)).to_bytes(FMT)) == 13 + 65
    assert len(PubKey(0, bytes(33)).to_bytes(FMT)) == 13 + 33
    assert HEADER_LEN == 13


def test_header_layout():
    data = AggregateBroadcast(6, 9, residues(16)).to_bytes(FMT)
    assert data[0] == AggregateBroadcast.type_code
    assert int.from_bytes(data[1:5], "little") == SERVER
    assert int.from_bytes(data[5:9], "little") == 9
    assert int.from_bytes(data[9:13], "little") == 6
    cls, sender, it, item = peek(PubKey(2, bytes(33)).to_bytes(FMT))
    assert (cls, sender, it, item) == (PubKey, 2, 0, NO_ITEM)


def test_residues_pack_little_endian():
    data = MaskedMsg(0, 0, 1, np.array([1] + [0] * 15, dtype=np.uint64)).to_bytes(FMT)
    assert data[HEADER_LEN:HEADER_LEN + 5] == b"\x01\x00\x00\x00\x00"


@pytest.mark.parametrize("data", [
    b"",
    bytes(12),
    bytes([99]) + bytes(12),
    CommitMsg(0, 0, 1, bytes(32)).to_bytes(FMT)[:-1],
    MaskedMsg(0, 0, 1, residues(16)).to_bytes(FMT) + b"\x00",
    ParticipantLists(1, ((0, 1),)).to_bytes(FMT)[:-2],
    Abort(0, 0, "x").to_bytes(FMT)[:-1] + b"\xff",
])
def test_malformed(data):
    with pytest.raises(MalformedMessage):
        decode(data, FMT)


def test_residue_out_of_range_rejected():
    fmt = WireFormat(1, FixedParams(alpha=2, modulus=2**10))
    data = bytearray(MaskedMsg(0, 0, 1, np.array([5], dtype=np.uint64)).to_bytes(fmt))
    data[-1] = 0xFF
    with pytest.raises(MalformedMessage):
        decode(bytes(data), fmt)


@given(st.lists(st.integers(0, B - 1), min_size=16, max_size=16),
       st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 2), st.integers(0, 2**32 - 1))
def test_masked_round_trip_property(vals, user, item, it):
    msg = MaskedMsg(user, item, it, np.array(vals, dtype=np.uint64))
    assert decode(msg.to_bytes(FMT), FMT) == msg

"""Protocol messages and their canonical byte encoding.

Every message starts with a 13-byte little-endian header
``msg_type:u8 | sender:u32 | iteration:u32 | item:u32``.  ``sender`` is the
user the content originates from (``SERVER`` for server-authored
messages), so a relayed message is byte-identical to what its author sent.
Group elements take 33 bytes, digests and commitment randomness 32 bytes,
and residues ``ceil(log2(B) / 8)`` bytes each.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from ..errors import MalformedMessage
from ..fixedpoint import FixedParams

HEADER = struct.Struct("<BIII")
HEADER_LEN = HEADER.size
SERVER = 0xFFFFFFFF
NO_ITEM = 0xFFFFFFFF
POINT_LEN = 33
DIGEST_LEN = 32
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class WireFormat:
    d: int
    params: FixedParams

    @property
    def residue_bytes(self) -> int:
        return self.params.residue_bytes

    def pack(self, residues: np.ndarray) -> bytes:
        nb = self.residue_bytes
        raw = np.ascontiguousarray(residues, dtype="<u8").reshape(-1).view(np.uint8).reshape(-1, 8)
        return raw[:, :nb].tobytes()

    def unpack(self, data: bytes, count: int) -> np.ndarray:
        nb = self.residue_bytes
        if len(data) != count * nb:
            raise MalformedMessage(f"expected {count * nb} residue bytes, got {len(data)}")
        buf = np.zeros((count, 8), dtype=np.uint8)
        buf[:, :nb] = np.frombuffer(data, dtype=np.uint8).reshape(count, nb)
        vals = buf.view("<u8").reshape(count).astype(np.uint64)
        if count and int(vals.max()) >= self.params.modulus:
            raise MalformedMessage("residue outside [0, B)")
        return vals


class Message:
    type_code: ClassVar[int]
    kind: ClassVar[str]

    def header(self) -> tuple[int, int, int]:
        """(sender, iteration, item) as written on the wire."""
        raise NotImplementedError

    def payload(self, fmt: WireFormat) -> bytes:
        raise NotImplementedError

    @classmethod
    def from_parts(cls, sender: int, iteration: int, item: int, payload: bytes, fmt: WireFormat):
        raise NotImplementedError

    def to_bytes(self, fmt: WireFormat) -> bytes:
        return HEADER.pack(self.type_code, *self.header()) + self.payload(fmt)


def _expect_len(payload: bytes, n: int, what: str):
    if len(payload) != n:
        raise MalformedMessage(f"{what}: payload of {len(payload)} bytes, expected {n}")


def _pack_ids(ids) -> bytes:
    ids = list(ids)
    return _U32.pack(len(ids)) + struct.pack(f"<{len(ids)}I", *ids)


def _unpack_ids(payload: bytes, offset: int) -> tuple[tuple[int, ...], int]:
    if offset + 4 > len(payload):
        raise MalformedMessage("truncated id list")
    (count,) = _U32.unpack_from(payload, offset)
    offset += 4
    end = offset + 4 * count
    if end > len(payload):
        raise MalformedMessage("truncated id list")
    return struct.unpack_from(f"<{count}I", payload, offset), end


@dataclass(frozen=True)
class PubKey(Message):
    type_code: ClassVar[int] = 1
    kind: ClassVar[str] = "PubKey"
    user: int
    mpk: bytes

    def header(self):
        return self.user, 0, NO_ITEM

    def payload(self, fmt):
        return self.mpk

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        _expect_len(payload, POINT_LEN, cls.kind)
        return cls(sender, bytes(payload))


@dataclass(frozen=True)
class RatedItems(Message):
    """A user's rated item set, which the server needs to form PartText participant lists."""

    type_code: ClassVar[int] = 2
    kind: ClassVar[str] = "RatedItems"
    user: int
    items: tuple

    def header(self):
        return self.user, 0, NO_ITEM

    def payload(self, fmt):
        return _pack_ids(self.items)

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        items, end = _unpack_ids(payload, 0)
        _expect_len(payload, end, cls.kind)
        return cls(sender, items)


@dataclass(frozen=True, eq=False)
class ItemMatrixBroadcast(Message):
    type_code: ClassVar[int] = 3
    kind: ClassVar[str] = "ItemMatrixBroadcast"
    iteration: int
    V: np.ndarray  # (m, d) residues

    def header(self):
        return SERVER, self.iteration, NO_ITEM

    def payload(self, fmt):
        return _U32.pack(self.V.shape[0]) + fmt.pack(self.V)

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        if len(payload) < 4:
            raise MalformedMessage("truncated item matrix")
        (m,) = _U32.unpack_from(payload, 0)
        vals = fmt.unpack(payload[4:], m * fmt.d)
        return cls(iteration, vals.reshape(m, fmt.d))

    def __eq__(self, other):
        return isinstance(other, ItemMatrixBroadcast) and self.iteration == other.iteration and np.array_equal(self.V, other.V)


@dataclass(frozen=True)
class ParticipantLists(Message):
    type_code: ClassVar[int] = 4
    kind: ClassVar[str] = "ParticipantLists"
    iteration: int
    lists: tuple  # lists[k] = sorted participants of item k

    def header(self):
        return SERVER, self.iteration, NO_ITEM

    def payload(self, fmt):
        return _U32.pack(len(self.lists)) + b"".join(_pack_ids(s) for s in self.lists)

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        if len(payload) < 4:
            raise MalformedMessage("truncated participant lists")
        (m,) = _U32.unpack_from(payload, 0)
        off = 4
        lists = []
        for _ in range(m):
            ids, off = _unpack_ids(payload, off)
            lists.append(ids)
        _expect_len(payload, off, cls.kind)
        return cls(iteration, tuple(lists))


@dataclass(frozen=True)
class CommitMsg(Message):
    type_code: ClassVar[int] = 5
    kind: ClassVar[str] = "CommitMsg"
    user: int
    item: int
    iteration: int
    c: bytes

    def header(self):
        return self.user, self.iteration, self.item

    def payload(self, fmt):
        return self.c

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        _expect_len(payload, DIGEST_LEN, cls.kind)
        return cls(sender, item, iteration, bytes(payload))


@dataclass(frozen=True, eq=False)
class MaskedMsg(Message):
    type_code: ClassVar[int] = 6
    kind: ClassVar[str] = "MaskedMsg"
    user: int
    item: int
    iteration: int
    sigma: np.ndarray

    def header(self):
        return self.user, self.iteration, self.item

    def payload(self, fmt):
        return fmt.pack(self.sigma)

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        return cls(sender, item, iteration, fmt.unpack(payload, fmt.d))

    def __eq__(self, other):
        return (
            isinstance(other, MaskedMsg)
            and (self.user, self.item, self.iteration) == (other.user, other.item, other.iteration)
            and np.array_equal(self.sigma, other.sigma)
        )


@dataclass(frozen=True, eq=False)
class AggregateBroadcast(Message):
    type_code: ClassVar[int] = 7
    kind: ClassVar[str] = "AggregateBroadcast"
    item: int
    iteration: int
    v_agg: np.ndarray

    def header(self):
        return SERVER, self.iteration, self.item

    def payload(self, fmt):
        return fmt.pack(self.v_agg)

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        return cls(item, iteration, fmt.unpack(payload, fmt.d))

    def __eq__(self, other):
        return (
            isinstance(other, AggregateBroadcast)
            and (self.item, self.iteration) == (other.item, other.iteration)
            and np.array_equal(self.v_agg, other.v_agg)
        )


@dataclass(frozen=True)
class DecommitMsg(Message):
    type_code: ClassVar[int] = 8
    kind: ClassVar[str] = "DecommitMsg"
    user: int
    item: int
    iteration: int
    h: bytes
    r: bytes

    def header(self):
        return self.user, self.iteration, self.item

    def payload(self, fmt):
        return self.h + self.r

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        _expect_len(payload, POINT_LEN + DIGEST_LEN, cls.kind)
        return cls(sender, item, iteration, bytes(payload[:POINT_LEN]), bytes(payload[POINT_LEN:]))


@dataclass(frozen=True)
class Abort(Message):
    type_code: ClassVar[int] = 9
    kind: ClassVar[str] = "Abort"
    user: int
    iteration: int
    reason: str

    def header(self):
        return self.user, self.iteration, NO_ITEM

    def payload(self, fmt):
        return self.reason.encode("utf-8")

    @classmethod
    def from_parts(cls, sender, iteration, item, payload, fmt):
        try:
            return cls(sender, iteration, bytes(payload).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MalformedMessage("abort reason is not UTF-8") from exc


MESSAGE_TYPES: dict[int, type[Message]] = {
    cls.type_code: cls
    for cls in (PubKey, RatedItems, ItemMatrixBroadcast, ParticipantLists, CommitMsg, MaskedMsg,
                AggregateBroadcast, DecommitMsg, Abort)
}
KINDS = {cls.kind: cls for cls in MESSAGE_TYPES.values()}


def peek(data: bytes) -> tuple[type[Message], int, int, int]:
    """Parse only the header: (class, sender, iteration, item)."""
    if len(data) < HEADER_LEN:
        raise MalformedMessage("shorter than a header")
    code, sender, iteration, item = HEADER.unpack_from(data, 0)
    cls = MESSAGE_TYPES.get(code)
    if cls is None:
        raise MalformedMessage(f"unknown message type {code}")
    return cls, sender, iteration, item


def decode(data: bytes, fmt: WireFormat) -> Message:
    cls, sender, iteration, item = peek(data)
    return cls.from_parts(sender, iteration, item, memoryview(data)[HEADER_LEN:].tobytes(), fmt)


def encode(msg: Message, fmt: WireFormat) -> bytes:
    return msg.to_bytes(fmt)

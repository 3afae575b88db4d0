"""Misbehaving-server modes, applied as rewrite hooks on the bus.

Each mode sees every message travelling over a server link (as a
:class:`~verifiable_fedmf.transport_sim.Delivery`) and returns the bytes to
deliver, or ``None`` to drop the message.  Rewrites only touch
server-originated traffic; drops may hit either direction.
``iteration=None`` means "every iteration".
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .messages import HEADER_LEN, POINT_LEN, SERVER, WireFormat, peek


class AdversaryMode:
    honest = False
    iteration: int | None = None

    def apply(self, delivery, fmt: WireFormat) -> bytes | None:
        raise NotImplementedError

    def _active(self, delivery) -> bool:
        return self.iteration is None or delivery.iteration == self.iteration

    def describe(self) -> str:
        return type(self).__name__


@dataclass
class Honest(AdversaryMode):
    honest = True

    def apply(self, delivery, fmt):
        return delivery.data

    def describe(self):
        return "honest"


def _add_to_residue(data: bytes, offset: int, delta: int, fmt: WireFormat) -> bytes:
    nb = fmt.residue_bytes
    old = int.from_bytes(data[offset:offset + nb], "little")
    new = (old + delta) % fmt.params.modulus
    return data[:offset] + new.to_bytes(nb, "little") + data[offset + nb:]


def _flip(data: bytes, bit: int) -> bytes:
    buf = bytearray(data)
    buf[bit // 8] ^= 1 << (bit % 8)
    return bytes(buf)


@dataclass
class TamperAggregate(AdversaryMode):
    """Add ``delta`` (mod B) to coordinate ``dim`` of the aggregate broadcast for ``item``."""

    item: int
    dim: int
    delta: int
    iteration: int | None = None

    def apply(self, delivery, fmt):
        if delivery.sender != SERVER or delivery.kind != "AggregateBroadcast" or not self._active(delivery):
            return delivery.data
        if peek(delivery.data)[3] != self.item:
            return delivery.data
        if not 0 <= self.dim < fmt.d:
            raise ValueError(f"dimension {self.dim} outside [0, {fmt.d})")
        return _add_to_residue(delivery.data, HEADER_LEN + self.dim * fmt.residue_bytes, self.delta, fmt)

    def describe(self):
        return f"tamper-agg:{self.item},{self.dim},{self.delta}"


@dataclass
class TamperDecommit(AdversaryMode):
    """Flip one bit of ``user``'s decommitment for ``item`` as the server relays it.

    ``part`` picks the hash digest (``"h"``) or the randomness (``"r"``).
    """

    user: int
    item: int
    iteration: int | None = None
    part: str = "r"
    bit: int = 0

    def apply(self, delivery, fmt):
        if delivery.sender != SERVER or delivery.kind != "DecommitMsg" or not self._active(delivery):
            return delivery.data
        _, author, _, item = peek(delivery.data)
        if (author, item) != (self.user, self.item):
            return delivery.data
        base = HEADER_LEN + (POINT_LEN if self.part == "r" else 0)
        return _flip(delivery.data, 8 * base + self.bit)

    def describe(self):
        return f"tamper-decommit:{self.user},{self.item}"


@dataclass
class DropMessage(AdversaryMode):
    """Silently drop the ``index``-th message of ``kind`` crossing a server link."""

    kind: str
    index: int = 0
    iteration: int | None = None
    _seen: int = field(default=0, init=False, repr=False)

    def apply(self, delivery, fmt):
        if delivery.kind != self.kind or not self._active(delivery):
            return delivery.data
        hit = self._seen == self.index
        self._seen += 1
        return None if hit else delivery.data

    def describe(self):
        return f"drop:{self.kind},{self.index}"


@dataclass
class ReplayMaskedVec(AdversaryMode):
    """Aggregate with ``user``'s stale masked vector for ``item`` from ``from_iteration``.

    The server keeps a copy of the upload at ``from_iteration`` and later
    swaps it in for the fresh one, rewriting only the iteration field so
    that the barrier accepts it.
    """

    user: int
    item: int
    from_iteration: int
    iteration: int | None = None
    _stale: bytes | None = field(default=None, init=False, repr=False)

    def apply(self, delivery, fmt):
        if delivery.kind != "MaskedMsg" or delivery.recipient != SERVER:
            return delivery.data
        _, author, it, item = peek(delivery.data)
        if (author, item) != (self.user, self.item):
            return delivery.data
        if it == self.from_iteration:
            self._stale = delivery.data
            return delivery.data
        if self._stale is None or it <= self.from_iteration or not self._active(delivery):
            return delivery.data
        return self._stale[:5] + it.to_bytes(4, "little") + self._stale[9:]

    def describe(self):
        return f"replay:{self.user},{self.item},{self.from_iteration}"


@dataclass
class FlipBit(AdversaryMode):
    """Flip one bit (counted over the whole encoded message) of server-sent ``kind`` messages.

    Optional filters narrow it to one item, one content author or one recipient.
    """

    kind: str
    bit: int
    iteration: int | None = None
    item: int | None = None
    author: int | None = None
    recipient: int | None = None

    def apply(self, delivery, fmt):
        if delivery.sender != SERVER or delivery.kind != self.kind or not self._active(delivery):
            return delivery.data
        if self.recipient is not None and delivery.recipient != self.recipient:
            return delivery.data
        _, author, _, item = peek(delivery.data)
        if self.item is not None and item != self.item:
            return delivery.data
        if self.author is not None and author != self.author:
            return delivery.data
        if self.bit >= 8 * len(delivery.data):
            raise ValueError(f"bit {self.bit} beyond a {len(delivery.data)}-byte message")
        return _flip(delivery.data, self.bit)


def parse_adversary(text: str) -> AdversaryMode:
    """Parse CLI syntax: ``honest``, ``tamper-agg:k,dim,delta[@t]``, ``tamper-decommit:u,k[@t]``,
    ``drop:Kind,index[@t]`` or ``replay:u,k,t0[@t]``."""
    text = text.strip()
    at = None
    if "@" in text:
        text, at_s = text.rsplit("@", 1)
        at = int(at_s)
    name, _, args = text.partition(":")
    parts = [a.strip() for a in args.split(",")] if args else []
    try:
        if name == "honest" and not parts:
            return Honest()
        if name == "tamper-agg" and len(parts) == 3:
            return TamperAggregate(int(parts[0]), int(parts[1]), int(parts[2]), iteration=at)
        if name == "tamper-decommit" and len(parts) == 2:
            return TamperDecommit(int(parts[0]), int(parts[1]), iteration=at)
        if name == "drop" and len(parts) in (1, 2):
            return DropMessage(parts[0], int(parts[1]) if len(parts) == 2 else 0, iteration=at)
        if name == "replay" and len(parts) == 3:
            return ReplayMaskedVec(int(parts[0]), int(parts[1]), int(parts[2]), iteration=at)
    except ValueError as exc:
        raise ValueError(f"bad adversary string {text!r}: {exc}") from exc
    raise ValueError(f"bad adversary string {text!r}")

"""Deterministic in-process message bus.

Actors never talk to each other directly: they hand serialized messages to
the bus, and the driver calls :meth:`Bus.deliver_all` at every barrier.
The bus counts every delivered byte under the current (iteration, phase,
step) label and lets an adversary hook rewrite or drop traffic on the
server's links.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from .errors import UnknownRecipient
from .protocol.messages import SERVER, peek

UP = "user->server"
DOWN = "server->user"


@dataclass
class Delivery:
    seq: int
    iteration: int
    phase: int
    step: int
    sender: int
    recipient: int
    kind: str
    data: bytes

    @property
    def size(self) -> int:
        return len(self.data)

    @property
    def direction(self) -> str:
        return DOWN if self.sender == SERVER else UP


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    iteration: int
    phase: int
    step: int
    sender: int
    recipient: int
    kind: str
    size: int
    data: bytes | None = None


class Bus:
    def __init__(self, policy: str = "fifo", seed: int = 0, record: bool = False, fmt=None):
        if policy not in ("fifo", "shuffle"):
            raise ValueError(f"unknown delivery policy {policy!r}")
        self.policy = policy
        self._rng = random.Random(seed)
        self.record = record
        self.fmt = fmt  # handed to tamper hooks that rewrite residues
        self._recipients: set[int] = set()
        self._queue: list[tuple[int, bytes]] = []
        self._seq = 0
        self._label = (0, 0, 0)
        self._tamper = None
        self.counters: dict[tuple[int, int, str], int] = defaultdict(int)
        # (iteration, phase, step, direction, actor) -> bytes; actor is the
        # sending user for uploads and the receiving user for server traffic
        self.per_actor: dict[tuple[int, int, int, str, int], int] = defaultdict(int)
        self._log: list[tuple] = []
        self.dropped: list[Delivery] = []
        self.delivered = 0

    def register(self, actor: int):
        self._recipients.add(actor)

    def set_step(self, iteration: int, phase: int, step: int):
        self._label = (iteration, phase, step)

    def install_tamper(self, mode):
        """Route server-link traffic through ``mode.apply(delivery, fmt)``; ``None`` restores honesty."""
        self._tamper = None if mode is None or getattr(mode, "honest", False) else mode

    def send(self, sender: int, to: int | Iterable[int] | None, data: bytes):
        """Queue ``data`` for one recipient, several, or (``None``) everyone but the sender."""
        if to is None:
            targets = sorted(r for r in self._recipients if r != sender)
        elif isinstance(to, int):
            targets = [to]
        else:
            targets = list(to)
        kind = peek(data)[0].kind
        it, ph, st = self._label
        for r in targets:
            if r not in self._recipients:
                raise UnknownRecipient(f"recipient {r} is not registered")
        if self._tamper is not None and SERVER in (sender, *targets):
            for r in targets:
                self._send_one(sender, r, kind, data, it, ph, st)
            return
        # untouched fan-out: one log row and one queue pass for all targets
        seq = self._seq
        self._seq += len(targets)
        self._account(seq, it, ph, st, sender, tuple(targets), kind, data)
        self._queue.extend((r, data) for r in targets)

    def _send_one(self, sender, r, kind, data, it, ph, st):
        seq = self._seq
        self._seq += 1
        out = data
        if SERVER in (sender, r):
            out = self._tamper.apply(Delivery(seq, it, ph, st, sender, r, kind, data), self.fmt)
            if out is None:
                self.dropped.append(Delivery(seq, it, ph, st, sender, r, kind, data))
                return
        self._account(seq, it, ph, st, sender, (r,), kind, out)
        self._queue.append((r, out))

    def _account(self, seq, it, ph, st, sender, recipients, kind, data):
        direction = DOWN if sender == SERVER else UP
        size = len(data)
        self.counters[(ph, st, direction)] += size * len(recipients)
        if direction == DOWN:
            for r in recipients:
                self.per_actor[(it, ph, st, direction, r)] += size
        else:
            self.per_actor[(it, ph, st, direction, sender)] += size * len(recipients)
        self._log.append((seq, it, ph, st, sender, recipients, kind, size, data if self.record else None))

    @property
    def transcript(self) -> list[TranscriptEntry]:
        """Every accepted message in send order."""
        return [TranscriptEntry(seq + i, it, ph, st, sender, r, kind, size, data)
                for seq, it, ph, st, sender, rs, kind, size, data in self._log
                for i, r in enumerate(rs)]

    def deliver_all(self) -> list[tuple[int, bytes]]:
        batch, self._queue = self._queue, []
        if self.policy == "shuffle":
            self._rng.shuffle(batch)
        self.delivered += len(batch)
        return batch

    def total_bytes(self) -> int:
        return sum(self.counters.values())

    def pending(self) -> int:
        return len(self._queue)

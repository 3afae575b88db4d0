"""User and server state machines.

Actors consume raw bytes through ``receive`` and produce outgoing traffic
from step methods as lists of ``(recipient, bytes)``; a recipient of
``None`` means "every user".  ``receive`` raises for anything the current
state does not accept (wrong kind, iteration, sender or item, duplicates,
malformed payloads); the driver logs such rejections and drops the
message, so a rejected message is indistinguishable from a lost one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..crypto import MaskStream, decode_digest, decommit, encode_digest, key_agree, keygen
from ..crypto.homhash import GroupParams, PrecompTable
from ..errors import (
    InvalidPublicKey,
    MalformedMessage,
    MissingKey,
    ParticipantMismatch,
    PhaseError,
    VerificationFailure,
)
from ..fixedpoint import FixedParams, FixedVec, decode_residues, encode_vec
from ..mf_core import HyperParams, local_gradients
from ..secure_agg import AggInput, MaskedVec, aggregate, hash_and_commit, mask_many, verify_aggregate
from .messages import (
    HEADER_LEN,
    SERVER,
    AggregateBroadcast,
    CommitMsg,
    DecommitMsg,
    ItemMatrixBroadcast,
    MaskedMsg,
    ParticipantLists,
    PubKey,
    RatedItems,
    WireFormat,
    peek,
)

PARTTEXT = "parttext"
FULLTEXT = "fulltext"
PLAINTEXT = "plaintext"


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    m: int
    mode: str = PARTTEXT
    hyper: HyperParams = field(default_factory=HyperParams)
    fixed: FixedParams = field(default_factory=FixedParams)
    group_seed: bytes = b"verifiable-fedmf"
    window_bits: int = 11

    def __post_init__(self):
        if self.mode not in (PARTTEXT, FULLTEXT):
            raise ValueError(f"protocol mode must be {PARTTEXT!r} or {FULLTEXT!r}, not {self.mode!r}")
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one user and one item")

    @property
    def fmt(self) -> WireFormat:
        return WireFormat(self.hyper.d, self.fixed)


def _check_ids(ids, n: int, what: str):
    if any(b <= a for a, b in zip(ids, ids[1:])) or (ids and (ids[0] < 0 or ids[-1] >= n)):
        raise MalformedMessage(f"{what}: ids must be strictly increasing and below {n}")


class UserActor:
    def __init__(self, uid: int, cfg: ProtocolConfig, items, ratings, rng, group: GroupParams,
                 table: PrecompTable | None = None):
        self.uid = uid
        self.cfg = cfg
        self.fmt = cfg.fmt
        self.items = np.asarray(items, dtype=np.int64)
        self.ratings = np.asarray(ratings, dtype=np.float64)
        self.rng = rng
        self.group = group
        self.table = table
        self.keypair = None
        self.peer_keys: dict[int, bytes] = {}
        self.streams: dict[int, MaskStream] = {}
        self._pubkeys: dict[int, bytes] = {}
        self.u: np.ndarray | None = None
        self.V_res: np.ndarray | None = None
        self.V: np.ndarray | None = None
        self.t = 0
        self._it = 0
        self._expect: tuple[str, ...] = ()
        self._reset_round()

    def _reset_round(self):
        self.lists: tuple | None = None
        self.my_items: list[int] = []
        self._mine_set: set[int] = set()
        self._members: dict[int, set[int]] = {}
        self._inputs: dict[int, AggInput] = {}
        self._own_h: dict[int, object] = {}
        self._own_hb: dict[int, bytes] = {}
        self._own_r: dict[int, bytes] = {}
        self._commits: dict[tuple[int, int], bytes] = {}
        self._decommits: dict[tuple[int, int], tuple[bytes, bytes]] = {}
        self._peer_h: dict[tuple[int, int], object] = {}
        self._aggregates: dict[int, np.ndarray] = {}

    # receiving

    def receive(self, data: bytes):
        cls, sender, it, item = peek(data)
        if cls.kind not in self._expect:
            raise PhaseError(f"user {self.uid} does not accept {cls.kind} now")
        if it != self._it:
            raise PhaseError(f"user {self.uid} got iteration {it}, expected {self._it}")
        msg = cls.from_parts(sender, it, item, data[HEADER_LEN:], self.fmt)
        getattr(self, "_on_" + cls.kind)(msg, sender, item)

    def _on_PubKey(self, msg, sender, item):
        j = msg.user
        if j == self.uid or not 0 <= j < self.cfg.n:
            raise PhaseError(f"public key for unexpected user {j}")
        if j in self._pubkeys:
            raise ParticipantMismatch(f"second public key for user {j}")
        self._pubkeys[j] = msg.mpk

    def _on_ItemMatrixBroadcast(self, msg, sender, item):
        if sender != SERVER:
            raise PhaseError("item matrix not sent by the server")
        if msg.V.shape != (self.cfg.m, self.cfg.hyper.d):
            raise MalformedMessage(f"item matrix of shape {msg.V.shape}")
        if self.V_res is not None:
            raise ParticipantMismatch("second initial item matrix")
        self.V_res = msg.V.copy()
        self.V = decode_residues(self.V_res, self.cfg.fixed)

    def _on_ParticipantLists(self, msg, sender, item):
        if sender != SERVER:
            raise PhaseError("participant lists not sent by the server")
        if len(msg.lists) != self.cfg.m:
            raise MalformedMessage(f"{len(msg.lists)} participant lists for {self.cfg.m} items")
        if self.lists is not None:
            raise ParticipantMismatch("second set of participant lists")
        for s in msg.lists:
            _check_ids(s, self.cfg.n, "participant list")
        self.lists = msg.lists

    def _check_peer_item(self, j: int, k: int):
        if not 0 <= k < self.cfg.m or k not in self._mine_set:
            raise PhaseError(f"user {self.uid} does not take part in item {k}")
        if j == self.uid or j not in self._members[k]:
            raise PhaseError(f"user {j} is not a peer for item {k}")

    def _on_CommitMsg(self, msg, sender, item):
        self._check_peer_item(msg.user, item)
        key = (item, msg.user)
        if key in self._commits:
            raise ParticipantMismatch(f"duplicate commitment {key}")
        self._commits[key] = msg.c

    def _on_AggregateBroadcast(self, msg, sender, item):
        if sender != SERVER:
            raise PhaseError("aggregate not sent by the server")
        if not 0 <= item < self.cfg.m or not self.lists[item]:
            raise PhaseError(f"no aggregate expected for item {item}")
        if item in self._aggregates:
            raise ParticipantMismatch(f"duplicate aggregate for item {item}")
        self._aggregates[item] = msg.v_agg

    def _on_DecommitMsg(self, msg, sender, item):
        self._check_peer_item(msg.user, item)
        key = (item, msg.user)
        if key in self._decommits:
            raise ParticipantMismatch(f"duplicate decommitment {key}")
        self._decommits[key] = (msg.h, msg.r)

    # phase 0

    def start(self) -> list:
        """Generate the key pair; announce it (and, in PartText, the rated item set)."""
        self.keypair = keygen(self.rng)
        out = [(SERVER, PubKey(self.uid, self.keypair.public_bytes).to_bytes(self.fmt))]
        if self.cfg.mode == PARTTEXT:
            out.append((SERVER, RatedItems(self.uid, tuple(self.items.tolist())).to_bytes(self.fmt)))
        self._expect = ("PubKey",)
        return out

    def agree_keys(self) -> list:
        for j in range(self.cfg.n):
            if j != self.uid and j not in self._pubkeys:
                raise MissingKey(j)
        for j, mpk in sorted(self._pubkeys.items()):
            ck = key_agree(self.keypair, mpk)
            self.peer_keys[j] = ck
            self.streams[j] = MaskStream(ck)
        self._expect = ("ItemMatrixBroadcast",)
        return []

    def init_profile(self, u0) -> list:
        u0 = np.asarray(u0, dtype=np.float64)
        if u0.shape != (self.cfg.hyper.d,):
            raise ValueError(f"profile of shape {u0.shape}")
        self.u = u0.copy()
        return []

    # phase 1

    def begin_iteration(self, t: int):
        if self.V_res is None or self.keypair is None:
            raise PhaseError(f"user {self.uid} is not initialized")
        if t != self.t + 1:
            raise PhaseError(f"user {self.uid} at iteration {self.t} asked to run {t}")
        self._reset_round()
        self._it = t
        self._expect = ("ParticipantLists",) if self.cfg.mode == PARTTEXT else ()

    def user_update(self) -> list:
        cfg = self.cfg
        rated = self.items.tolist()
        if cfg.mode == PARTTEXT:
            if self.lists is None:
                raise ParticipantMismatch("participant lists never arrived")
            mine = [k for k, s in enumerate(self.lists) if self.uid in s]
            if mine != rated:
                raise ParticipantMismatch(f"user {self.uid} listed for {mine}, rated {rated}")
        else:
            everyone = tuple(range(cfg.n))
            self.lists = (everyone,) * cfg.m
            mine = list(range(cfg.m))
        self.my_items = mine
        self._mine_set = set(mine)
        self._members = {k: set(self.lists[k]) for k in mine}
        G_u, G_items = local_gradients(self.u, self.V, self.items, self.ratings, cfg.hyper)
        n_k = np.array([len(self.lists[k]) for k in mine], dtype=np.float64)
        X = self.V[mine] / n_k[:, None]
        if cfg.mode == PARTTEXT:
            X -= G_items
        elif len(rated):
            X[self.items] -= G_items
        self.u = self.u - G_u
        t = self._it
        self._inputs = {k: AggInput(k, t, encode_vec(X[r], cfg.fixed)) for r, k in enumerate(mine)}
        self._expect = ()
        return []

    # phase 2

    def make_commitments(self) -> list:
        out = []
        for k in self.my_items:
            h, c, r = hash_and_commit(self._inputs[k], self.group, self.rng, self.table)
            self._own_h[k] = h
            self._own_hb[k] = encode_digest(h)
            self._own_r[k] = r
            out.append((SERVER, CommitMsg(self.uid, k, self._it, c).to_bytes(self.fmt)))
        self._expect = ("CommitMsg",)
        return out

    def mask_inputs(self) -> list:
        for k in self.my_items:
            for j in self.lists[k]:
                if j != self.uid and (k, j) not in self._commits:
                    raise ParticipantMismatch(f"user {self.uid}: no commitment from {j} for item {k}")
        masked = mask_many(self._inputs, self.uid, self.lists_by_item(), self.streams, self._it)
        self._expect = ("AggregateBroadcast",)
        return [
            (SERVER, MaskedMsg(self.uid, k, self._it, mv.vec.values).to_bytes(self.fmt))
            for k, mv in sorted(masked.items())
        ]

    def lists_by_item(self) -> dict[int, tuple]:
        return {k: self.lists[k] for k in self.my_items}

    # phase 3

    def decommit(self) -> list:
        self._expect = ("DecommitMsg",)
        return [
            (SERVER, DecommitMsg(self.uid, k, self._it, self._own_hb[k], self._own_r[k]).to_bytes(self.fmt))
            for k in self.my_items
        ]

    def verify_commitments(self) -> list:
        self._expect = ()
        for k in self.my_items:
            for j in self.lists[k]:
                if j == self.uid:
                    continue
                opened = self._decommits.get((k, j))
                if opened is None or not decommit(opened[0], self._commits[(k, j)], opened[1]):
                    raise VerificationFailure(VerificationFailure.COMMITMENT, k, self._it, self.uid)
                try:
                    self._peer_h[(k, j)] = decode_digest(opened[0])
                except InvalidPublicKey:
                    raise VerificationFailure(VerificationFailure.COMMITMENT, k, self._it, self.uid) from None
        return []

    def verify_aggregates(self) -> list:
        """Check every aggregate this user can check; accept V^t only if all pass."""
        active = [k for k, s in enumerate(self.lists) if s]
        for k in active:
            agg = self._aggregates.get(k)
            if agg is None:
                raise VerificationFailure(VerificationFailure.AGGREGATE, k, self._it, self.uid)
            if k in self._mine_set:
                hashes = [self._own_h[k]] + [self._peer_h[(k, j)] for j in self.lists[k] if j != self.uid]
                if not verify_aggregate(FixedVec._trusted(agg, self.cfg.fixed), hashes, self.group, self.table):
                    raise VerificationFailure(VerificationFailure.AGGREGATE, k, self._it, self.uid)
        if active:
            self.V_res[active] = np.stack([self._aggregates[k] for k in active])
            self.V[active] = decode_residues(self.V_res[active], self.cfg.fixed)
        self.t = self._it
        self._expect = ()
        return []


class ServerActor:
    def __init__(self, cfg: ProtocolConfig):
        self.cfg = cfg
        self.fmt = cfg.fmt
        self.pubkeys: dict[int, bytes] = {}
        self._pubkey_raw: dict[int, bytes] = {}
        self.rated: dict[int, tuple] = {}
        self.duplicates: list[int] = []
        self.V_res: np.ndarray | None = None
        self.lists: tuple | None = None
        self._members: list[set[int]] = []
        self.t = 0
        self._it = 0
        self._expect: tuple[str, ...] = ("PubKey", "RatedItems") if cfg.mode == PARTTEXT else ("PubKey",)
        self._reset_round()

    def _reset_round(self):
        self._commits: dict[tuple[int, int], bytes] = {}
        self._masked: dict[int, dict[int, np.ndarray]] = {}
        self._decommits: dict[tuple[int, int], bytes] = {}

    def receive(self, data: bytes):
        cls, sender, it, item = peek(data)
        if cls.kind not in self._expect:
            raise PhaseError(f"server does not accept {cls.kind} now")
        if it != self._it:
            raise PhaseError(f"server got iteration {it}, expected {self._it}")
        if not 0 <= sender < self.cfg.n:
            raise PhaseError(f"message from unknown user {sender}")
        msg = cls.from_parts(sender, it, item, data[HEADER_LEN:], self.fmt)
        getattr(self, "_on_" + cls.kind)(msg, data, item)

    def _on_PubKey(self, msg, data, item):
        if msg.user in self.pubkeys:
            self.duplicates.append(msg.user)
            raise ParticipantMismatch(f"user {msg.user} registered twice")
        self.pubkeys[msg.user] = msg.mpk
        self._pubkey_raw[msg.user] = data

    def _on_RatedItems(self, msg, data, item):
        if msg.user in self.rated:
            raise ParticipantMismatch(f"user {msg.user} sent its rated items twice")
        ids = list(msg.items)
        _check_ids(ids, self.cfg.m, "rated items")
        self.rated[msg.user] = tuple(ids)

    def _check_participant(self, j: int, k: int):
        if not 0 <= k < self.cfg.m or j not in self._members[k]:
            raise PhaseError(f"user {j} does not take part in item {k}")

    def _on_CommitMsg(self, msg, data, item):
        self._check_participant(msg.user, item)
        if (item, msg.user) in self._commits:
            raise ParticipantMismatch(f"duplicate commitment from {msg.user} for item {item}")
        self._commits[(item, msg.user)] = data

    def _on_MaskedMsg(self, msg, data, item):
        self._check_participant(msg.user, item)
        per_item = self._masked.setdefault(item, {})
        if msg.user in per_item:
            raise ParticipantMismatch(f"duplicate masked vector from {msg.user} for item {item}")
        per_item[msg.user] = msg.sigma

    def _on_DecommitMsg(self, msg, data, item):
        self._check_participant(msg.user, item)
        if (item, msg.user) in self._decommits:
            raise ParticipantMismatch(f"duplicate decommitment from {msg.user} for item {item}")
        self._decommits[(item, msg.user)] = data

    # phase 0

    def relay_pubkeys(self) -> list:
        if self.duplicates:
            raise ParticipantMismatch(f"duplicate registrations for users {sorted(set(self.duplicates))}")
        missing = [i for i in range(self.cfg.n) if i not in self.pubkeys]
        if self.cfg.mode == PARTTEXT:
            missing += [i for i in range(self.cfg.n) if i not in self.rated and i not in missing]
        if missing:
            raise ParticipantMismatch(f"no registration from users {sorted(missing)}")
        everyone = range(self.cfg.n)
        self._expect = ()
        return [([j for j in everyone if j != i], self._pubkey_raw[i]) for i in everyone]

    def broadcast_items(self, V0) -> list:
        V0 = np.asarray(V0, dtype=np.float64)
        if V0.shape != (self.cfg.m, self.cfg.hyper.d):
            raise ValueError(f"initial item matrix of shape {V0.shape}")
        self.V_res = np.stack([encode_vec(row, self.cfg.fixed).values for row in V0])
        return [(None, ItemMatrixBroadcast(0, self.V_res).to_bytes(self.fmt))]

    # phase 1

    def begin_iteration(self, t: int) -> list:
        if self.V_res is None:
            raise PhaseError("server is not initialized")
        if t != self.t + 1:
            raise PhaseError(f"server at iteration {self.t} asked to run {t}")
        self._it = t
        self._reset_round()
        n, m = self.cfg.n, self.cfg.m
        if self.cfg.mode == PARTTEXT:
            raters = [[] for _ in range(m)]
            for i in range(n):
                for k in self.rated[i]:
                    raters[k].append(i)
            self.lists = tuple(tuple(r) for r in raters)
            out = [(None, ParticipantLists(t, self.lists).to_bytes(self.fmt))]
        else:
            self.lists = (tuple(range(n)),) * m
            out = []
        self._members = [set(s) for s in self.lists]
        self._expect = ("CommitMsg",)
        return out

    # phase 2

    def _barrier(self, got, what: str):
        for k, s in enumerate(self.lists):
            for j in s:
                if (k, j) not in got:
                    raise ParticipantMismatch(f"item {k}: missing {what} from user {j}")

    def relay_commitments(self) -> list:
        self._barrier(self._commits, "commitment")
        self._expect = ("MaskedMsg",)
        return [([i for i in self.lists[k] if i != j], data) for (k, j), data in sorted(self._commits.items())]

    def aggregate(self) -> list:
        out = []
        t = self._it
        for k, s in enumerate(self.lists):
            if not s:
                continue
            got = self._masked.get(k, {})
            masked = [MaskedVec(k, t, j, FixedVec._trusted(vec, self.cfg.fixed)) for j, vec in sorted(got.items())]
            if not masked:
                raise ParticipantMismatch(f"item {k}: no masked vectors")
            agg = aggregate(masked, s)
            self.V_res[k] = agg.values
            out.append((None, AggregateBroadcast(k, t, agg.values).to_bytes(self.fmt)))
        self._expect = ("DecommitMsg",)
        return out

    # phase 3

    def relay_decommitments(self) -> list:
        self._barrier(self._decommits, "decommitment")
        self._expect = ()
        self.t = self._it
        return [([i for i in self.lists[k] if i != j], data) for (k, j), data in sorted(self._decommits.items())]

    @property
    def V(self) -> np.ndarray:
        return decode_residues(self.V_res, self.cfg.fixed)

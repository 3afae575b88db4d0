"""Drive user and server actors through the protocol over a :class:`Bus`.

Every step call is timed at the actor boundary, so timings cover compute
only; parsing on receipt and bus bookkeeping are excluded.  Labels are
``(phase, step)``: phase 0 is setup (0 key exchange, 1 key agreement,
2 profile initialization), phase 1 the local update, phase 2 secure
aggregation (0 commit, 1 mask, 2 aggregate) and phase 3 verification
(0 decommit, 1 commitment check, 2 aggregate check).
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

import numpy as np

from ..crypto.homhash import precompute_fixed_base, setup_group
from ..errors import InvalidPublicKey, ProtocolError, VerificationFailure
from ..mf_core import RatingMatrix
from ..transport_sim import Bus, TranscriptEntry
from .actors import ProtocolConfig, ServerActor, UserActor
from .adversary import AdversaryMode
from .messages import SERVER, Abort

_REJECTABLE = (ProtocolError, InvalidPublicKey)


@dataclass(frozen=True)
class TimingRecord:
    iteration: int
    phase: int
    step: int
    actor: int  # user id, or SERVER
    seconds: float


@dataclass(frozen=True)
class Rejection:
    iteration: int
    recipient: int
    error: str
    reason: str


@dataclass
class Session:
    cfg: ProtocolConfig
    users: list
    server: ServerActor
    bus: Bus
    U0: np.ndarray
    V0: np.ndarray
    timings: list = field(default_factory=list)
    rejections: list = field(default_factory=list)
    t: int = 0
    initialized: bool = False

    @property
    def U(self) -> np.ndarray:
        return np.stack([u.u for u in self.users])

    @property
    def V(self) -> np.ndarray:
        """The item matrix as held by user 0 (every honest user holds the same one)."""
        return self.users[0].V.copy()


def user_rng(seed: int, uid: int) -> random.Random:
    # reproducible simulation randomness, not a CSPRNG
    return random.Random(f"{seed}/user/{uid}")


def create_session(
    cfg: ProtocolConfig,
    train: RatingMatrix,
    U0,
    V0,
    seed: int = 0,
    adversary: AdversaryMode | None = None,
    delivery: str = "fifo",
    record: bool = False,
) -> Session:
    if (train.n, train.m) != (cfg.n, cfg.m):
        raise ValueError(f"ratings are {train.n} x {train.m}, config says {cfg.n} x {cfg.m}")
    group = setup_group(cfg.hyper.d, cfg.group_seed)
    table = precompute_fixed_base(group, cfg.window_bits, cfg.fixed.magnitude_bits)
    bus = Bus(policy=delivery, seed=seed, record=record, fmt=cfg.fmt)
    users = [
        UserActor(i, cfg, *train.user_ratings(i), rng=user_rng(seed, i), group=group, table=table)
        for i in range(cfg.n)
    ]
    for i in range(cfg.n):
        bus.register(i)
    bus.register(SERVER)
    bus.install_tamper(adversary)
    return Session(cfg, users, ServerActor(cfg), bus, np.asarray(U0, float), np.asarray(V0, float))


def _send(session: Session, sender: int, out):
    for to, data in out:
        session.bus.send(sender, to, data)


def _abort(session: Session, actor: int, exc: BaseException):
    reason = f"{type(exc).__name__}: {exc}"
    to = SERVER if actor != SERVER else None
    session.bus.send(actor, to, Abort(actor, session.t + (0 if not session.initialized else 1), reason)
                     .to_bytes(session.cfg.fmt))
    session.bus.deliver_all()


def _run(session: Session, actor, actor_id: int, iteration: int, phase: int, step: int, fn, *args):
    start = time.perf_counter()
    try:
        out = fn(*args)
    except VerificationFailure:
        raise
    except (ProtocolError, InvalidPublicKey, OverflowError) as exc:
        _abort(session, actor_id, exc)
        raise
    finally:
        session.timings.append(TimingRecord(iteration, phase, step, actor_id, time.perf_counter() - start))
    _send(session, actor_id, out)


def _deliver(session: Session, iteration: int):
    for recipient, data in session.bus.deliver_all():
        target = session.server if recipient == SERVER else session.users[recipient]
        try:
            target.receive(data)
        except _REJECTABLE as exc:
            session.rejections.append(Rejection(iteration, recipient, type(exc).__name__, str(exc)))


def _label(session: Session, iteration: int, phase: int, step: int):
    session.bus.set_step(iteration, phase, step)


def run_initialization(session: Session) -> Session:
    """Key exchange, pairwise key agreement, and initial profiles."""
    if session.initialized:
        raise ProtocolError("session already initialized")
    users, server = session.users, session.server
    _label(session, 0, 0, 0)
    for u in users:
        _run(session, u, u.uid, 0, 0, 0, u.start)
    _deliver(session, 0)
    _run(session, server, SERVER, 0, 0, 0, server.relay_pubkeys)
    _deliver(session, 0)
    _label(session, 0, 0, 1)
    for u in users:
        _run(session, u, u.uid, 0, 0, 1, u.agree_keys)
    _label(session, 0, 0, 2)
    _run(session, server, SERVER, 0, 0, 2, server.broadcast_items, session.V0)
    for u in users:
        _run(session, u, u.uid, 0, 0, 2, u.init_profile, session.U0[u.uid])
    _deliver(session, 0)
    for u in users:
        if u.V_res is None:
            exc = ProtocolError(f"user {u.uid} never received the initial item matrix")
            _abort(session, u.uid, exc)
            raise exc
    session.initialized = True
    return session


def _verification_step(session: Session, t: int, step: int, fn_name: str, users) -> tuple[list, dict]:
    passed, failed = [], {}
    for u in users:
        try:
            _run(session, u, u.uid, t, 3, step, getattr(u, fn_name))
            passed.append(u)
        except VerificationFailure as vf:
            failed[u.uid] = vf
    return passed, failed


def run_iteration(session: Session, t: int | None = None) -> Session:
    """One full round; raises VerificationFailure if any honest user outputs abort."""
    if not session.initialized:
        raise ProtocolError("run_initialization first")
    t = session.t + 1 if t is None else t
    if t != session.t + 1:
        raise ProtocolError(f"iteration {t} requested after {session.t}")
    users, server = session.users, session.server

    _label(session, t, 1, 0)
    _run(session, server, SERVER, t, 1, 0, server.begin_iteration, t)
    for u in users:
        u.begin_iteration(t)
    _deliver(session, t)
    for u in users:
        _run(session, u, u.uid, t, 1, 0, u.user_update)

    _label(session, t, 2, 0)
    for u in users:
        _run(session, u, u.uid, t, 2, 0, u.make_commitments)
    _deliver(session, t)
    _run(session, server, SERVER, t, 2, 0, server.relay_commitments)
    _deliver(session, t)

    _label(session, t, 2, 1)
    for u in users:
        _run(session, u, u.uid, t, 2, 1, u.mask_inputs)
    _deliver(session, t)

    _label(session, t, 2, 2)
    _run(session, server, SERVER, t, 2, 2, server.aggregate)
    _deliver(session, t)

    _label(session, t, 3, 0)
    for u in users:
        _run(session, u, u.uid, t, 3, 0, u.decommit)
    _deliver(session, t)
    _run(session, server, SERVER, t, 3, 0, server.relay_decommitments)
    _deliver(session, t)

    passed, failed = _verification_step(session, t, 1, "verify_commitments", users)
    passed, failed2 = _verification_step(session, t, 2, "verify_aggregates", passed)
    failed.update(failed2)
    if failed:
        first = failed[min(failed)]
        vf = VerificationFailure(first.check, first.item, t, first.user)
        vf.failures = dict(sorted(failed.items()))
        raise vf
    session.t = t
    return session


def transcript(session: Session) -> list[TranscriptEntry]:
    """Every delivered message in send order, with sizes (and bytes if recorded)."""
    return list(session.bus.transcript)


def comm_table(session: Session) -> dict[tuple[int, int, str], int]:
    """Total bytes per (phase, step, direction)."""
    return dict(sorted(session.bus.counters.items()))

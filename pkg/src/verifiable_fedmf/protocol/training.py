"""Full training runs in plaintext or secure mode, with RMSE and timing traces."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidPublicKey, ProtocolError, SumBoundViolation, VerificationFailure
from ..fixedpoint import FixedParams, check_sum_bound
from ..mf_core import HyperParams, RatingMatrix, init_profiles, plain_fed_round, rmse
from ..transport_sim import DOWN, UP
from .actors import FULLTEXT, PARTTEXT, PLAINTEXT, ProtocolConfig
from .adversary import AdversaryMode
from .messages import SERVER
from .runner import TimingRecord, create_session, run_initialization, run_iteration


@dataclass(frozen=True)
class TrainingConfig:
    mode: str = PARTTEXT
    hyper: HyperParams = field(default_factory=HyperParams)
    fixed: FixedParams = field(default_factory=FixedParams)
    seed: int = 0
    adversary: AdversaryMode | None = None
    delivery: str = "fifo"
    window_bits: int = 11
    value_bound: float = 2.0
    record: bool = False

    def __post_init__(self):
        if self.mode not in (PLAINTEXT, PARTTEXT, FULLTEXT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.value_bound < 0:
            raise ValueError("value_bound must be non-negative")


@dataclass
class TrainedModel:
    U: np.ndarray
    V: np.ndarray
    rmse: list[float]
    rmse0: float | None
    timings: list[TimingRecord]
    iteration_seconds: list[float]
    comm: dict
    fixed: FixedParams
    failure: dict | None = None
    notes: list[str] = field(default_factory=list)
    session: object = field(default=None, repr=False)

    @property
    def iterations_completed(self) -> int:
        return len(self.rmse)


def max_participants(train: RatingMatrix, mode: str) -> int:
    if mode == FULLTEXT:
        return train.n
    return max((train.n_k(k) for k in range(train.m)), default=0)


def fit_fixed_params(fixed: FixedParams, value_bound: float, n_max: int) -> tuple[FixedParams, list[str]]:
    """Shrink alpha by powers of ten until ``check_sum_bound`` passes."""
    notes = []
    alpha = fixed.alpha
    while True:
        try:
            check_sum_bound(replace(fixed, alpha=alpha), value_bound, max(n_max, 1))
            break
        except SumBoundViolation:
            if alpha < 10:
                raise
            alpha //= 10
    if alpha != fixed.alpha:
        notes.append(f"alpha reduced from {fixed.alpha} to {alpha} so that {n_max} participants fit below B/2")
    return replace(fixed, alpha=alpha, max_participants=max(n_max, 1)), notes


def _safe_rmse(U, V, test):
    return rmse(U, V, test) if test is not None and test.M else float("nan")


def run_training(train: RatingMatrix, test: RatingMatrix | None, cfg: TrainingConfig, on_iteration=None) -> TrainedModel:
    """Train for ``cfg.hyper.iterations`` rounds; a failed round halts the run and is reported."""
    h = cfg.hyper
    U, V = init_profiles(train.n, train.m, h.d, np.random.default_rng(cfg.seed))
    rmse0 = _safe_rmse(U, V, test)
    fixed, notes = fit_fixed_params(cfg.fixed, cfg.value_bound, max_participants(train, cfg.mode))
    model = TrainedModel(U, V, [], rmse0, [], [], {}, fixed, notes=notes)

    if h.iterations == 0:
        return model
    if cfg.mode == PLAINTEXT:
        for t in range(1, h.iterations + 1):
            start = time.perf_counter()
            U, V = plain_fed_round(U, V, train, h)
            elapsed = time.perf_counter() - start
            model.timings.append(TimingRecord(t, 1, 0, SERVER, elapsed))
            model.iteration_seconds.append(elapsed)
            model.rmse.append(_safe_rmse(U, V, test))
            if on_iteration:
                on_iteration(t, model)
        model.U, model.V = U, V
        return model

    pcfg = ProtocolConfig(train.n, train.m, cfg.mode, h, fixed, window_bits=cfg.window_bits)
    session = create_session(pcfg, train, U, V, seed=cfg.seed, adversary=cfg.adversary,
                             delivery=cfg.delivery, record=cfg.record)
    model.session = session
    model.timings = session.timings
    t = 0
    try:
        run_initialization(session)
        for t in range(1, h.iterations + 1):
            start = time.perf_counter()
            run_iteration(session, t)
            model.iteration_seconds.append(time.perf_counter() - start)
            model.rmse.append(_safe_rmse(session.U, session.V, test))
            if on_iteration:
                on_iteration(t, model)
    except VerificationFailure as vf:
        model.failure = {
            "kind": "verification",
            "iteration": vf.iteration,
            "item": vf.item,
            "check": vf.check,
            "users": sorted(vf.failures) or [vf.user],
            "checks": {str(u): [f.check, f.item] for u, f in vf.failures.items()},
        }
    except (ProtocolError, InvalidPublicKey, OverflowError) as exc:
        model.failure = {"kind": "abort", "iteration": t, "error": type(exc).__name__, "reason": str(exc)}
    model.U, model.V = session.U, session.V
    model.comm = comm_summary(session)
    return model


def comm_summary(session) -> dict:
    """Bytes per (phase, step): totals per direction plus mean/max per user."""
    n = session.cfg.n
    iters = max(session.t, 1)
    out = {}
    for (phase, step, direction), total in sorted(session.bus.counters.items()):
        per_user = [0] * n
        for (it, ph, st, dr, actor), b in session.bus.per_actor.items():
            if (ph, st, dr) == (phase, step, direction) and actor != SERVER:
                per_user[actor] += b
        scale = iters if phase > 0 else 1
        out[(phase, step, direction)] = {
            "total_bytes": total,
            "per_user_mean": sum(per_user) / n / scale,
            "per_user_max": max(per_user) / scale,
        }
    return out


def upload_bytes_per_user(session, iteration: int) -> list[int]:
    """Bytes each user sent during ``iteration``."""
    per_user = [0] * session.cfg.n
    for (it, ph, st, dr, actor), b in session.bus.per_actor.items():
        if it == iteration and dr == UP and actor != SERVER:
            per_user[actor] += b
    return per_user


def download_bytes_per_user(session, iteration: int) -> list[int]:
    per_user = [0] * session.cfg.n
    for (it, ph, st, dr, actor), b in session.bus.per_actor.items():
        if it == iteration and dr == DOWN and actor != SERVER:
            per_user[actor] += b
    return per_user


def step_times(timings, iteration: int | None = None) -> dict[tuple[int, int], dict]:
    """Mean per-user and total server seconds per (phase, step)."""
    users: dict[tuple[int, int], list[float]] = {}
    server: dict[tuple[int, int], float] = {}
    per_user_sum: dict[tuple[int, int], dict[int, float]] = {}
    for r in timings:
        if iteration is not None and r.iteration != iteration:
            continue
        key = (r.phase, r.step)
        if r.actor == SERVER:
            server[key] = server.get(key, 0.0) + r.seconds
        else:
            per_user_sum.setdefault(key, {})
            per_user_sum[key][r.actor] = per_user_sum[key].get(r.actor, 0.0) + r.seconds
    for key, d in per_user_sum.items():
        users[key] = list(d.values())
    out = {}
    for key in sorted(set(users) | set(server)):
        u = users.get(key, [])
        out[key] = {"user_mean": float(np.mean(u)) if u else 0.0, "server": server.get(key, 0.0)}
    return out


def compute_seconds(timings, iteration: int) -> float:
    """Per-user mean compute plus server compute for one iteration."""
    return sum(v["user_mean"] + v["server"] for v in step_times(timings, iteration).values())

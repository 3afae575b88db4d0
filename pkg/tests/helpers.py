import numpy as np

from verifiable_fedmf.fixedpoint import FixedParams
from verifiable_fedmf.mf_core import HyperParams, RatingMatrix, init_profiles, plain_fed_round
from verifiable_fedmf.protocol import (
    PARTTEXT,
    ProtocolConfig,
    create_session,
    run_initialization,
    run_iteration,
)


def random_ratings(n, m, density=0.6, seed=0, every_item=True):
    """Random half-star ratings; with ``every_item`` each item gets at least one rater."""
    rng = np.random.default_rng(seed)
    mask = rng.random((n, m)) < density
    if every_item:
        for k in range(m):
            if not mask[:, k].any():
                mask[rng.integers(n), k] = True
    users, items = np.nonzero(mask)
    ratings = rng.integers(1, 11, size=len(users)) / 2
    return RatingMatrix(n, m, users, items, ratings)


def dense_ratings(n, m, seed=0):
    return random_ratings(n, m, density=1.0, seed=seed)


def plaintext_run(R, hyper, seed=0, iterations=None):
    U, V = init_profiles(R.n, R.m, hyper.d, np.random.default_rng(seed))
    for _ in range(hyper.iterations if iterations is None else iterations):
        U, V = plain_fed_round(U, V, R, hyper)
    return U, V


def secure_session(R, hyper, mode=PARTTEXT, seed=0, adversary=None, delivery="fifo", record=False,
                   fixed=None, window_bits=6, profile_seed=None):
    fixed = fixed or FixedParams(max_participants=max(R.n, 1))
    cfg = ProtocolConfig(R.n, R.m, mode, hyper, fixed, window_bits=window_bits)
    U, V = init_profiles(R.n, R.m, hyper.d, np.random.default_rng(seed if profile_seed is None else profile_seed))
    session = create_session(cfg, R, U, V, seed=seed, adversary=adversary, delivery=delivery, record=record)
    run_initialization(session)
    return session


def secure_run(R, hyper, mode=PARTTEXT, seed=0, iterations=None, **kw):
    session = secure_session(R, hyper, mode=mode, seed=seed, **kw)
    for _ in range(hyper.iterations if iterations is None else iterations):
        run_iteration(session)
    return session


def small_hyper(d=2, iterations=1, gamma=0.01):
    return HyperParams(d=d, gamma=gamma, lam=0.01, mu=0.01, iterations=iterations)

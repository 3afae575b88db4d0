"""MovieLens-format rating files: loading, subsetting, splitting, participant lists.

Also ships a generator for synthetic files in the same format, shaped like
the small MovieLens release (610 users, about 9.7k movies, about 100k
half-star ratings, long-tailed item popularity) for when the real file is
not available.
"""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mf_core import RatingMatrix

HEADER = ["userId", "movieId", "rating", "timestamp"]
ENV_RATINGS = "MOVIELENS_RATINGS"


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptySelection(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    path: str | os.PathLike
    max_users: int = 610
    max_items: int = 9712
    item_selection: str = "top-rated"
    test_fraction: float = 0.2
    split_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must lie in [0, 1)")
        if self.max_users < 1 or self.max_items < 1:
            raise ValueError("max_users and max_items must be >= 1")
        if self.item_selection != "top-rated":
            raise ValueError(f"unsupported item selection {self.item_selection!r}")


def read_rows(path) -> list[tuple[int, int, float]]:
    """Parse (userId, movieId, rating) rows; the header line is mandatory."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != HEADER:
            raise ParseError(1, f"expected header {','.join(HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(line, f"expected 4 fields, got {len(row)}")
            try:
                user, movie, rating = int(row[0]), int(row[1]), float(row[2])
                int(row[3])
            except ValueError as exc:
                raise ParseError(line, str(exc)) from None
            if not math.isfinite(rating):
                raise ParseError(line, "rating is not finite")
            rows.append((user, movie, rating))
    return rows


def select(rows, max_users: int, max_items: int) -> RatingMatrix:
    """Keep the most-rated items, then the most active users among them; re-index densely.

    Ties break toward the smaller original id; dense ids follow original id order.
    """
    if not rows:
        raise EmptySelection("no ratings to select from")
    seen = {}
    for u, k, r in rows:
        if (u, k) in seen:
            raise ValueError(f"user {u} rated movie {k} twice")
        seen[(u, k)] = r
    item_counts = Counter(k for _, k, _ in rows)
    items = sorted(sorted(item_counts), key=lambda k: -item_counts[k])[:max_items]
    item_set = set(items)
    kept = [(u, k, r) for u, k, r in rows if k in item_set]
    user_counts = Counter(u for u, _, _ in kept)
    users = sorted(sorted(user_counts), key=lambda u: -user_counts[u])[:max_users]
    user_set = set(users)
    kept = [(u, k, r) for u, k, r in kept if u in user_set]
    if not kept:
        raise EmptySelection("selection contains no ratings")
    user_ids = sorted(user_set)
    item_ids = sorted({k for _, k, _ in kept})
    uidx = {u: i for i, u in enumerate(user_ids)}
    kidx = {k: i for i, k in enumerate(item_ids)}
    return RatingMatrix(
        len(user_ids),
        len(item_ids),
        np.array([uidx[u] for u, _, _ in kept], dtype=np.int64),
        np.array([kidx[k] for _, k, _ in kept], dtype=np.int64),
        np.array([r for _, _, r in kept], dtype=np.float64),
        user_ids=np.array(user_ids, dtype=np.int64),
        item_ids=np.array(item_ids, dtype=np.int64),
    )


def load_ratings(cfg: DatasetConfig) -> RatingMatrix:
    return select(read_rows(cfg.path), cfg.max_users, cfg.max_items)


def split(R: RatingMatrix, cfg: DatasetConfig) -> tuple[RatingMatrix, RatingMatrix]:
    """Per-user random hold-out; users with two or more ratings keep at least one for training."""
    rng = np.random.default_rng(cfg.split_seed)
    is_test = np.zeros(R.M, dtype=bool)
    bounds = np.searchsorted(R.users, np.arange(R.n + 1))
    for i in range(R.n):
        a, b = bounds[i], bounds[i + 1]
        c = b - a
        if c < 2:
            continue
        n_test = min(int(round(cfg.test_fraction * c)), c - 1)
        if n_test:
            is_test[a + rng.choice(c, size=n_test, replace=False)] = True
    return R.subset(~is_test), R.subset(is_test)


def participant_lists(R: RatingMatrix, mode: str, n: int | None = None) -> dict[int, tuple[int, ...]]:
    n = R.n if n is None else n
    if mode == "fulltext":
        everyone = tuple(range(n))
        return {k: everyone for k in range(R.m)}
    if mode == "parttext":
        return {k: R.raters(k) for k in range(R.m)}
    raise ValueError(f"unknown mode {mode!r}")


def synthesize_movielens(
    path,
    n_users: int = 610,
    n_items: int = 9712,
    mean_activity: float = 165.0,
    min_activity: int = 20,
    popularity_exponent: float = 1.0,
    popularity_offset: float = 60.0,
    rank: int = 5,
    seed: int = 0,
) -> Path:
    """Write a synthetic ratings file in MovieLens CSV format.

    Item popularity decays like ``(rank + offset) ** -exponent``; user activity
    is log-normal with a floor of ``min_activity``.  Ratings come from a
    low-rank model with user and item offsets, rounded to half stars in
    [0.5, 5].
    """
    rng = np.random.default_rng(seed)
    pop = (np.arange(n_items) + popularity_offset) ** -popularity_exponent
    pop = pop[rng.permutation(n_items)]
    pop /= pop.sum()
    sigma = 1.0
    mu = math.log(max(mean_activity - min_activity, 1.0)) - sigma**2 / 2
    activity = np.minimum(min_activity + rng.lognormal(mu, sigma, size=n_users).astype(int), n_items)
    P = rng.normal(0, 0.45, size=(n_users, rank)) / math.sqrt(rank) * 2
    Q = rng.normal(0, 0.45, size=(n_items, rank)) / math.sqrt(rank) * 2
    bu = rng.normal(0, 0.4, size=n_users)
    bi = rng.normal(0, 0.45, size=n_items)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ts = 964982703
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for u in range(n_users):
            items = np.sort(rng.choice(n_items, size=activity[u], replace=False, p=pop))
            raw = 3.5 + bu[u] + bi[items] + Q[items] @ P[u] + rng.normal(0, 0.6, size=len(items))
            ratings = np.clip(np.round(raw * 2) / 2, 0.5, 5.0)
            for k, r in zip(items.tolist(), ratings.tolist()):
                ts += int(rng.integers(1, 5000))
                w.writerow([u + 1, k + 1, f"{r:.1f}", ts])
    return path


def default_ratings_path(cache_dir=None, seed: int = 0) -> Path:
    """The real file named by ``$MOVIELENS_RATINGS``, else a cached synthetic stand-in."""
    env = os.environ.get(ENV_RATINGS)
    if env:
        return Path(env)
    cache = Path(cache_dir) if cache_dir else Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "verifiable-fedmf"
    path = cache / f"synthetic-ratings-{seed}.csv"
    if not path.exists():
        tmp = path.with_suffix(".tmp")
        synthesize_movielens(tmp, seed=seed)
        tmp.replace(path)
    return path

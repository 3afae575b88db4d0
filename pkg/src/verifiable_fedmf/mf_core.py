"""Plaintext matrix-factorization math and the federated round it runs.

Gradients follow the per-rating form used throughout the protocol: every
rated pair contributes a residual term plus a regularization term, so a
user with ``c`` ratings is regularized ``c`` times per round and item ``k``
is regularized ``n_k`` times once the server sums its gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class HyperParams:
    d: int = 16
    gamma: float = 0.001
    lam: float = 0.01
    mu: float = 0.01
    iterations: int = 50

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("latent dimension d must be >= 1")
        if not (self.gamma > 0 and self.lam > 0 and self.mu > 0):
            raise ValueError("gamma, lambda and mu must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class RatingMatrix:
    """Sparse ratings with per-user and per-item indexes.

    ``users``, ``items`` and ``ratings`` are parallel arrays sorted by
    (user, item).  ``user_ids``/``item_ids`` optionally remember the
    identifiers of the source file after dense re-indexing.
    """

    n: int
    m: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    user_ids: np.ndarray | None = None
    item_ids: np.ndarray | None = None
    _by_user: list = field(default=None, repr=False)
    _raters: list = field(default=None, repr=False)

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        items = np.asarray(self.items, dtype=np.int64)
        ratings = np.asarray(self.ratings, dtype=np.float64)
        if not (len(users) == len(items) == len(ratings)):
            raise DimensionMismatch("users, items and ratings must be parallel arrays")
        if len(users) and (users.min() < 0 or users.max() >= self.n or items.min() < 0 or items.max() >= self.m):
            raise ValueError("rating index outside the n x m grid")
        order = np.lexsort((items, users))
        self.users, self.items, self.ratings = users[order], items[order], ratings[order]
        keys = self.users * self.m + self.items
        if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate (user, item) entry")
        bounds = np.searchsorted(self.users, np.arange(self.n + 1))
        self._by_user = [(self.items[a:b], self.ratings[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
        raters = [[] for _ in range(self.m)]
        for i, k in zip(self.users.tolist(), self.items.tolist()):
            raters[k].append(i)
        self._raters = [tuple(r) for r in raters]

    @classmethod
    def from_triples(cls, n: int, m: int, triples: Iterable[tuple[int, int, float]], **kw) -> "RatingMatrix":
        rows = list(triples)
        if not rows:
            return cls(n, m, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), **kw)
        u, k, r = zip(*rows)
        return cls(n, m, np.array(u), np.array(k), np.array(r, dtype=np.float64), **kw)

    @property
    def M(self) -> int:
        return len(self.ratings)

    def __len__(self) -> int:
        return self.M

    def user_ratings(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(items, ratings) rated by user ``i``, items ascending."""
        return self._by_user[i]

    def raters(self, k: int) -> tuple[int, ...]:
        return self._raters[k]

    def n_k(self, k: int) -> int:
        return len(self._raters[k])

    def entries(self) -> dict[tuple[int, int], float]:
        return {(i, k): r for i, k, r in zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist())}

    def density(self) -> float:
        return self.M / (self.n * self.m) if self.n and self.m else 0.0

    def subset(self, mask: np.ndarray) -> "RatingMatrix":
        return RatingMatrix(self.n, self.m, self.users[mask], self.items[mask], self.ratings[mask],
                            user_ids=self.user_ids, item_ids=self.item_ids)


def _check_same_length(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"dimension {a.shape[-1]} vs {b.shape[-1]}")


def init_profiles(n: int, m: int, d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw U (n x d) and V (m x d) i.i.d. uniform on [0, 1/sqrt(d))."""
    scale = 1.0 / math.sqrt(d)
    U = rng.uniform(0.0, scale, size=(n, d))
    V = rng.uniform(0.0, scale, size=(m, d))
    return U, V


def predict(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_same_length(u, v)
    return float(u @ v)


def local_gradients(u, V, items, ratings, h: HyperParams) -> tuple[np.ndarray, np.ndarray]:
    """(G_U, G_items) for one user from its own ratings only.

    ``G_items[j]`` is the item gradient for ``items[j]``.
    """
    u = np.asarray(u, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    _check_same_length(u, V)
    if len(items) == 0:
        return np.zeros_like(u), np.zeros((0, len(u)))
    Vk = V[items]
    residual = np.asarray(ratings, dtype=np.float64) - Vk @ u
    G_u = h.gamma * (-2.0 * (residual @ Vk) + 2.0 * h.lam * len(items) * u)
    G_items = h.gamma * (-2.0 * np.outer(residual, u) + 2.0 * h.mu * Vk)
    return G_u, G_items


def user_gradient(i: int, u, V, R: RatingMatrix, h: HyperParams) -> np.ndarray:
    items, ratings = R.user_ratings(i)
    return local_gradients(u, V, items, ratings, h)[0]


def item_gradient(u, v, r: float, h: HyperParams) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_same_length(u, v)
    return h.gamma * (-2.0 * u * (r - u @ v) + 2.0 * h.mu * v)


def item_gradients_for_user(i: int, u, V, R: RatingMatrix, h: HyperParams) -> dict[int, np.ndarray]:
    """G_{i,V_k} for every item ``k`` user ``i`` rated, computed in one pass."""
    items, ratings = R.user_ratings(i)
    return dict(zip(items.tolist(), local_gradients(u, V, items, ratings, h)[1]))


def sgd_step(x, g) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape != g.shape:
        raise DimensionMismatch(f"shape {x.shape} vs {g.shape}")
    return x - g


class EmptyTestSet(ValueError):
    pass


def rmse(U, V, test: RatingMatrix | Mapping) -> float:
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if isinstance(test, RatingMatrix):
        users, items, ratings = test.users, test.items, test.ratings
    else:
        keys = list(test)
        users = np.array([i for i, _ in keys], dtype=np.int64)
        items = np.array([k for _, k in keys], dtype=np.int64)
        ratings = np.array([test[key] for key in keys], dtype=np.float64)
    if len(ratings) == 0:
        raise EmptyTestSet("RMSE over an empty test set")
    _check_same_length(U, V)
    pred = np.einsum("ij,ij->i", U[users], V[items])
    return float(np.sqrt(np.mean((ratings - pred) ** 2)))


def plain_fed_round(U, V, R: RatingMatrix, h: HyperParams) -> tuple[np.ndarray, np.ndarray]:
    """One iteration of federated MF in the clear.

    Every user gradient and item gradient is taken at (U, V) from the start
    of the round; items nobody rated keep their profile.
    """
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.shape[0] != R.n or V.shape[0] != R.m:
        raise DimensionMismatch("profile matrices do not match the rating matrix")
    _check_same_length(U, V)
    U_next = U.copy()
    G_V = np.zeros_like(V)
    for i in range(R.n):
        U_next[i] = sgd_step(U[i], user_gradient(i, U[i], V, R, h))
        for k, g in item_gradients_for_user(i, U[i], V, R, h).items():
            G_V[k] += g
    return U_next, sgd_step(V, G_V)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_ratings
from verifiable_fedmf.errors import DimensionMismatch
from verifiable_fedmf.mf_core import (
    EmptyTestSet,
    HyperParams,
    RatingMatrix,
    init_profiles,
    item_gradient,
    item_gradients_for_user,
    plain_fed_round,
    predict,
    rmse,
    sgd_step,
    user_gradient,
)


def loss(U, V, R, lam, mu):
    # every rated pair carries its own regularization terms
    total = 0.0
    for (i, k), r in R.entries().items():
        total += (r - U[i] @ V[k]) ** 2 + lam * U[i] @ U[i] + mu * V[k] @ V[k]
    return total


def reference_round(U, V, R, h):
    """Double loop over the dense grid, written without any helper from mf_core."""
    n, d = U.shape
    m = V.shape[0]
    entries = R.entries()
    U1 = U.copy()
    GV = np.zeros_like(V)
    for i in range(n):
        gu = np.zeros(d)
        for k in range(m):
            if (i, k) not in entries:
                continue
            e = entries[(i, k)] - sum(U[i, l] * V[k, l] for l in range(d))
            for l in range(d):
                gu[l] += h.gamma * (-2 * e * V[k, l] + 2 * h.lam * U[i, l])
                GV[k, l] += h.gamma * (-2 * e * U[i, l] + 2 * h.mu * V[k, l])
        U1[i] = U[i] - gu
    return U1, V - GV


def test_predict_examples():
    assert predict([1, 0], [0, 1]) == 0
    assert predict([1, 2], [3, 4]) == 11
    assert predict([0.5] * 6, [0.5] * 6) == 0.25 * 6
    with pytest.raises(DimensionMismatch):
        predict([1, 2], [1, 2, 3])


def test_single_rating_gradients():
    h = HyperParams(d=1, gamma=0.1, lam=0.01, mu=0.01)
    R = RatingMatrix.from_triples(1, 1, [(0, 0, 5.0)])
    g_u = user_gradient(0, np.array([1.0]), np.array([[2.0]]), R, h)
    g_v = item_gradient(np.array([1.0]), np.array([2.0]), 5.0, h)
    assert g_u == pytest.approx([-1.198], abs=1e-12)
    assert g_v == pytest.approx([-0.596], abs=1e-12)


def test_gradients_vanish_at_exact_fit_without_regularization():
    h = HyperParams(d=2, gamma=0.1, lam=1e-300, mu=1e-300)
    u = np.array([0.5, 1.0])
    V = np.array([[1.0, 2.0], [3.0, -1.0]])
    R = RatingMatrix.from_triples(1, 2, [(0, 0, 2.5), (0, 1, 0.5)])
    assert np.allclose(user_gradient(0, u, V, R, h), 0)
    assert np.allclose(item_gradient(u, V[0], 2.5, h), 0)


def test_user_without_ratings_gets_zero_gradient():
    R = RatingMatrix.from_triples(2, 1, [(1, 0, 3.0)])
    h = HyperParams(d=3)
    assert np.array_equal(user_gradient(0, np.ones(3), np.ones((1, 3)), R, h), np.zeros(3))


def test_sgd_step_examples():
    x = np.array([1.0, 1.0])
    assert np.array_equal(sgd_step(x, np.zeros(2)), x)
    assert np.array_equal(sgd_step(x, [0.5, -0.5]), [0.5, 1.5])
    g = np.array([0.3, -7.0])
    assert np.allclose(sgd_step(sgd_step(x, g), -g), x)


def test_rmse_examples():
    assert rmse([[1.0]], [[3.0]], {(0, 0): 3.0}) == 0
    assert rmse([[1.0]], [[1.0]], {(0, 0): 3.0}) == 2
    assert rmse([[1.0], [1.0]], [[0.0]], {(0, 0): 3.0, (1, 0): 4.0}) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(EmptyTestSet):
        rmse([[1.0]], [[1.0]], {})


def test_round_with_no_ratings_is_identity():
    R = RatingMatrix.from_triples(3, 2, [])
    U, V = init_profiles(3, 2, 4, np.random.default_rng(0))
    U1, V1 = plain_fed_round(U, V, R, HyperParams(d=4))
    assert np.array_equal(U1, U) and np.array_equal(V1, V)


def test_one_user_one_item_round_composes_unit_gradients():
    h = HyperParams(d=1, gamma=0.1, lam=0.01, mu=0.01)
    R = RatingMatrix.from_triples(1, 1, [(0, 0, 5.0)])
    U1, V1 = plain_fed_round(np.array([[1.0]]), np.array([[2.0]]), R, h)
    assert U1[0, 0] == pytest.approx(1.0 + 1.198)
    assert V1[0, 0] == pytest.approx(2.0 + 0.596)


def test_round_matches_double_loop_reference():
    R = random_ratings(3, 2, density=0.7, seed=4)
    h = HyperParams(d=2, gamma=0.05)
    U, V = init_profiles(3, 2, 2, np.random.default_rng(7))
    for _ in range(5):
        got = plain_fed_round(U, V, R, h)
        want = reference_round(U, V, R, h)
        assert np.max(np.abs(got[0] - want[0])) <= 1e-12
        assert np.max(np.abs(got[1] - want[1])) <= 1e-12
        U, V = got


def test_single_user_round_equals_centralized_gradient_step():
    R = random_ratings(1, 6, density=0.8, seed=2)
    h = HyperParams(d=3, gamma=0.02)
    U, V = init_profiles(1, 6, 3, np.random.default_rng(3))
    U1, V1 = plain_fed_round(U, V, R, h)
    # centralized batch step on the same loss, with gradients computed jointly
    items, ratings = R.user_ratings(0)
    e = ratings - V[items] @ U[0]
    gu = -2 * e @ V[items] + 2 * h.lam * len(items) * U[0]
    gV = np.zeros_like(V)
    gV[items] = -2 * np.outer(e, U[0]) + 2 * h.mu * V[items]
    assert np.array_equal(U1[0], U[0] - h.gamma * gu)
    assert np.allclose(V1, V - h.gamma * gV, rtol=0, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gradients_match_finite_differences(seed):
    R = random_ratings(3, 4, density=0.6, seed=seed)
    h = HyperParams(d=3, gamma=1.0, lam=0.05, mu=0.03)
    U, V = init_profiles(3, 4, 3, np.random.default_rng(seed))
    eps = 1e-6
    for i in range(3):
        g = user_gradient(i, U[i], V, R, h)
        for l in range(3):
            Up, Um = U.copy(), U.copy()
            Up[i, l] += eps
            Um[i, l] -= eps
            fd = (loss(Up, V, R, h.lam, h.mu) - loss(Um, V, R, h.lam, h.mu)) / (2 * eps)
            assert abs(g[l] - fd) <= 1e-5
    GV = np.zeros_like(V)
    for i in range(3):
        for k, g in item_gradients_for_user(i, U[i], V, R, h).items():
            GV[k] += g
    for k in range(4):
        for l in range(3):
            Vp, Vm = V.copy(), V.copy()
            Vp[k, l] += eps
            Vm[k, l] -= eps
            fd = (loss(U, Vp, R, h.lam, h.mu) - loss(U, Vm, R, h.lam, h.mu)) / (2 * eps)
            assert abs(GV[k, l] - fd) <= 1e-5


@given(st.permutations(list(range(6))))
def test_rmse_permutation_invariant(order):
    rng = np.random.default_rng(5)
    U, V = rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    keys = [(i, k) for i in range(3) for k in range(2)]
    test = {key: float(rng.integers(1, 6)) for key in keys}
    shuffled = {keys[j]: test[keys[j]] for j in order}
    assert rmse(U, V, shuffled) == pytest.approx(rmse(U, V, test), rel=1e-15)


def test_rating_matrix_validation():
    with pytest.raises(ValueError):
        RatingMatrix.from_triples(2, 2, [(0, 0, 1.0), (0, 0, 2.0)])
    with pytest.raises(ValueError):
        RatingMatrix.from_triples(2, 2, [(2, 0, 1.0)])
    with pytest.raises(ValueError):
        HyperParams(d=0)
    R = RatingMatrix.from_triples(3, 2, [(2, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)])
    assert R.raters(1) == (0, 2) and R.n_k(0) == 1


def test_init_profiles_range_and_determinism():
    U, V = init_profiles(4, 5, 16, np.random.default_rng(9))
    assert U.shape == (4, 16) and V.shape == (5, 16)
    assert U.min() >= 0 and V.max() < 0.25
    U2, V2 = init_profiles(4, 5, 16, np.random.default_rng(9))
    assert np.array_equal(U, U2) and np.array_equal(V, V2)

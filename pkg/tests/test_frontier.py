import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mpquad import frontier
from mpquad._linalg import NotPositiveDefiniteError, sherman_morrison_inverse, spd_inverse

from conftest import random_spd

SEEDS = st.integers(0, 2**32 - 1)
DIMS = st.integers(2, 10)


def test_gmv_identity_is_equal_weight():
    assert np.allclose(frontier.gmv_weights(np.eye(3)), [1 / 3] * 3, atol=1e-15)


def test_gmv_diagonal():
    assert np.allclose(frontier.gmv_weights(np.diag([1.0, 2.0])), [2 / 3, 1 / 3], atol=1e-15)


def test_gmv_preset_covariance_matches_explicit_2x2_inverse():
    s = np.array([[0.0018, 0.0002], [0.0002, 0.0006]])
    det = s[0, 0] * s[1, 1] - s[0, 1] ** 2
    inv = np.array([[s[1, 1], -s[0, 1]], [-s[0, 1], s[0, 0]]]) / det
    expected = inv.sum(axis=1) / inv.sum()
    assert np.allclose(frontier.gmv_weights(s), expected, atol=1e-14)
    assert np.allclose(expected, [0.2, 0.8])


def test_gmv_singular_raises():
    with pytest.raises(NotPositiveDefiniteError):
        frontier.gmv_weights(np.ones((2, 2)))


def test_q_matrix_identity():
    assert np.allclose(frontier.q_matrix(np.eye(2)), [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_q_matrix_diagonal_hand_value():
    assert np.allclose(frontier.q_matrix(np.diag([1.0, 2.0])), np.array([[1, -1], [-1, 1]]) / 3, atol=1e-15)


def test_frontier_stats_hand_values():
    st_ = frontier.frontier_stats([0.1, 0.2], np.eye(2))
    assert st_.r_gmv == pytest.approx(0.15, abs=1e-15)
    assert st_.v_gmv == pytest.approx(0.5, abs=1e-15)
    assert st_.s == pytest.approx(0.005, abs=1e-15)


def test_frontier_stats_zero_and_constant_means(rng):
    sigma = random_spd(rng, 4)
    z = frontier.frontier_stats(np.zeros(4), sigma)
    assert z.r_gmv == 0 and z.s == 0
    assert z.v_gmv == pytest.approx(1 / np.linalg.inv(sigma).sum(), rel=1e-12)
    assert frontier.frontier_stats(np.full(4, 0.3), sigma).s == pytest.approx(0, abs=1e-12)


def test_markowitz_kkt_oracle():
    # maximize 0.1 w + 0.2 (1-w) - 0.5 (w^2 + (1-w)^2): derivative -0.1 - 2w + 1 = 0
    assert np.allclose(frontier.markowitz_weights([0.1, 0.2], np.eye(2), 1.0), [0.45, 0.55], atol=1e-14)


def test_markowitz_limits(rng):
    sigma = random_spd(rng, 3)
    gmv = frontier.gmv_weights(sigma)
    assert np.allclose(frontier.markowitz_weights(np.zeros(3), sigma, 2.0), gmv, atol=1e-14)
    assert np.allclose(frontier.markowitz_weights([0.1, 0.2, 0.3], sigma, 1e12), gmv, atol=1e-10)
    with pytest.raises(ValueError):
        frontier.markowitz_weights([0.1, 0.2, 0.3], sigma, 0.0)


def test_markowitz_beats_random_feasible_portfolios(rng):
    mu = np.array([0.05, 0.08, 0.02, 0.1])
    sigma = random_spd(rng, 4, scale=0.04)
    alpha = 3.0
    obj = lambda w: w @ mu - 0.5 * alpha * np.einsum("...i,ij,...j->...", w, sigma, w)  # noqa: E731
    best = obj(frontier.markowitz_weights(mu, sigma, alpha))
    w = rng.standard_normal((1000, 4))
    w[:, -1] = 1 - w[:, :-1].sum(axis=1)
    assert np.all(obj(w) <= best)


def test_min_variance_at_target_round_trip(rng):
    mu = np.array([0.05, 0.08, 0.02])
    sigma = random_spd(rng, 3)
    w = frontier.markowitz_weights(mu, sigma, 2.0)
    assert np.allclose(frontier.min_variance_at_target(mu, sigma, w @ mu), w, atol=1e-12)


def test_tangency_hand_oracle():
    w = frontier.tangency_weights([0.05, 0.10], np.diag([0.04, 0.09]), 0.01)
    assert np.allclose(w, [0.5, 0.5], atol=1e-14)


def test_tangency_equal_weight_and_degenerate(rng):
    sigma = random_spd(rng, 4)
    mu = 0.02 + sigma @ np.ones(4)
    assert np.allclose(frontier.tangency_weights(mu, sigma, 0.02), 0.25, atol=1e-14)
    with pytest.raises(frontier.DegenerateTangencyError):
        frontier.tangency_weights([0.1, -0.1], np.eye(2), 0.0)


def test_reduce_risky_examples():
    assert frontier.reduce_risky(3.0, np.zeros(2), np.eye(2)) == pytest.approx(2.0, abs=1e-15)
    mu = [0.1, 0.2]
    assert frontier.reduce_risky(1.15, mu, np.eye(2)) == pytest.approx(0.0, abs=1e-14)


def test_reduce_riskless_k1_hand():
    assert frontier.reduce_riskless(0.2, [0.05], [[0.04]]) == pytest.approx(0.2 / 1.0625, rel=1e-14)
    assert frontier.reduce_riskless(0.3, [0.0, 0.0], np.eye(2)) == 0.3


@given(SEEDS, DIMS)
def test_sherman_morrison_property(seed, k):
    rng = np.random.default_rng(seed)
    sigma = random_spd(rng, k)
    v = rng.standard_normal(k)
    direct = np.linalg.inv(sigma + np.outer(v, v))
    assert np.allclose(sherman_morrison_inverse(spd_inverse(sigma), v), direct, atol=1e-10)


@given(SEEDS, DIMS)
def test_q_identities_property(seed, k):
    rng = np.random.default_rng(seed)
    sigma = random_spd(rng, k)
    q = frontier.q_matrix(sigma)
    assert np.abs(q @ np.ones(k)).max() < 1e-10
    assert np.abs(np.ones(k) @ q).max() < 1e-10
    assert np.abs(q @ sigma @ q - q).max() < 1e-10


@given(SEEDS, DIMS, st.floats(0.1, 50.0))
def test_reduce_risky_round_trip_property(seed, k, c):
    rng = np.random.default_rng(seed)
    mu = 0.05 * rng.standard_normal(k)
    sigma = random_spd(rng, k, scale=0.01)
    m = 1 + mu
    a = sigma + np.outer(m, m)
    a_inv = np.linalg.inv(a)
    g = a_inv.sum(axis=1)
    w_a = g / g.sum() + c * (a_inv - np.outer(g, g) / g.sum()) @ m
    w_e = frontier.gmv_weights(sigma) + frontier.reduce_risky(c, mu, sigma) * frontier.q_matrix(sigma) @ mu
    assert np.allclose(w_a, w_e, atol=1e-10)


@given(SEEDS, DIMS, st.floats(-5.0, 5.0))
def test_reduce_riskless_round_trip_property(seed, k, g):
    rng = np.random.default_rng(seed)
    m = 0.05 * rng.standard_normal(k)
    sigma = random_spd(rng, k, scale=0.01)
    lhs = g * np.linalg.solve(sigma + np.outer(m, m), m)
    rhs = frontier.reduce_riskless(g, m, sigma) * np.linalg.solve(sigma, m)
    assert np.allclose(lhs, rhs, atol=1e-10)


@given(SEEDS, DIMS, st.floats(0.01, 100.0))
def test_tangency_scale_invariance_property(seed, k, c):
    rng = np.random.default_rng(seed)
    sigma = random_spd(rng, k)
    excess = np.abs(rng.standard_normal(k)) + 0.1
    w1 = frontier.tangency_weights(excess, sigma, 0.0)
    w2 = frontier.tangency_weights(c * excess, sigma, 0.0)
    assert np.allclose(w1, w2, atol=1e-10)
    assert w1.sum() == pytest.approx(1.0, abs=1e-12)

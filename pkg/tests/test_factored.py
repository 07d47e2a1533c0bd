import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isvdchart import factored as fsvd
from isvdchart.factored import FactoredMatrix


def rel_fro(A, B):
    return np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)


def random_factored(rng, p, q, k):
    M = rng.standard_normal((p, k)) @ rng.standard_normal((k, q))
    return fsvd.from_dense(M), M


def test_empty():
    F = fsvd.empty(10, 20)
    assert (F.p, F.q, F.k) == (10, 20, 0)
    assert np.array_equal(fsvd.reconstruct(fsvd.empty(1, 1)), [[0.0]])
    assert np.array_equal(fsvd.reconstruct(fsvd.empty(3, 5)), np.zeros((3, 5)))
    assert np.array_equal(fsvd.reconstruct(fsvd.empty(2, 2)), np.zeros((2, 2)))


@pytest.mark.parametrize("p,q", [(0, 3), (3, 0), (-1, 2), (2.5, 2)])
def test_empty_rejects_bad_dims(p, q):
    with pytest.raises(ValueError):
        fsvd.empty(p, q)


def test_update_of_empty_is_outer_product():
    F = fsvd.rank_one_update(fsvd.empty(3, 4), np.array([2.0, 0, 0]),
                             np.array([0, 3.0, 0, 0]))
    assert F.k == 1
    assert F.S[0] == pytest.approx(6.0)
    assert np.allclose(np.abs(F.U[:, 0]), [1, 0, 0])
    assert np.allclose(np.abs(F.V[:, 0]), [0, 1, 0, 0])
    # sign convention: first nonzero U entry nonnegative
    assert F.U[0, 0] > 0


def test_collinear_update_grows_singular_value_not_rank():
    e = np.zeros(3)
    e[0] = 1.0
    F = FactoredMatrix(e[:, None].copy(), np.array([5.0]), e[:, None].copy())
    G = fsvd.rank_one_update(F, e, e)
    assert G.k == 1
    assert G.S[0] == pytest.approx(6.0)


def test_degenerate_absorption_in_span():
    rng = np.random.default_rng(3)
    F, _ = random_factored(rng, 8, 6, 3)
    a = F.U @ rng.standard_normal(3)
    b = F.V @ rng.standard_normal(3)
    G = fsvd.rank_one_update(F, a, b)
    assert G.k <= 3
    assert rel_fro(fsvd.reconstruct(G), fsvd.reconstruct(F) + np.outer(a, b)) < 1e-10


def test_zero_vectors_are_noop():
    rng = np.random.default_rng(0)
    F, _ = random_factored(rng, 4, 5, 2)
    assert fsvd.rank_one_update(F, np.zeros(4), rng.standard_normal(5)) is F
    assert fsvd.rank_one_update(F, rng.standard_normal(4), np.zeros(5)) is F


def test_update_argument_validation():
    F = fsvd.empty(3, 4)
    with pytest.raises(ValueError):
        fsvd.rank_one_update(F, np.ones(4), np.ones(4))
    with pytest.raises(ValueError):
        fsvd.rank_one_update(F, np.array([1.0, np.nan, 0]), np.ones(4))
    with pytest.raises(ValueError):
        fsvd.rank_one_update(F, np.ones(3), np.array([np.inf, 0, 0, 0]))


def test_update_against_dense_svd_100_cases():
    rng = np.random.default_rng(12345)
    for _ in range(100):
        p, q = rng.integers(1, 31), rng.integers(1, 41)
        k = int(rng.integers(0, min(p, q) + 1))
        F, M = random_factored(rng, p, q, k) if k else (fsvd.empty(p, q), np.zeros((p, q)))
        a, b = rng.standard_normal(p), rng.standard_normal(q)
        G = fsvd.rank_one_update(F, a, b)
        target = fsvd.reconstruct(F) + np.outer(a, b)
        oracle = np.linalg.svd(target, compute_uv=False)
        assert G.k <= F.k + 1
        assert rel_fro(fsvd.reconstruct(G), target) < 1e-10
        np.testing.assert_allclose(G.S, oracle[:G.k], rtol=1e-8, atol=1e-12 * oracle[0])
        # anything dropped is numerically zero
        assert np.all(oracle[G.k:] <= 1e-12 * oracle[0])
        assert np.all(np.diff(G.S) <= 0)


def test_update_core_invariants():
    rng = np.random.default_rng(7)
    F, _ = random_factored(rng, 9, 7, 3)
    a, b = rng.standard_normal(9), rng.standard_normal(7)
    ua, eta, vb, xi, K = fsvd.update_core(F, a, b)
    assert np.abs(F.U.T @ eta).max() < 1e-10
    assert np.abs(F.V.T @ xi).max() < 1e-10
    expected = np.zeros((4, 4))
    expected[:3, :3] = np.diag(F.S)
    expected += np.outer(np.r_[ua, np.linalg.norm(eta)], np.r_[vb, np.linalg.norm(xi)])
    np.testing.assert_array_equal(K, expected)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 12), q=st.integers(1, 12), k=st.integers(0, 6),
       seed=st.integers(0, 2**32 - 1), scale_a=st.floats(1e-3, 1e3))
def test_exactness_property(p, q, k, seed, scale_a):
    rng = np.random.default_rng(seed)
    k = min(k, p, q)
    F = random_factored(rng, p, q, k)[0] if k else fsvd.empty(p, q)
    a = scale_a * rng.standard_normal(p)
    b = rng.standard_normal(q)
    G = fsvd.rank_one_update(F, a, b)
    target = fsvd.reconstruct(F) + np.outer(a, b)
    assert rel_fro(fsvd.reconstruct(G), target) < 1e-10
    assert np.all(np.diff(G.S) <= 0)
    assert fsvd.orthogonality_drift(G) < 1e-8


def test_scale():
    U = np.eye(3)[:, :2]
    V = np.eye(4)[:, :2]
    F = FactoredMatrix(U, np.array([4.0, 2.0]), V)
    np.testing.assert_array_equal(fsvd.scale(F, 0.5).S, [2.0, 1.0])
    G = FactoredMatrix(U[:, :1], np.array([3.0]), V[:, :1])
    factor = 5 * (1 - 0.02) / 0.02
    assert factor == pytest.approx(245.0)
    assert fsvd.scale(G, factor).S[0] == pytest.approx(735.0)
    assert fsvd.scale(F, 1.0) == F
    for bad in (0.0, -1.0, np.inf, np.nan):
        with pytest.raises(ValueError):
            fsvd.scale(F, bad)


def test_truncate():
    rng = np.random.default_rng(1)
    F, _ = random_factored(rng, 10, 12, 7)
    T = fsvd.truncate(F, 5)
    assert T.k == 5
    np.testing.assert_array_equal(T.S, F.S[:5])
    np.testing.assert_array_equal(T.U, F.U[:, :5])
    small, _ = random_factored(rng, 10, 12, 2)
    assert fsvd.truncate(small, 10) is small
    full, M = random_factored(rng, 6, 8, 6)
    assert rel_fro(fsvd.reconstruct(fsvd.truncate(full, 6)), fsvd.reconstruct(full)) < 1e-12
    with pytest.raises(ValueError):
        fsvd.truncate(F, 0)


def test_reconstruct():
    F = FactoredMatrix(np.array([[1.0], [0.0]]), np.array([6.0]),
                       np.array([[0.0], [1.0], [0.0]]))
    expected = np.zeros((2, 3))
    expected[0, 1] = 6.0
    np.testing.assert_array_equal(fsvd.reconstruct(F), expected)


def test_round_trip_dense():
    rng = np.random.default_rng(2)
    M = rng.standard_normal((7, 11))
    assert rel_fro(fsvd.reconstruct(fsvd.from_dense(M)), M) < 1e-10


def test_reorthonormalize_clean_input_unchanged():
    rng = np.random.default_rng(4)
    F, _ = random_factored(rng, 8, 9, 4)
    G = fsvd.reorthonormalize(F)
    assert np.abs(G.S - F.S).max() < 1e-12 * F.S[0]
    assert np.abs(fsvd.reconstruct(G) - fsvd.reconstruct(F)).max() < 1e-12 * F.S[0]
    assert np.abs(G.U - F.U).max() < 1e-10


def test_reorthonormalize_after_long_update_chain():
    rng = np.random.default_rng(5)
    p, q = 8, 6
    F = fsvd.empty(p, q)
    dense = np.zeros((p, q))
    for _ in range(10_000):
        a, b = rng.standard_normal(p), rng.standard_normal(q)
        F = fsvd.rank_one_update(F, a, b)
        dense += np.outer(a, b)
        # keep the magnitude bounded so the dense oracle stays accurate
        F = fsvd.scale(F, 0.99)
        dense *= 0.99
    G = fsvd.reorthonormalize(F)
    assert fsvd.orthogonality_drift(G) <= 1e-10
    oracle = np.linalg.svd(fsvd.reconstruct(F), compute_uv=False)
    np.testing.assert_allclose(G.S, oracle[:G.k], rtol=1e-8)
    assert rel_fro(fsvd.reconstruct(G), fsvd.reconstruct(F)) <= 1e-8
    assert rel_fro(fsvd.reconstruct(F), dense) <= 1e-8


def test_leading_triplet():
    assert fsvd.leading_triplet(fsvd.empty(2, 2)) == (0.0, None, None)
    rng = np.random.default_rng(6)
    F, M = random_factored(rng, 5, 4, 3)
    s, u, v = fsvd.leading_triplet(F)
    assert s == pytest.approx(np.linalg.norm(M, 2))
    assert u @ M @ v == pytest.approx(s)

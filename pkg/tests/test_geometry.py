import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tppca.errors import ConvergenceError, InvalidInputError, NumericError
from tppca.geometry import cholesky_solve, frechet_mean, log_many
from tppca.manifolds import Euclidean, LandmarkManifold, Sphere

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_euclidean_inner_orthogonal():
    assert Euclidean(2).inner(np.zeros(2), [1, 0], [0, 1]) == 0


def test_inner_of_zero_vector():
    for m, p in [(Euclidean(3), np.zeros(3)), (Sphere(), np.array([0, 0, 1.0])),
                 (LandmarkManifold(2, 0.5), np.array([0, 0, 1.0, 0]))]:
        assert m.inner(p, np.zeros(m.ambient_dim), np.zeros(m.ambient_dim)) == 0


def test_lddmm_single_landmark_inner():
    m = LandmarkManifold(1, sigma=1.0, beta=1.0)
    assert m.inner(np.zeros(2), [1, 0], [1, 0]) == pytest.approx(1.0, abs=1e-14)


def test_inner_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        Euclidean(2).inner(np.zeros(2), [1, 0, 0], [0, 1])


def test_euclidean_exp_log_dist():
    e = Euclidean(2)
    np.testing.assert_array_equal(e.exp([1, 2], [0.5, -1]), [1.5, 1])
    np.testing.assert_array_equal(e.log([0, 0], [3, 4]), [3, 4])
    assert e.dist([0, 0], [3, 4]) == 5


def test_exp_zero_and_log_self():
    rng = np.random.default_rng(0)
    for m in (Euclidean(3), Sphere(), LandmarkManifold(3, 0.7)):
        p = m.random_point(rng)
        np.testing.assert_array_equal(m.exp(p, np.zeros(m.ambient_dim)), p)
        np.testing.assert_array_equal(m.log(p, p), np.zeros(m.ambient_dim))
        assert m.dist(p, p) == 0


def test_orthonormal_basis_examples():
    np.testing.assert_array_equal(Euclidean(3).orthonormal_basis(np.zeros(3)), np.eye(3))
    e = Euclidean(2, metric=np.diag([4.0, 1.0]))
    np.testing.assert_allclose(e.orthonormal_basis(np.zeros(2)), np.diag([0.5, 1.0]))


def test_indefinite_metric_is_numeric_error():
    with pytest.raises(NumericError):
        Euclidean(2, metric=np.diag([1.0, -1.0]))


@pytest.mark.parametrize("manifold", [Euclidean(4, metric=np.diag([1.0, 2.0, 3.0, 4.0])),
                                      Sphere(), LandmarkManifold(2, 0.8),
                                      LandmarkManifold(14, 0.4)])
def test_basis_is_g_orthonormal(manifold):
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = manifold.random_point(rng)
        L = manifold.orthonormal_basis(p)
        np.testing.assert_allclose(L.T @ manifold.metric(p) @ L, np.eye(manifold.dim), atol=1e-8)


@pytest.mark.parametrize("manifold", [Euclidean(3, metric=np.diag([1.0, 5.0, 2.0])),
                                      Sphere(), LandmarkManifold(3, 0.6)])
def test_metric_symmetric_positive_definite(manifold):
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = manifold.random_point(rng)
        G = manifold.metric(p)
        np.testing.assert_allclose(G, G.T, atol=1e-12)
        B = manifold.orthonormal_basis(p)
        # restricted to the tangent space the metric is positive definite
        assert np.linalg.eigvalsh(B.T @ G @ B).min() > 0


@pytest.mark.parametrize("manifold", [Euclidean(3), Sphere(), LandmarkManifold(3, 0.6)])
def test_coordinates_round_trip(manifold):
    rng = np.random.default_rng(3)
    p = manifold.random_point(rng)
    L = manifold.orthonormal_basis(p)
    v = manifold.random_tangent(p, rng)
    a = manifold.coordinates(p, v, L)
    np.testing.assert_allclose(manifold.from_coordinates(p, a, L), v, atol=1e-10)
    assert np.dot(a, a) == pytest.approx(manifold.inner(p, v, v), rel=1e-9)


def test_distance_symmetry_and_identity():
    rng = np.random.default_rng(4)
    s = Sphere()
    for _ in range(100):
        p, q = s.random_point(rng), s.random_point(rng)
        assert abs(s.dist(p, q) - s.dist(q, p)) < 1e-8
        assert s.dist(p, q) > 0


@given(arrays(float, (7, 3), elements=finite))
def test_frechet_mean_euclidean_is_arithmetic_mean(X):
    mu = frechet_mean(Euclidean(3), X)
    np.testing.assert_allclose(mu, X.mean(axis=0), atol=1e-10)


def test_frechet_mean_single_point():
    p = np.array([0.6, 0.0, 0.8])
    np.testing.assert_array_equal(frechet_mean(Sphere(), [p]), p)


def test_frechet_mean_sphere_midpoint_against_dense_search():
    s = Sphere()
    p = np.array([1.0, 0.0, 0.0])
    q = np.array([0.0, 0.6, 0.8])
    mu = frechet_mean(s, [p, q])
    # oracle: minimise the sum of squared distances along the connecting geodesic
    v = s.log(p, q)
    ts = np.linspace(0, 1, 20001)
    cost = [s.dist(s.exp(p, t * v), p) ** 2 + s.dist(s.exp(p, t * v), q) ** 2 for t in ts]
    best = s.exp(p, ts[int(np.argmin(cost))] * v)
    assert s.dist(mu, best) < 1e-4
    assert s.dist(mu, p) == pytest.approx(s.dist(mu, q), abs=1e-8)


def test_frechet_mean_nonconvergence_carries_last_iterate():
    s = Sphere()
    rng = np.random.default_rng(5)
    pts = np.array([s.random_point(rng) for _ in range(10)])
    with pytest.raises(ConvergenceError) as info:
        frechet_mean(s, pts, tol=1e-300, max_iter=2)
    assert s.belongs(info.value.last)


def test_log_many_preserves_order_with_workers():
    s = Sphere()
    rng = np.random.default_rng(6)
    base = np.array([0.0, 0.0, 1.0])
    pts = np.array([s.random_point(rng) for _ in range(12)])
    pts = pts[pts[:, 2] > -0.9]
    serial = log_many(s, base, pts)
    parallel = log_many(s, base, pts, workers=4)
    np.testing.assert_array_equal(serial, parallel)


def test_cholesky_solve_singular_raises():
    with pytest.raises(NumericError):
        cholesky_solve(np.ones((2, 2)), np.ones(2))
    np.testing.assert_allclose(cholesky_solve(np.ones((2, 2)), np.ones(2), ridge=1.0),
                               [1 / 3, 1 / 3])


def test_check_point_rejects_off_manifold():
    with pytest.raises(InvalidInputError):
        Sphere().check_point([1.0, 1.0, 0.0])
    with pytest.raises(InvalidInputError):
        Sphere().check_tangent([0, 0, 1.0], [0, 0, 1.0])
    with pytest.raises(InvalidInputError):
        Euclidean(2).check_point([np.nan, 0])

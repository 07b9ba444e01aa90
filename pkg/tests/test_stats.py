import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALL, ids, near
from mvreg.manifolds import Circle, Euclidean, Sphere
from mvreg.stats import (
    MeanConvergenceError,
    karcher_mean,
    mean_adjoint,
    mean_approx_geodesic,
    intrinsic_median,
)


def grad_norm(M, m, z, w):
    return float(M.norm(m, np.sum(M.scal(np.asarray(w)) * M.log(m[None], z), axis=0)))


def test_euclidean_mean_is_weighted_average(rng):
    z = rng.standard_normal((5, 3))
    w = np.array([0.1, 0.2, 0.3, 0.6, -0.2])
    assert np.allclose(karcher_mean(Euclidean(3), z, w), w @ z)


@pytest.mark.parametrize("M", ALL, ids=ids(ALL))
def test_two_point_mean_is_midpoint(M, rng):
    z = near(M, rng, 2, 0.5)
    assert M.dist(karcher_mean(M, z, tol=1e-13), M.geopoint(z[0], z[1], 0.5)) < 1e-9


def test_circle_mean_example():
    z = np.array([[0.0], [np.pi / 6], [np.pi / 3]])
    assert karcher_mean(Circle(), z)[0] == pytest.approx(np.pi / 6)


@pytest.mark.parametrize("M", ALL, ids=ids(ALL))
def test_mean_is_stationary(M, rng):
    z = near(M, rng, 6, 0.4)
    w = rng.uniform(0.1, 1.0, 6)
    w /= w.sum()
    m = karcher_mean(M, z, w, tol=1e-11)
    assert grad_norm(M, m, z, w) <= 1e-11


def test_negative_weights_are_handled(rng):
    S = Sphere(2)
    z = near(S, rng, 4, 0.3)
    w = np.array([0.4, 0.3, 0.5, -0.2])
    m = karcher_mean(S, z, w, tol=1e-12, max_iter=500)
    assert grad_norm(S, m, z, w) <= 1e-12


def test_batched_mean_matches_loop(rng):
    S = Sphere(2)
    z = near(S, rng, (4, 3), 0.4)
    w = np.array([0.1, 0.2, 0.3, 0.4])
    m = karcher_mean(S, z, w, tol=1e-12)
    for b in range(3):
        assert S.dist(m[b], karcher_mean(S, z[:, b], w, tol=1e-12)) < 1e-10


def test_nonconvergence_carries_last_iterate(rng):
    S = Sphere(2)
    z = near(S, rng, 5, 0.8)
    with pytest.raises(MeanConvergenceError) as info:
        karcher_mean(S, z, tol=1e-16, max_iter=1)
    assert info.value.last.shape == (3,)
    assert np.all(np.asarray(info.value.grad_norm) > 0)


def test_weight_validation():
    z = np.zeros((3, 2))
    with pytest.raises(ValueError):
        karcher_mean(Euclidean(2), z, [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        karcher_mean(Euclidean(2), z, [0.5, 0.5])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    S = Sphere(2)
    z = near(S, rng, 5, 0.4)
    w = rng.uniform(0.1, 1, 5)
    w /= w.sum()
    perm = rng.permutation(5)
    a = karcher_mean(S, z, w, tol=1e-12)
    b = karcher_mean(S, z[perm], w[perm], tol=1e-12)
    assert S.dist(a, b) < 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_initialization_independence(seed):
    rng = np.random.default_rng(seed)
    S = Sphere(2)
    z = near(S, rng, 5, 0.15)
    inits = [karcher_mean(S, z, tol=1e-12, init=z[k]) for k in range(5)]
    assert max(S.dist(inits[0], m) for m in inits) < 1e-6


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), k=st.integers(1, 6))
def test_mean_of_copies(seed, k):
    rng = np.random.default_rng(seed)
    for M in ALL:
        p = M.random_point(rng)
        w = rng.uniform(0.1, 1, k)
        w /= w.sum()
        assert M.dist(karcher_mean(M, np.stack([p] * k), w), p) < 1e-10


def test_median_examples(rng):
    S = Sphere(2)
    p = S.random_point(rng)
    assert np.allclose(intrinsic_median(S, p[None]), p)
    z = rng.standard_normal((7, 1))
    assert intrinsic_median(Euclidean(1), z)[0] == pytest.approx(np.median(z), abs=1e-6)


def test_sphere_median_beats_grid(rng):
    S = Sphere(2)
    z = near(S, rng, 5, 0.6, center=[0, 0, 1.0])
    m = intrinsic_median(S, z)
    # 0.5 degree grid over the sphere, refined locally around the best node
    th = np.deg2rad(np.arange(0, 180.01, 0.5))
    ph = np.deg2rad(np.arange(-180, 180, 0.5))
    T, P = np.meshgrid(th, ph, indexing="ij")
    g = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    obj = np.sum(S.dist(g[:, None], z[None]), axis=1)
    best = g[np.argmin(obj)]
    loc = near(S, rng, 20000, 0.01, center=best)
    grid_min = min(obj.min(), np.sum(S.dist(loc[:, None], z[None]), axis=1).min())
    assert np.sum(S.dist(m[None], z)) <= grid_min + 1e-5


def test_approximate_mean(rng):
    E = Euclidean(2)
    z = rng.standard_normal((4, 2))
    w = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(mean_approx_geodesic(E, z, w), w @ z)
    S = Sphere(2)
    a, b = near(S, rng, 2, 0.5)
    assert np.allclose(mean_approx_geodesic(S, np.stack([a, b]), [0.3, 0.7]), S.geopoint(a, b, 0.7))
    z = near(S, rng, 3, 0.05)
    assert S.dist(mean_approx_geodesic(S, z), karcher_mean(S, z, tol=1e-12)) < 1e-3


@pytest.mark.parametrize("M", ALL, ids=ids(ALL))
def test_mean_adjoint_matches_finite_differences(M, rng):
    z = near(M, rng, 4, 0.4)
    w = np.array([0.4, 0.3, 0.5, -0.2])
    m = karcher_mean(M, z, w, tol=1e-13, max_iter=500)
    f = M.random_point(rng)
    g = mean_adjoint(M, m, z, w, -M.log(m, f))

    def F(zz):
        return 0.5 * M.dist(karcher_mean(M, zz, w, tol=1e-14, max_iter=500, init=m), f) ** 2

    h = 1e-5
    for j in range(4):
        e = M.random_tangent(rng, z[j])
        zp, zm = z.copy(), z.copy()
        zp[j], zm[j] = M.exp(z[j], h * e), M.exp(z[j], -h * e)
        fd = (F(zp) - F(zm)) / (2 * h)
        scale = float(M.norm(z[j], g[j]) * M.norm(z[j], e))
        assert abs(fd - M.inner(z[j], g[j], e)) <= 1e-5 * max(abs(fd), scale, 1e-8)

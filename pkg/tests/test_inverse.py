import numpy as np
import pytest

from conftest import near
from mvreg.higher_order import TGVWeights
from mvreg.inverse import (
    ForwardOperator,
    MSRegularizer,
    NoRegularizer,
    STGVRegularizer,
    TVRegularizer,
    TVTV2Regularizer,
    data_atom,
    forward_apply,
    gaussian_kernel_operator,
    gaussian_kernel_operator_2d,
    residual,
    solve_inverse,
)
from mvreg.manifolds import Euclidean, Sphere
from mvreg.metrics import delta_snr, mean_error
from mvreg.solvers import SolverSchedule
from mvreg.stats import MeanConvergenceError
from mvreg.tv import TVModel, denoise_tv
from oracles import cvx_solve

E1 = Euclidean(1)


def deconv_instance(rng, n=32, noise=0.05):
    A = gaussian_kernel_operator(n, 1.0, 5)
    u = np.where(np.arange(n) < n // 2, 0.0, 1.0)[:, None]
    return A, u, forward_apply(E1, A, u) + noise * rng.standard_normal((n, 1))


def deconv_oracle(A, f, alpha):
    import cvxpy as cp

    x = cp.Variable(A.N)
    obj = 0.5 * cp.sum_squares(A.matrix @ x - f[:, 0]) + alpha * cp.norm1(cp.diff(x))
    return cvx_solve(cp.Problem(cp.Minimize(obj)))


def sphere_curve(n):
    t = np.linspace(0, np.pi / 2, n)
    return np.stack([np.cos(t), np.sin(t) * np.cos(2 * t), np.sin(t) * np.sin(2 * t)], -1)


# -- operators -----------------------------------------------------------------------
def test_operator_validation():
    with pytest.raises(ValueError):
        ForwardOperator(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        ForwardOperator(np.ones(3))
    with pytest.raises(ValueError):
        ForwardOperator(np.eye(4), shape=(3, 3))
    with pytest.raises(ValueError):
        gaussian_kernel_operator(8, 1.0, 4)
    A = ForwardOperator(np.array([[1.5, -0.5], [0.0, 1.0]]))
    assert A.K == A.N == 2
    with pytest.raises(ValueError):
        A.matrix[0, 0] = 1.0


def test_forward_apply_examples(rng):
    S = Sphere(2)
    u = S.random_point(rng, 5)
    assert np.array_equal(forward_apply(S, ForwardOperator.identity(5), u), u)
    A = gaussian_kernel_operator(6, 1.0, 3)
    x = rng.standard_normal((6, 2))
    assert np.allclose(forward_apply(Euclidean(2), A, x), A.matrix @ x, atol=1e-14)
    a, b = near(S, rng, 2, 0.5)
    mid = forward_apply(S, ForwardOperator(np.array([[0.5, 0.5]])), np.stack([a, b]))
    assert np.allclose(mid[0], S.geopoint(a, b, 0.5))


def test_forward_apply_reports_failing_row(rng):
    S = Sphere(2)
    u = near(S, rng, 4, 0.8)
    A = ForwardOperator(np.array([[1.0, 0, 0, 0], [0.1, 0.2, 0.3, 0.4]]))
    with pytest.raises(MeanConvergenceError) as info:
        forward_apply(S, A, u, tol=1e-300, max_iter=1)
    assert info.value.row == 1


def test_gaussian_kernel_rows():
    A = gaussian_kernel_operator(9, 1.0, 5)
    g = np.exp(-np.arange(-2, 3) ** 2 / 2.0)
    assert np.allclose(A.matrix[4, 2:7], g / g.sum())
    assert np.allclose(gaussian_kernel_operator(5, 0.1, 1).matrix, np.eye(5))
    B = gaussian_kernel_operator_2d((6, 7), 1.0, 5)
    assert B.shape == (6, 7) and B.K == 42
    assert np.allclose(B.matrix.sum(1), 1.0, atol=1e-12)
    assert np.count_nonzero(B.matrix[3 * 7 + 3]) == 25


# -- data atoms ----------------------------------------------------------------------
def test_data_atom_zero_at_consistent_mean(rng):
    S = Sphere(2)
    A = gaussian_kernel_operator(6, 1.0, 3)
    u = near(S, rng, 6, 0.4)
    f = forward_apply(S, A, u)
    a = data_atom(S, A, f, 2)
    assert a.value(u) < 1e-20
    assert np.abs(a.grad(u)).max() < 1e-10


def test_data_atom_euclidean_gradient(rng):
    A = gaussian_kernel_operator(6, 1.0, 3)
    u, f = rng.standard_normal((2, 6, 1))
    a = data_atom(E1, A, f, 3)
    r = A.matrix[3] @ u[:, 0] - f[3, 0]
    assert np.allclose(a.grad(u)[:, 0], A.matrix[3] * r)


def test_data_atom_sphere_gradient(rng):
    S = Sphere(2)
    A = gaussian_kernel_operator(6, 1.0, 3)
    for _ in range(10):
        u = near(S, rng, 6, 0.5)
        f = near(S, rng, 6, 0.5)
        a = data_atom(S, A, f, int(rng.integers(6)))
        V = S.random_tangent(rng, u)
        h = 1e-5
        fd = (a.value(S.exp(u, h * V)) - a.value(S.exp(u, -h * V))) / (2 * h)
        G = a.grad(u)
        scale = np.sqrt(np.sum(S.inner(u, G, G)) * np.sum(S.inner(u, V, V)))
        assert abs(np.sum(S.inner(u, G, V)) - fd) <= 1e-5 * scale


# -- solver ----------------------------------------------------------------------------
def test_identity_operator_reduces_to_denoising(rng):
    f = rng.standard_normal((12, 1))
    s = SolverSchedule(max_iters=30)
    a = solve_inverse(E1, ForwardOperator.identity(12), f, TVRegularizer(0.2), 2, s, "cppa")
    b = denoise_tv(E1, f, TVModel(0.2), "cppa", s)
    assert np.array_equal(a.x, b.x)


def test_argument_validation(rng):
    A, _, f = deconv_instance(rng, 8)
    with pytest.raises(ValueError):
        solve_inverse(E1, A, f, engine="newton")
    with pytest.raises(ValueError):
        solve_inverse(E1, A, f, q=1, engine="fbs_traj")
    B = ForwardOperator(np.full((2, 4), 0.25))
    with pytest.raises(ValueError):
        solve_inverse(E1, B, f[:2])


@pytest.mark.parametrize("engine", ["fbs", "fbs_traj"])
def test_euclidean_deconvolution_matches_oracle(engine, rng):
    A, _, f = deconv_instance(rng, 16)
    ref = deconv_oracle(A, f, 0.1)
    r = solve_inverse(E1, A, f, TVRegularizer(0.1), 2, SolverSchedule(lambda0=4, max_iters=500, tol=0), engine)
    assert ref <= r.energy * (1 + 1e-9) and r.energy <= ref * 1.01


def test_traj_trace_is_monotone(rng):
    S = Sphere(2)
    A = gaussian_kernel_operator(16, 1.0, 5)
    f = S.exp(sphere_curve(16), S.random_tangent(rng, sphere_curve(16), 0.05))
    r = solve_inverse(S, A, f, TVRegularizer(0.1), 2, SolverSchedule(lambda0=2, max_iters=60, tol=0))
    assert np.max(np.diff(r.energies)) <= 1e-7


def test_noiseless_consistency():
    S = Sphere(2)
    A = gaussian_kernel_operator(24, 1.0, 5)
    f = forward_apply(S, A, sphere_curve(24))
    r = solve_inverse(S, A, f, None, 2, SolverSchedule(lambda0=50, max_iters=100, tol=0))
    assert residual(S, A, r.x, f) <= 1e-6


def test_q1_proximal_engine(rng):
    A, _, f = deconv_instance(rng, 12)
    r = solve_inverse(E1, A, f, TVRegularizer(0.05), 1, SolverSchedule(max_iters=40), "cppa")
    assert r.energy < r.energies[0]


def test_regularizer_variants(rng):
    A, _, f = deconv_instance(rng, 12)
    s = SolverSchedule(lambda0=2, max_iters=20, inner_iters=10)
    r = solve_inverse(E1, A, f, STGVRegularizer(TGVWeights(0.1, 0.2)), 2, s)
    assert r.extra["y"].shape == f.shape
    for reg in (NoRegularizer(), TVTV2Regularizer(0.05, 0.05), MSRegularizer(0.5, 0.3)):
        r = solve_inverse(E1, A, f, reg, 2, s)
        assert r.x.shape == f.shape and r.energy <= r.energies[0] + 1e-12


def test_image_deconvolution_shapes(rng):
    S = Sphere(2)
    A = gaussian_kernel_operator_2d((5, 5), 1.0, 3)
    u = S.exp(np.broadcast_to([0, 0, 1.0], (5, 5, 3)), S.random_tangent(rng, np.broadcast_to([0, 0, 1.0], (5, 5, 3)), 0.3))
    f = forward_apply(S, A, u)
    r = solve_inverse(S, A, f, TVRegularizer(0.01), 2, SolverSchedule(lambda0=2, max_iters=10))
    assert r.x.shape == (5, 5, 3)


def test_sphere_deconvolution_improves_snr(rng):
    S = Sphere(2)
    n = 32
    A = gaussian_kernel_operator(n, 1.0, 5)
    h = np.where(np.arange(n)[:, None] < n // 2, np.array([1.0, 0, 0]), np.array([0, 0.6, 0.8]))
    blurred = forward_apply(S, A, h)
    f = S.exp(blurred, S.random_tangent(rng, blurred, 0.1))
    r = solve_inverse(S, A, f, TVRegularizer(0.1), 2, SolverSchedule(lambda0=2, max_iters=200, tol=0))
    assert delta_snr(S, h, f, r.x) > 0
    assert mean_error(S, h, r.x) < mean_error(S, h, f)

import numpy as np
import pytest

from conftest import near
from mvreg.manifolds import Circle, Euclidean, ManifoldError, ManifoldPoint, Rotations3, SPD, Sphere
from mvreg.higher_order import (
    PointTuple,
    TGVWeights,
    canonical_tips,
    d_c,
    d_cc,
    d_pt,
    d_s,
    d_s_sym,
    denoise_stgv,
    denoise_tv2,
    grad_dc,
    grad_ds,
    ic_energy,
    schild_point,
    stgv_energy_1d,
    stgv_energy_2d,
    tv2_energy,
)
from mvreg.solvers import SolverSchedule
from mvreg.terms import DccTerm, DcTerm, DsTerm, DsymTerm, RowMeanDataTerm
from mvreg.tv import TVModel, denoise_tv
from oracles import cvx_solve, row_mean_params, term_fd_errors

E1 = Euclidean(1)
GEOMETRIES = [Euclidean(2), Sphere(2), Rotations3(), SPD(3)]


def pt(M, c):
    return ManifoldPoint(np.atleast_1d(np.asarray(c, float)), M)


def tup(M, a, b):
    return PointTuple(pt(M, a), pt(M, b))


def geodesic_signal(M, rng, n, speed=0.15):
    x = M.random_point(rng)
    v = M.random_tangent(rng, x, speed)
    return M.exp(np.broadcast_to(x, (n,) + x.shape), np.arange(n).reshape((n,) + (1,) * len(M.point_shape)) * v)


def geodesic_image(M, rng, n, m, kind="rows"):
    """Images whose rows, columns or antidiagonals are geodesics (zero S-TGV class)."""
    x = M.random_point(rng)
    v = M.random_tangent(rng, x, 0.1)
    I, J = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    s = {"rows": 0.3 * I + 0.5 * J, "cols": 0.5 * I + 0.3 * J, "anti": I + J}[kind]
    return M.exp(np.broadcast_to(x, (n, m) + x.shape), s.reshape(s.shape + (1,) * len(M.point_shape)) * v)


# -- point-level examples ---------------------------------------------------------
def test_dc_examples():
    assert d_c(pt(E1, 0), pt(E1, 1), pt(E1, 0)) == pytest.approx(2.0)
    C = Circle()
    assert d_c(pt(C, 0), pt(C, np.pi / 4), pt(C, np.pi / 2)) == pytest.approx(0.0, abs=1e-12)


def test_dcc_examples():
    p = pt(E1, 0.3)
    assert d_cc(p, p, p, p) == 0.0
    assert d_cc(pt(E1, 0), pt(E1, 1), pt(E1, 0), pt(E1, 1)) == pytest.approx(0.0)
    assert d_cc(pt(E1, 0), pt(E1, 1), pt(E1, 1), pt(E1, 0)) == pytest.approx(2.0)
    # euclidean reference: |u00 - u10 - u0m + u1m|
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c, d = rng.standard_normal(4)
        assert d_cc(pt(E1, a), pt(E1, b), pt(E1, c), pt(E1, d)) == pytest.approx(abs(b + c - a - d))


def test_tv2_energy_examples(rng):
    assert tv2_energy(E1, np.array([0.0, 1.0, 0.0])[:, None]) == pytest.approx(2.0)
    assert tv2_energy(E1, np.array([0.0, 1, 4, 9])[:, None]) == pytest.approx(4.0)
    for M in GEOMETRIES:
        assert tv2_energy(M, geodesic_signal(M, rng, 8)) < 1e-9


def test_schild_point_examples(rng):
    assert schild_point(pt(E1, 0), pt(E1, 1), pt(E1, 5)).coords[0] == pytest.approx(6.0)
    S = Sphere(2)
    a, b = near(S, rng, 2, 0.4)
    assert S.dist(schild_point(pt(S, a), pt(S, b), pt(S, a)).coords, b) < 1e-12


def test_schild_point_tracks_parallel_transport(rng):
    S = Sphere(2)
    for _ in range(20):
        x = S.random_point(rng)
        v = S.random_tangent(rng, x, 1.0)
        v *= 0.05 / np.linalg.norm(v)
        w = S.random_tangent(rng, x, 1.0)
        w *= 0.05 / np.linalg.norm(w)
        u = S.exp(x, v)
        tip = schild_point(pt(S, x), pt(S, S.exp(x, w)), pt(S, u)).coords
        assert S.dist(tip, S.exp(u, S.transport(x, u, w))) <= 1e-3


def test_ds_examples(rng):
    S = Sphere(2)
    x, y, v = near(S, rng, 3, 0.4)
    assert d_s(tup(S, x, y), tup(S, x, y)) == 0.0
    assert d_s(tup(S, x, y), tup(S, x, v)) == pytest.approx(S.dist(v, y))
    assert d_s(tup(E1, 3, 4), tup(E1, 0, 1)) == pytest.approx(0.0)


def test_dpt_examples(rng):
    E = Euclidean(2)
    x, y, u, v = rng.standard_normal((4, 2))
    assert d_pt(tup(E, x, y), tup(E, u, v)) == pytest.approx(np.linalg.norm((y - x) - (v - u)))
    S = Sphere(2)
    a, b = near(S, rng, 2, 0.3)
    assert d_pt(tup(S, a, b), tup(S, a, b)) == 0.0
    with pytest.raises(ManifoldError):
        n = np.array([0, 0, 1.0])
        d_pt(tup(S, n, -n), tup(S, n, n))


def test_dpt_and_ds_agree_to_second_order(rng):
    S = Sphere(2)
    for _ in range(20):
        x = S.random_point(rng)
        V = [S.random_tangent(rng, x, 1.0) for _ in range(3)]
        gaps = []
        for scale in (0.1, 0.05):
            y, u, v = (S.exp(x, scale * d) for d in V)
            t1, t2 = tup(S, x, y), tup(S, u, v)
            gaps.append(abs(d_pt(t1, t2) - d_s(t1, t2)))
        # the discrepancy is at least quadratic in the tuple scale
        assert gaps[1] <= gaps[0] / 3 + 1e-12


def test_dsym_examples():
    E = Euclidean(1)
    t = lambda a, b: tup(E, a, b)  # noqa: E731
    assert d_s_sym(t(0, 1), t(0, 2), t(-1, 0), t(-1, 1)) == pytest.approx(0.0)
    # w1 differs by 2 from its predecessor, w2 matches: half the sum is 1
    assert d_s_sym(t(0, 3), t(0, 1), t(0, 1), t(0, 1)) == pytest.approx(1.0)
    assert d_s_sym(t(0, 0), t(0, 0), t(0, 0), t(0, 0)) == 0.0


def test_grad_examples():
    g = grad_dc(pt(E1, 0), pt(E1, 1), pt(E1, 0))
    assert [v.coeffs[0] for v in g] == pytest.approx([-1.0, 2.0, -1.0])
    p = pt(E1, 0.5)
    assert all(np.all(v.coeffs == 0) for v in grad_dc(p, p, p))
    S = Sphere(2)
    q = pt(S, [0, 0, 1.0])
    assert all(np.allclose(v.coeffs, 0) for v in grad_ds(PointTuple(q, q), PointTuple(q, q)))


# -- gradients ---------------------------------------------------------------------
@pytest.mark.parametrize("M", GEOMETRIES + [Circle()], ids=lambda m: m.name)
@pytest.mark.parametrize("term", [DcTerm(), DccTerm(), DsTerm(), DsymTerm()], ids=lambda t: type(t).__name__)
def test_defect_gradients(M, term, rng):
    assert term_fd_errors(M, term, rng, 15).max() <= 1e-5


@pytest.mark.parametrize("M", GEOMETRIES, ids=lambda m: m.name)
@pytest.mark.parametrize("q", [1, 2])
def test_row_mean_gradients(M, q, rng):
    term = RowMeanDataTerm(3, q)
    assert term_fd_errors(M, term, rng, 10, params=row_mean_params(M, 3)).max() <= 1e-5


# -- zero-energy kernel ---------------------------------------------------------------
@pytest.mark.parametrize("M", GEOMETRIES, ids=lambda m: m.name)
def test_geodesic_signals_have_zero_stgv(M, rng):
    u = geodesic_signal(M, rng, 9)
    assert stgv_energy_1d(M, u, canonical_tips(M, u), TGVWeights(1.0, 1.0)) < 1e-9
    c = np.broadcast_to(M.random_point(rng), u.shape).copy()
    assert stgv_energy_1d(M, c, c, TGVWeights(1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("M", GEOMETRIES, ids=lambda m: m.name)
@pytest.mark.parametrize("kind", ["rows", "cols", "anti"])
def test_geodesic_images_have_zero_stgv(M, kind, rng):
    u = geodesic_image(M, rng, 5, 6, kind)
    y1, y2 = canonical_tips(M, u)
    for p in (1, 2):
        assert stgv_energy_2d(M, u, y1, y2, TGVWeights(1.0, 1.0, p)) < 1e-9


def test_zero_tv2_implies_midpoint_property(rng):
    S = Sphere(2)
    u = geodesic_signal(S, rng, 7)
    assert tv2_energy(S, u) < 1e-9
    for i in range(1, 6):
        assert S.dist(S.geopoint(u[i - 1], u[i + 1], 0.5), u[i]) < 1e-9


def test_stgv_1d_matches_vector_tgv(rng):
    import cvxpy as cp

    u = np.array([0.0, 1.0, 3.0])
    a1, a0 = 0.7, 1.1
    w = cp.Variable(2)
    ref = cvx_solve(cp.Problem(cp.Minimize(a1 * cp.norm1(np.diff(u) - w) + a0 * cp.abs(w[1] - w[0]))))
    # minimize the manifold energy over the free tips y_0, y_1 by a fine scan
    s = np.linspace(-2, 6, 801)
    Y0, Y1 = np.meshgrid(s, s, indexing="ij")
    vals = a1 * (np.abs(1 - Y0) + np.abs(3 - Y1)) + a0 * np.abs((Y1 - 1) - (Y0 - 0))
    assert vals.min() == pytest.approx(ref, abs=1e-8)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    y = np.array([Y0[k], Y1[k], 3.0])[:, None]
    assert stgv_energy_1d(E1, u[:, None], y, TGVWeights(a1, a0)) == pytest.approx(ref, abs=1e-8)


def scalar_tgv_2d(u, y1, y2, a1, a0, p):
    """Scalar reference for the bivariate ladder TGV with per-pixel ell^p coupling."""
    n, m = u.shape
    w1, w2 = y1 - u, y2 - u
    tot = 0.0
    for i in range(n):
        for j in range(m):
            a = []
            if i <= n - 2:
                a.append(abs(u[i + 1, j] - y1[i, j]))
            if j <= m - 2:
                a.append(abs(u[i, j + 1] - y2[i, j]))
            if a:
                tot += a1 * sum(x**p for x in a) ** (1 / p)
            b = []
            if 1 <= i <= n - 2:
                b.append(abs(w1[i, j] - w1[i - 1, j]) ** p)
            if 1 <= j <= m - 2:
                b.append(abs(w2[i, j] - w2[i, j - 1]) ** p)
            if 1 <= i <= n - 2 and 1 <= j <= m - 2:
                b.append(2 ** (1 - p) * abs(w1[i, j] - w1[i, j - 1] + w2[i, j] - w2[i - 1, j]) ** p)
            if b:
                tot += a0 * sum(b) ** (1 / p)
    return tot


@pytest.mark.parametrize("p", [1, 2])
def test_stgv_2d_matches_scalar_reference(p, rng):
    u, y1, y2 = rng.standard_normal((3, 4, 4))
    val = stgv_energy_2d(E1, u[..., None], y1[..., None], y2[..., None], TGVWeights(0.7, 1.3, p))
    assert val == pytest.approx(scalar_tgv_2d(u, y1, y2, 0.7, 1.3, p), abs=1e-10)


def test_parallel_transport_variant(rng):
    E = Euclidean(2)
    u, y = rng.standard_normal((2, 6, 2))
    a = stgv_energy_1d(E, u, y, TGVWeights(0.5, 0.8))
    b = stgv_energy_1d(E, u, y, TGVWeights(0.5, 0.8, variant="parallel_transport"))
    assert a == pytest.approx(b)
    with pytest.raises(ValueError):
        denoise_stgv(E, u, TGVWeights(0.5, 0.8, variant="parallel_transport"))


def test_weights_validation():
    for bad in (dict(alpha1=0, alpha0=1), dict(alpha1=1, alpha0=1, p=3), dict(alpha1=1, alpha0=1, variant="x")):
        with pytest.raises(ValueError):
            TGVWeights(**bad)


def test_ic_energy_reports_residual(rng):
    S = Sphere(2)
    u = geodesic_signal(S, rng, 6)
    val, res = ic_energy(S, u, u, u, 1.0, 1.0)
    assert res < 1e-12
    assert val == pytest.approx(0.5 * np.sum(S.dist(u[:-1], u[1:])), abs=1e-9)


# -- denoising --------------------------------------------------------------------------
def test_geodesic_data_is_fixed_point(rng):
    S = Sphere(2)
    f = geodesic_signal(S, rng, 8)
    s = SolverSchedule(max_iters=20, inner_iters=10)
    assert S.dist(denoise_tv2(S, f, 0.5, schedule=s).x, f).max() < 1e-8
    r = denoise_stgv(S, f, TGVWeights(0.5, 0.5), schedule=s)
    assert S.dist(r.x, f).max() < 1e-8
    assert r.extra["y"].shape == f.shape


def test_tv2_has_lower_curvature_than_tv(rng):
    n = 32
    f = (np.linspace(0, 2, n) + 0.1 * rng.standard_normal(n))[:, None]
    r2 = denoise_tv2(E1, f, 0.5, schedule=SolverSchedule(max_iters=300, inner_iters=5))
    target = np.sum((r2.x - f) ** 2)
    # bisect the TV weight until both results fit the data equally well
    lo, hi = 0.0, 2.0
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        r1 = denoise_tv(E1, f, TVModel(mid), schedule=SolverSchedule(max_iters=300))
        fid = np.sum((r1.x - f) ** 2)
        lo, hi = (mid, hi) if fid < target else (lo, mid)
    assert fid == pytest.approx(target, rel=0.05)
    assert tv2_energy(E1, r2.x) < tv2_energy(E1, r1.x)


def test_stgv_denoising_matches_convex_tgv(rng):
    import cvxpy as cp

    n = 16
    t = np.linspace(0, 1, n)
    f = np.where(t < 0.5, t, 1 - t) * 2 + 0.1 * rng.standard_normal(n)
    a1, a0 = 0.3, 0.6
    u, w = cp.Variable(n), cp.Variable(n - 1)
    obj = 0.5 * cp.sum_squares(u - f) + a1 * cp.norm1(cp.diff(u) - w) + a0 * cp.norm1(cp.diff(w))
    ref = cvx_solve(cp.Problem(cp.Minimize(obj)))
    r = denoise_stgv(E1, f[:, None], TGVWeights(a1, a0), schedule=SolverSchedule(max_iters=500, tol=0, inner_iters=5))
    assert r.energy <= ref * 1.02


@pytest.mark.parametrize("p", [1, 2])
def test_image_regularizers_decrease_energy(p, rng):
    S = Sphere(2)
    F = S.random_point(rng, (4, 4))
    s = SolverSchedule(max_iters=4, inner_iters=10)
    for r in (denoise_stgv(S, F, TGVWeights(0.2, 0.4, p), schedule=s), denoise_tv2(S, F, 0.3, p=p, schedule=s)):
        assert r.energy < r.energies[0]

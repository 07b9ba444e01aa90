import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALL, ids, near
from mvreg.manifolds import SPD, Circle, Euclidean
from mvreg.prox import data_step, huber, prox_data, prox_huber, prox_pair, prox_pair_quadratic
from oracles import data_prox_gap, pair_prox_gap


def test_data_prox_examples():
    E = Euclidean(1)
    assert prox_data(E, np.array([0.0]), np.array([2.0]), 1.0)[0] == pytest.approx(1.0)
    C = Circle()
    assert prox_data(C, np.array([0.0]), np.array([np.pi / 2]), np.pi, q=1)[0] == pytest.approx(np.pi / 2)
    x, f = np.array([0.0]), np.array([3.0])
    assert E.dist(prox_data(E, x, f, 1e-12), x) <= 1e-10 * 3.0
    assert np.array_equal(prox_data(E, f, f, 1.0, q=1), f)


def test_data_prox_circle_grid():
    # brute force along the arc with step 1e-4
    t = np.arange(0, 2 * np.pi, 1e-4)
    obj = np.minimum(np.abs(t - np.pi / 2), 2 * np.pi - np.abs(t - np.pi / 2)) + np.minimum(t, 2 * np.pi - t) ** 2 / (2 * np.pi)
    assert t[np.argmin(obj)] == pytest.approx(np.pi / 2, abs=1e-4)


def test_pair_prox_examples():
    E = Euclidean(1)
    a, b = prox_pair(E, np.array([0.0]), np.array([4.0]), 1.0)
    assert (a[0], b[0]) == pytest.approx((1.0, 3.0))
    a, b = prox_pair(E, np.array([0.0]), np.array([4.0]), 5.0)
    assert (a[0], b[0]) == pytest.approx((2.0, 2.0))
    a, b = prox_pair(E, np.array([1.0]), np.array([1.0]), 5.0)
    assert (a[0], b[0]) == (1.0, 1.0)
    a, b = prox_pair_quadratic(E, np.array([0.0]), np.array([1.0]), 1.0)
    assert (a[0], b[0]) == pytest.approx((1 / 3, 2 / 3))
    a, b = prox_pair_quadratic(E, np.array([0.0]), np.array([1.0]), 1e12)
    assert (a[0], b[0]) == pytest.approx((0.5, 0.5))


def test_pair_prox_two_dim_brute_force():
    s = np.linspace(-1, 5, 1201)
    Y1, Y2 = np.meshgrid(s, s, indexing="ij")
    obj = np.abs(Y1 - Y2) + 0.5 * (Y1**2 + (Y2 - 4) ** 2)
    k = np.unravel_index(np.argmin(obj), obj.shape)
    assert (Y1[k], Y2[k]) == pytest.approx((1.0, 3.0), abs=5e-3)
    obj = 0.5 * (Y1 - Y2) ** 2 + 0.5 * (Y1**2 + (Y2 - 1) ** 2)
    k = np.unravel_index(np.argmin(obj), obj.shape)
    assert (Y1[k], Y2[k]) == pytest.approx((1 / 3, 2 / 3), abs=5e-3)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        prox_data(Euclidean(1), np.zeros(1), np.ones(1), -1.0)
    with pytest.raises(ValueError):
        prox_huber(Euclidean(1), np.zeros(1), np.ones(1), 1.0, tau=0.0, omega=1.0)


def test_huber_branches():
    E = Euclidean(1)
    x, y = np.array([0.0]), np.array([0.1])
    # small distance: quadratic branch equals the H1 prox with weight omega/tau
    a, b = prox_huber(E, x, y, 1.0, tau=1.0, omega=1.0, pair=True)
    qa, qb = prox_pair_quadratic(E, x, y, 1.0)
    assert np.allclose([a, b], [qa, qb])
    # large distance: linear branch equals the TV prox with slope omega
    y = np.array([10.0])
    a, b = prox_huber(E, x, y, 1.0, tau=0.5, omega=2.0, pair=True)
    ta, tb = prox_pair(E, x, y, 2.0)
    assert np.allclose([a, b], [ta, tb])
    assert np.allclose(prox_huber(E, x, y, 1.0, tau=0.5, omega=2.0), prox_data(E, x, y, 2.0, q=1))


def test_huber_prox_is_continuous_across_threshold():
    E = Euclidean(1)
    tau, omega, lam = 0.7, 1.3, 0.4
    for pair, thr in ((False, tau + omega * lam), (True, tau + 2 * omega * lam)):
        lo = prox_huber(E, np.zeros(1), np.array([thr - 1e-12]), lam, tau, omega, pair=pair)
        hi = prox_huber(E, np.zeros(1), np.array([thr + 1e-12]), lam, tau, omega, pair=pair)
        assert np.allclose(lo, hi, atol=1e-9)


def test_huber_euclidean_grid(rng):
    E = Euclidean(1)
    cand = np.linspace(-6, 6, 10001)
    for _ in range(20):
        x, y = rng.uniform(-3, 3, 2)
        lam, tau, omega = rng.uniform(0.1, 2, 3)
        z = prox_huber(E, np.array([x]), np.array([y]), lam, tau, omega)[0]

        def obj(v):
            return lam * huber(np.abs(v - y), tau, omega) + 0.5 * (v - x) ** 2

        assert obj(z) <= np.min(obj(cand)) + 1e-12


def test_general_exponent_step_is_optimal():
    d, lam = 2.0, 0.7
    for q in (1.5, 3.0):
        t = data_step(d, lam, q)
        s = np.linspace(0, 1, 100001)
        obj = (d * (1 - s)) ** q / q + (s * d) ** 2 / (2 * lam)
        assert t == pytest.approx(s[np.argmin(obj)], abs=2e-5)


@pytest.mark.parametrize("M", ALL, ids=ids(ALL))
def test_prox_beats_oracle(M, rng):
    for _ in range(10):
        x, f = near(M, rng, 2, 0.8)
        lam = rng.uniform(0.05, 2.0)
        for q in (1, 2):
            assert data_prox_gap(M, rng, x, f, lam, prox_data(M, x, f, lam, q), q=q, n_rand=300) <= 1e-6
        y1, y2 = prox_pair(M, x, f, lam)
        assert pair_prox_gap(M, rng, x, f, lam, y1, y2, n_rand=300) <= 1e-6


@pytest.mark.parametrize("M", [Euclidean(3), SPD(3)], ids=["euclidean", "spd"])
def test_data_prox_nonexpansive(M, rng):
    for _ in range(50):
        x, x2, f = near(M, rng, 3, 0.8)
        for q in (1, 2):
            assert M.dist(prox_data(M, x, f, 0.7, q), prox_data(M, x2, f, 0.7, q)) <= M.dist(x, x2) + 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), la=st.floats(0.0, 3.0))
def test_pair_prox_symmetry(seed, la):
    rng = np.random.default_rng(seed)
    for M in ALL:
        x1, x2 = near(M, rng, 2, 0.8)
        a, b = prox_pair(M, x1, x2, la)
        c, d = prox_pair(M, x2, x1, la)
        assert M.dist(a, d) < 1e-12 and M.dist(b, c) < 1e-12

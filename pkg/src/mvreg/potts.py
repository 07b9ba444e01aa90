"""Mumford-Shah and Potts models: exact univariate dynamic programming and a
penalty splitting for images.

Intervals are 0-based and inclusive: ``(l, r)`` covers ``f[l], ..., f[r]``.
A jump at ``i`` separates ``x[i]`` and ``x[i + 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifolds import Manifold
from .manifolds.jacobi import hess_half_sqdist, log_diff
from .solvers import SolverSchedule, cppa
from .stats import intrinsic_median, karcher_mean
from .terms import DataTerm, Family, PairSqTerm, PairTerm, PowerTerm
from .tv import atoms_from_families


@dataclass(frozen=True)
class MSModel:
    """Parameters of the Mumford-Shah (``mode='mumford_shah'``) or Potts model.

    ``gamma`` is the price of a jump.  In Mumford-Shah mode it fixes the jump
    height ``s`` through ``gamma = alpha s^p / p``; in Potts mode ``alpha``
    is not used.
    """

    alpha: float = 1.0
    gamma: float = 1.0
    p: float = 2
    q: float = 2
    mode: str = "mumford_shah"

    def __post_init__(self):
        if self.mode not in ("mumford_shah", "potts"):
            raise ValueError("mode must be 'mumford_shah' or 'potts'")
        if self.gamma <= 0 or (self.mode == "mumford_shah" and self.alpha <= 0):
            raise ValueError("alpha and gamma must be positive")
        if self.p < 1 or self.q < 1:
            raise ValueError("exponents must be at least 1")

    @classmethod
    def potts(cls, gamma: float, q: float = 2) -> "MSModel":
        return cls(alpha=1.0, gamma=gamma, q=q, mode="potts")

    @classmethod
    def from_jump_height(cls, alpha: float, s: float, p: float = 2, q: float = 2) -> "MSModel":
        return cls(alpha=alpha, gamma=alpha * s**p / p, p=p, q=q)

    @property
    def is_potts(self) -> bool:
        return self.mode == "potts"

    @property
    def s(self) -> float:
        """Jump height of the truncated form."""
        return (self.p * self.gamma / self.alpha) ** (1.0 / self.p)

    def scaled(self, factor: float) -> "MSModel":
        """Model with the regularizer (jump price and variation) multiplied by ``factor``."""
        return MSModel(self.alpha * factor, self.gamma * factor, self.p, self.q, self.mode)


@dataclass(frozen=True)
class NeighborhoodSystem:
    directions: tuple = ((1, 0), (0, 1), (1, 1), (1, -1))
    weights: tuple = (np.sqrt(2.0) - 1.0, np.sqrt(2.0) - 1.0, 1.0 - np.sqrt(2.0) / 2.0, 1.0 - np.sqrt(2.0) / 2.0)

    def __post_init__(self):
        if len(self.directions) != len(self.weights) or not self.directions:
            raise ValueError("one weight per direction is required")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if any(tuple(a) == (0, 0) for a in self.directions):
            raise ValueError("directions must be nonzero")

    @property
    def R(self) -> int:
        return len(self.directions)


# -- energies ----------------------------------------------------------------------
def _pen(M, model: MSModel, a, b):
    if model.is_potts:
        # x_i != x_{i+1} as points, not up to round-off in the distance
        ax = tuple(range(-M.pdim, 0))
        return np.any(np.asarray(a) != np.asarray(b), axis=ax).astype(float)
    d = M.dist(a, b)
    return np.minimum(model.s**model.p, d**model.p) / model.p


def ms_energy_1d(M: Manifold, x, f, model: MSModel) -> float:
    """Truncated (Blake-Zisserman) Mumford-Shah energy or the Potts energy of a signal."""
    x, f = np.asarray(x, float), np.asarray(f, float)
    if x.shape != f.shape:
        raise ValueError("signal and data lengths differ")
    data = float(np.sum(M.dist(x, f) ** model.q)) / model.q
    reg = float(np.sum(_pen(M, model, x[:-1], x[1:])))
    return data + (model.gamma if model.is_potts else model.alpha) * reg


def potts_energy_1d(M: Manifold, x, f, gamma: float, q: float = 2) -> float:
    return ms_energy_1d(M, x, f, MSModel.potts(gamma, q))


def _shift_pairs(shape, a):
    n, m = shape
    di, dj = a
    i0, i1 = max(0, -di), min(n, n - di)
    j0, j1 = max(0, -dj), min(m, m - dj)
    return (slice(i0, i1), slice(j0, j1)), (slice(i0 + di, i1 + di), slice(j0 + dj, j1 + dj))


def ms_energy_2d(M: Manifold, x, f, model: MSModel, ns: NeighborhoodSystem | None = None) -> float:
    """``(1/q) d^q(x, f) + w sum_s omega_s Psi_{a_s}(x)`` with ``w = alpha`` (``gamma`` for Potts)."""
    ns = ns or NeighborhoodSystem()
    x, f = np.asarray(x, float), np.asarray(f, float)
    if x.shape != f.shape:
        raise ValueError("image and data shapes differ")
    shape = x.shape[: x.ndim - M.pdim]
    data = float(np.sum(M.dist(x, f) ** model.q)) / model.q
    reg = 0.0
    for a, om in zip(ns.directions, ns.weights):
        s0, s1 = _shift_pairs(shape, a)
        reg += om * float(np.sum(_pen(M, model, x[s1], x[s0])))
    return data + (model.gamma if model.is_potts else model.alpha) * reg


# -- segment errors ----------------------------------------------------------------
def _stack_data(M, f, weights):
    """Return data stack ``(K, N) + point_shape`` and weights ``(K,)``."""
    f = np.asarray(f, float)
    if weights is None:
        return f[None], np.ones(1)
    w = np.asarray(weights, float)
    if f.ndim != 2 + M.pdim or f.shape[0] != len(w):
        raise ValueError("weighted data must be stacked as (K, N) + point_shape")
    return f, w


def _constant_error(M, F, w, q, init):
    K, n = F.shape[:2]
    pts = F.reshape((K * n,) + M.point_shape)
    ww = np.repeat(w, n)
    ww = ww / ww.sum()
    if q == 2:
        h = karcher_mean(M, pts, ww, tol=1e-13, max_iter=500, init=init)
    elif q == 1:
        h = intrinsic_median(M, pts, ww)
    else:
        h = _power_mean(M, pts, ww, q, init)
    eps = float(np.sum(np.repeat(w, n) * M.dist(h, pts) ** q)) / q
    return eps, np.broadcast_to(h, (n,) + M.point_shape).copy()


def _power_mean(M, pts, w, q, init, max_iter=500):
    """Minimiser of ``sum w d^q(h, z)`` by Riemannian gradient descent with backtracking."""
    h = karcher_mean(M, pts, w, tol=1e-12, max_iter=200) if init is None else np.asarray(init, float)

    def phi(x):
        return float(np.sum(w * M.dist(x, pts) ** q))

    val = phi(h)
    for _ in range(max_iter):
        d = M.dist(h, pts)
        lg = M.log(h, pts)
        g = -np.sum(M.scal(w * d ** (q - 2) * np.where(d > 0, 1.0, 0.0)) * np.nan_to_num(lg), axis=0) * q
        gn2 = float(M.inner(h, g, g))
        if gn2 < 1e-26:
            break
        t = 1.0
        while t > 1e-12:
            hn = M.exp(h, -t * g)
            vn = phi(hn)
            if vn <= val - 1e-4 * t * gn2:
                break
            t *= 0.5
        else:
            break
        h, val = hn, vn
    return h


def _smooth_phi(M, F, w, alpha, h):
    val = 0.5 * float(np.sum(w[:, None] * M.dist(h[None], F) ** 2))
    if len(h) > 1:
        val += 0.5 * alpha * float(np.sum(M.dist(h[:-1], h[1:]) ** 2))
    return val


def _smooth_segment(M, F, w, alpha, init, tol=1e-13, max_iter=60):
    """Riemannian Newton method for ``(1/2) sum w d^2(h, F) + (alpha/2) sum d^2(h_i, h_{i+1})``.

    The Hessian is assembled in orthonormal tangent frames from Jacobi-field
    formulas; indefinite Hessians are shifted and steps are backtracked.
    """
    h = np.array(init, float)
    n = len(h)
    val = _smooth_phi(M, F, w, alpha, h)
    for _ in range(max_iter):
        g = -np.sum(M.scal(w[:, None]) * M.log(h[None], F), axis=0)
        if n > 1:
            g[:-1] -= alpha * M.log(h[:-1], h[1:])
            g[1:] -= alpha * M.log(h[1:], h[:-1])
        B = M.tangent_basis(h)
        dim = B.shape[1]
        c = M.coords(h, g)
        gn = float(np.sqrt(np.sum(c**2)))
        if gn <= tol * (1.0 + val):
            break
        hE = M.expand(h)
        Hd = sum(wk * hess_half_sqdist(M, hE, M.expand(Fk), B) for wk, Fk in zip(w, F))
        if n > 1:
            Hd[:-1] += alpha * hess_half_sqdist(M, hE[:-1], M.expand(h[1:]), B[:-1])
            Hd[1:] += alpha * hess_half_sqdist(M, hE[1:], M.expand(h[:-1]), B[1:])
        hEE = M.expand(hE)
        H = np.zeros((n * dim, n * dim))
        Hii = M.inner(hEE, B[:, :, None], Hd[:, None, :])
        for i in range(n):
            H[i * dim:(i + 1) * dim, i * dim:(i + 1) * dim] = Hii[i]
        if n > 1:
            L = -alpha * log_diff(M, hE[:-1], M.expand(h[1:]), B[1:])
            T = M.inner(hEE[:-1], B[:-1, :, None], L[:, None, :])
            for i in range(n - 1):
                H[i * dim:(i + 1) * dim, (i + 1) * dim:(i + 2) * dim] = T[i]
                H[(i + 1) * dim:(i + 2) * dim, i * dim:(i + 1) * dim] = T[i].T
        H = 0.5 * (H + H.T)
        cv = c.ravel()
        shift = 0.0
        scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
        while True:
            try:
                Lc = np.linalg.cholesky(H + shift * np.eye(len(H)))
                break
            except np.linalg.LinAlgError:
                shift = max(2.0 * shift, 1e-8 * scale)
        step = -np.linalg.solve(Lc.T, np.linalg.solve(Lc, cv)).reshape(n, dim)
        V = np.sum(M.scal(step) * B, axis=1)
        slope = float(np.dot(cv, step.ravel()))
        t = 1.0
        while t > 1e-10:
            hn = M.exp(h, t * V)
            vn = _smooth_phi(M, F, w, alpha, hn)
            if vn <= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        done = val - vn <= 1e-16 * (1.0 + val)
        h, val = hn, vn
        if done:
            break
    return val, h


def _general_segment(M, F, w, model, init, iters=3000):
    """Proximal-point solve of the L^q-V^p segment problem for non-smooth exponents."""
    K, n = F.shape[:2]
    fams = [Family(DataTerm(model.q), np.arange(n)[:, None], {"f": F[k]}, w[k], role="data")
            for k in range(K)]
    if n > 1:
        idx = np.stack([np.arange(n - 1), np.arange(1, n)], 1)
        if model.p == 1:
            fams.append(Family(PairTerm(), idx, weight=model.alpha))
        elif model.p == 2:
            fams.append(Family(PairSqTerm(), idx, weight=model.alpha))
        else:
            fams.append(Family(PowerTerm(PairTerm(), model.p), idx, weight=model.alpha / model.p))
    atoms = atoms_from_families(M, fams, n_inner=30)
    res = cppa(M, atoms, init, SolverSchedule(max_iters=iters, tol=1e-12))
    return res.energy, res.x


def segment_error(M: Manifold, f, l: int, r: int, model: MSModel, warm_start=None, weights=None):
    """Best approximation error on ``f[l..r]`` and its minimiser.

    Potts mode uses a constant segment (mean for ``q = 2``, median for
    ``q = 1``); Mumford-Shah mode solves the smooth ``L^q-V^p`` problem.
    ``weights`` (with ``f`` stacked as ``(K, N) + point_shape``) weights
    several data sets in the data term.

    Returns
    -------
    eps : float
    h : array, shape ``(r - l + 1,) + point_shape``
    """
    F, w = _stack_data(M, f, weights)
    N = F.shape[1]
    if not (0 <= l <= r < N):
        raise ValueError("need 0 <= l <= r < N")
    F = F[:, l:r + 1]
    init = None if warm_start is None else np.asarray(warm_start, float)
    if model.is_potts:
        h0 = None if init is None else (init if init.ndim == M.pdim else init[0])
        if len(w) == 1 and r == l:
            return 0.0, F[0].copy()
        return _constant_error(M, F, w, model.q, h0)
    if init is None:
        init = F[int(np.argmax(w))].copy()
    elif init.ndim == M.pdim:
        init = np.broadcast_to(init, F.shape[1:]).copy()
    if len(w) == 1 and r == l:
        return 0.0, F[0].copy()
    if model.p == 2 and model.q == 2:
        return _smooth_segment(M, F, w, model.alpha, init)
    return _general_segment(M, F, w, model, init)


# -- univariate dynamic program -----------------------------------------------------
@dataclass
class DPResult:
    x: np.ndarray
    jumps: list
    energy: float
    segments: list = field(default_factory=list)


def _flat_potts_table(F, w, gamma):
    """Vectorised DP for euclidean Potts with q = 2 using cumulative sums."""
    K, N = F.shape[:2]
    Fv = F.reshape(K, N, -1)
    W = np.concatenate([[0.0], np.cumsum(np.full(N, w.sum()))])
    S1 = np.concatenate([np.zeros((1, Fv.shape[2])), np.cumsum(np.einsum("k,knd->nd", w, Fv), 0)])
    S2 = np.concatenate([[0.0], np.cumsum(np.einsum("k,knd->n", w, Fv**2))])
    B = np.empty(N + 1)
    B[0] = -gamma
    arg = np.zeros(N + 1, int)
    for r in range(1, N + 1):
        ls = np.arange(r)
        s1 = S1[r] - S1[ls]
        eps = 0.5 * ((S2[r] - S2[ls]) - np.sum(s1**2, 1) / (W[r] - W[ls]))
        cand = B[ls] + gamma + np.maximum(eps, 0.0)
        # ties go to the latest start, as in the pruned loop
        j = r - 1 - int(np.argmin(cand[::-1]))
        B[r], arg[r] = cand[j], j
    return B, arg


def dp_solve_1d(M: Manifold, f, model: MSModel, *, weights=None, prune: bool = True,
                warm_start: bool = True) -> DPResult:
    """Global minimiser of the univariate Potts or Mumford-Shah problem.

    Computes ``B[r] = min_l B[l] + gamma + eps(l, r - 1)`` over prefixes
    ``f[:r]`` with ``B[0] = -gamma``.  Pruning stops the scan over ``l``
    (taken from ``r - 1`` downwards) as soon as ``eps(l, r - 1)`` exceeds
    the best candidate, which is sound because ``eps`` grows with the
    interval and ``B[l] + gamma >= 0``.
    """
    F, w = _stack_data(M, f, weights)
    N = F.shape[1]
    if N < 1:
        raise ValueError("empty signal")
    gamma = model.gamma
    if model.is_potts and model.q == 2 and M.is_flat:
        B, arg = _flat_potts_table(F, w, gamma)
        seg_h = None
    else:
        B = np.empty(N + 1)
        B[0] = -gamma
        arg = np.zeros(N + 1, int)
        seg_h = [None] * (N + 1)
        cache: dict[int, np.ndarray] = {}
        for r in range(1, N + 1):
            best, bl, bh = np.inf, -1, None
            prev = None
            for l in range(r - 1, -1, -1):
                init = None
                if warm_start:
                    last = cache.get(l)
                    if last is not None and (model.is_potts or len(last) == r - l - 1):
                        init = np.concatenate([last, last[-1:]]) if not model.is_potts else last[0]
                    elif prev is not None:
                        init = np.concatenate([F[int(np.argmax(w)), l:l + 1], prev]) \
                            if not model.is_potts else prev[0]
                eps, h = segment_error(M, F, l, r - 1, model, init, weights=w)
                if warm_start:
                    cache[l] = h
                prev = h
                cand = B[l] + gamma + eps
                if cand < best:
                    best, bl, bh = cand, l, h
                if prune and eps >= best:
                    break
            B[r], arg[r], seg_h[r] = best, bl, bh
    x = np.empty(F.shape[1:])
    segments = []
    r = N
    while r > 0:
        l = arg[r]
        if seg_h is None:
            wk = w[:, None, None] * np.ones((1, r - l, 1))
            h = np.sum(wk * F[:, l:r].reshape(len(w), r - l, -1), axis=(0, 1)) / np.sum(wk)
            x[l:r] = h.reshape(M.point_shape)
        else:
            x[l:r] = seg_h[r]
        segments.append((l, r - 1))
        r = l
    segments.reverse()
    if model.is_potts:
        jumps = [seg[1] for seg in segments[:-1]]
    else:
        jumps = [int(i) for i in np.flatnonzero(M.dist(x[:-1], x[1:]) > model.s)]
    return DPResult(x=x, jumps=jumps, energy=float(B[N]), segments=segments)


def exhaustive_solve_1d(M: Manifold, f, model: MSModel, weights=None) -> DPResult:
    """Reference minimiser over all ``2^(N-1)`` jump sets (small ``N`` only)."""
    F, w = _stack_data(M, f, weights)
    N = F.shape[1]
    cache: dict = {}

    def seg(l, r):
        if (l, r) not in cache:
            cache[(l, r)] = segment_error(M, F, l, r, model, None, weights=w)
        return cache[(l, r)]

    best = None
    for mask in range(2 ** (N - 1)):
        cuts = [i for i in range(N - 1) if (mask >> i) & 1]
        bounds = [-1] + cuts + [N - 1]
        e = model.gamma * len(cuts)
        for a, b in zip(bounds[:-1], bounds[1:]):
            e += seg(a + 1, b)[0]
        if best is None or e < best[0]:
            best = (e, bounds)
    e, bounds = best
    x = np.empty(F.shape[1:])
    segments = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        x[a + 1:b + 1] = seg(a + 1, b)[1]
        segments.append((a + 1, b))
    jumps = bounds[1:-1] if model.is_potts else [
        int(i) for i in np.flatnonzero(M.dist(x[:-1], x[1:]) > model.s)]
    return DPResult(x=x, jumps=jumps, energy=float(e), segments=segments)


# -- multivariate splitting --------------------------------------------------------
def direction_lines(shape, a) -> list[np.ndarray]:
    """Flat pixel indices of the maximal chains ``p, p + a, p + 2a, ...`` in the grid."""
    n, m = shape
    di, dj = a
    lines = []
    for i in range(n):
        for j in range(m):
            pi, pj = i - di, j - dj
            if 0 <= pi < n and 0 <= pj < m:
                continue
            line = []
            ci, cj = i, j
            while 0 <= ci < n and 0 <= cj < m:
                line.append(ci * m + cj)
                ci, cj = ci + di, cj + dj
            lines.append(np.array(line))
    return lines


@dataclass
class SplitResult:
    x: np.ndarray
    disagreement: list
    iterations: int
    converged: bool
    splits: list = field(default_factory=list)


def splitting_solve_2d(M: Manifold, f, model: MSModel, ns: NeighborhoodSystem | None = None, *,
                       mu0: float | None = None, tol: float = 1e-6, max_iter: int = 2000,
                       mu=None) -> SplitResult:
    """Penalty splitting for the bivariate problem.

    One split variable per direction ``a_s``; every outer iteration updates
    them cyclically by solving, line by line along ``a_s``, the univariate
    problem with jump/variation weight ``R omega_s`` times the model weight
    and data ``(1/q)[d^q(x, f) + mu_k d^q(x, x_prev)]``, where ``x_prev`` is
    the most recently updated split variable.  ``mu_k = mu0 k^(q+1)`` by
    default.  Iterates until the largest distance between cyclically
    consecutive split variables is at most ``tol``.
    """
    ns = ns or NeighborhoodSystem()
    f = np.asarray(f, float)
    shape = f.shape[: f.ndim - M.pdim]
    if len(shape) != 2:
        raise ValueError("expected an image")
    ps = M.point_shape
    F = f.reshape((-1,) + ps)
    R = ns.R
    base = model.gamma if model.is_potts else model.alpha
    if mu0 is None:
        mu0 = 1e-2 * base
    if mu is None:
        def mu(k):
            return mu0 * k ** (model.q + 1)
    lines = [direction_lines(shape, a) for a in ns.directions]
    models = [model.scaled(R * om) for om in ns.weights]
    xs = [F.copy() for _ in range(R)]
    trace = []
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        mk = float(mu(k))
        for s in range(R):
            prev = xs[s - 1]
            new = np.empty_like(F)
            for line in lines[s]:
                data = np.stack([F[line], prev[line]])
                res = dp_solve_1d(M, data, models[s], weights=np.array([1.0, mk]))
                new[line] = res.x
            xs[s] = new
        dis = max(float(np.max(M.dist(xs[s], xs[s - 1]))) for s in range(R)) if R > 1 else 0.0
        trace.append(dis)
        if dis <= tol:
            converged = True
            break
    out = xs[0].reshape(f.shape)
    return SplitResult(out, trace, k, converged, [x.reshape(f.shape) for x in xs])


def partition_labels(M: Manifold, x, tol: float = 1e-4) -> np.ndarray:
    """Label 4-connected components of an image whose neighbours lie within ``tol``."""
    x = np.asarray(x, float)
    shape = x.shape[: x.ndim - M.pdim]
    n, m = shape
    parent = np.arange(n * m)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in ((1, 0), (0, 1)):
        s0, s1 = _shift_pairs(shape, a)
        close = M.dist(x[s0], x[s1]) <= tol
        I, J = np.nonzero(close)
        for i, j in zip(I, J):
            p = (i + s0[0].start) * m + j + s0[1].start
            q = (i + s1[0].start) * m + j + s1[1].start
            rp, rq = find(p), find(q)
            if rp != rq:
                parent[max(rp, rq)] = min(rp, rq)
    roots = np.array([find(i) for i in range(n * m)]).reshape(n, m)
    _, inv = np.unique(roots, return_inverse=True)
    return inv.reshape(n, m)

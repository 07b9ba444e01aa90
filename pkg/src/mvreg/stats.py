"""Intrinsic means, medians and the derivative of the weighted mean map."""

from __future__ import annotations

import numpy as np

from .manifolds import Circle, Manifold
from .manifolds.jacobi import beta_exp, beta_hess


class MeanConvergenceError(RuntimeError):
    """The Karcher iteration did not reach its tolerance within the iteration cap.

    The last iterate and its gradient norm are kept on the exception.
    """

    def __init__(self, last, grad_norm):
        super().__init__(f"Karcher mean did not converge (gradient norm {float(np.max(grad_norm)):.3e})")
        self.last = last
        self.grad_norm = grad_norm


def _weights(points, weights, M: Manifold):
    K = np.shape(points)[0]
    batch = np.shape(points)[1: np.ndim(points) - M.pdim]
    if weights is None:
        w = np.full((K,), 1.0 / K)
    else:
        w = np.asarray(weights, float)
    if w.shape[0] != K:
        raise ValueError("weights and sample sizes differ")
    w = w.reshape(w.shape + (1,) * (1 + len(batch) - w.ndim))
    w = np.broadcast_to(w, (K,) + batch)
    if np.any(np.abs(np.sum(w, axis=0) - 1.0) > 1e-8):
        raise ValueError("weights must sum to one")
    return w


def weighted_sqdist(M: Manifold, m, points, w):
    return np.sum(w * M.dist(m[None], points) ** 2, axis=0)


def karcher_mean(M: Manifold, points, weights=None, *, tol: float = 1e-10, max_iter: int = 100,
                 init=None):
    """Weighted Riemannian center of mass.

    Parameters
    ----------
    points : array, shape ``(K,) + batch + point_shape``
        Samples; an independent mean is computed for every batch index.
    weights : array, shape ``(K,)`` or ``(K,) + batch``, optional
        Weights summing to one along the first axis.  Negative entries are
        allowed; the descent is then safeguarded by step halving.
    tol : float
        Stopping threshold on the Riemannian gradient norm.
    max_iter : int
        Iteration cap; :class:`MeanConvergenceError` is raised beyond it.
    init : array, optional
        Starting point; defaults to the first sample with positive weight.

    Returns
    -------
    array, shape ``batch + point_shape``
    """
    points = np.asarray(points, float)
    w = _weights(points, weights, M)
    if M.is_flat:
        return np.sum(M.scal(w) * points, axis=0)
    if isinstance(M, Circle) and np.all(w >= 0):
        return M.global_mean(points, w)
    if init is None:
        first = np.argmax(w > 0, axis=0)
        m = np.take_along_axis(points, M.scal(first)[None].astype(int), axis=0)[0]
    else:
        m = np.array(np.broadcast_to(init, points.shape[1:]), dtype=float)
    obj = weighted_sqdist(M, m, points, w)
    for _ in range(max_iter):
        V = np.sum(M.scal(w) * M.log(m[None], points), axis=0)
        gn = M.norm(m, V)
        done = gn <= tol
        if np.all(done):
            return m
        step = np.ones(gn.shape)
        for _ in range(60):
            cand = M.exp(m, M.scal(step) * V)
            cobj = weighted_sqdist(M, cand, points, w)
            ok = done | (cobj <= obj + 1e-13 * (1.0 + np.abs(obj)))
            if np.all(ok):
                break
            step = np.where(ok, step, 0.5 * step)
        m = np.where(M.scal(done), m, cand)
        obj = np.where(done, obj, cobj)
    V = np.sum(M.scal(w) * M.log(m[None], points), axis=0)
    gn = M.norm(m, V)
    if np.all(gn <= tol):
        return m
    raise MeanConvergenceError(m, gn)


def mean_approx_geodesic(M: Manifold, points, weights=None):
    """Left-to-right iterated two-point geodesic averaging.

    Exact for euclidean data and for two points.
    """
    points = np.asarray(points, float)
    w = _weights(points, weights, M)
    m = points[0]
    acc = w[0]
    for k in range(1, points.shape[0]):
        acc = acc + w[k]
        if np.any(acc == 0):
            raise ValueError("partial weight sums must not vanish")
        m = M.geopoint(m, points[k], w[k] / acc)
    return m


def intrinsic_median(M: Manifold, points, weights=None, *, tol: float = 1e-12,
                     max_iter: int = 2000):
    """Weighted intrinsic median ``argmin sum_k w_k d(x, z_k)`` of one sample.

    Sample points are first tested against the subgradient optimality
    condition; otherwise a Weiszfeld iteration started at the best sample
    point is run, keeping the best iterate.
    """
    z = np.asarray(points, float)
    K = z.shape[0]
    w = _weights(z, weights, M)
    w = np.asarray(w, float).reshape(K)

    def obj(x):
        return float(np.sum(w * M.dist(x[None], z)))

    vals = np.array([obj(z[k]) for k in range(K)])
    best_k = int(np.argmin(vals))
    for k in np.argsort(vals, kind="stable"):
        if w[k] <= 0:
            continue
        d = M.dist(z[k][None], z)
        near = d <= 1e-14
        logs = M.log(z[k][None], z[~near])
        g = np.sum(M.scal(w[~near] / d[~near]) * logs, axis=0)
        if M.norm(z[k], g) <= np.sum(w[near]) + 1e-13:
            return z[k].copy()
    x = z[best_k].copy()
    best, best_val = x.copy(), vals[best_k]
    for _ in range(max_iter):
        d = np.maximum(M.dist(x[None], z), 1e-300)
        a = w / d
        V = np.sum(M.scal(a) * M.log(x[None], z), axis=0) / np.sum(a)
        step = 1.0
        while True:
            xn = M.exp(x, step * V)
            fn = obj(xn)
            if fn <= best_val + 1e-15 or step < 1e-10:
                break
            step *= 0.5
        moved = M.dist(x, xn)
        x = xn
        if fn < best_val:
            best, best_val = x.copy(), fn
        if moved <= tol:
            break
    return best


def mean_adjoint(M: Manifold, m, points, weights, cot, *, cond_limit: float = 1e8):
    """Pull a cotangent at the weighted mean back to the sample points.

    Differentiates the optimality condition ``sum_j w_j log_m(z_j) = 0``
    implicitly.  Returns an array of shape ``(K,) + batch + point_shape``
    whose ``j``-th entry is the gradient of ``F(mean)`` with respect to
    ``z_j`` when ``cot`` is the gradient of ``F`` at the mean.  Falls back to
    finite differences of the mean map when the linear system is
    ill-conditioned.
    """
    z = np.asarray(points, float)
    m = np.asarray(m, float)
    w = _weights(z, weights, M)
    E = M.tangent_basis(m)
    B, Kc = M.jacobi_frame(m[None], z)
    C = M.inner(M.expand(M.expand(m))[None], M.expand(B), M.expand(E, axis=-2)[None])
    h = beta_hess(Kc)
    H = np.einsum("j...,j...lk,j...l,j...lq->...kq", w, C, h, C)
    c = M.inner(M.expand(m), E, M.expand(cot))
    cond = np.linalg.cond(H)
    if np.any(~np.isfinite(cond) | (cond > cond_limit)):
        return _mean_adjoint_fd(M, z, w, cot)
    a = np.linalg.solve(H, c[..., None])[..., 0]
    b = np.einsum("j...lk,...k->j...l", C, a) / beta_exp(Kc)
    PB = M.transport_along(M.expand(m)[None], M.expand(M.log(m[None], z)), B)
    g = np.sum(M.scal(b) * PB, axis=-M.pdim - 1)
    return M.scal(w) * g


def _mean_adjoint_fd(M: Manifold, z, w, cot, h: float = 1e-6):
    z = np.asarray(z, float)
    if z.ndim != M.pdim + 1:
        raise ValueError("finite-difference fallback supports unbatched samples only")
    m0 = karcher_mean(M, z, w, tol=1e-14, max_iter=500)
    out = np.zeros_like(z)
    for j in range(z.shape[0]):
        Bj = M.tangent_basis(z[j])
        for e in Bj:
            zp, zm = z.copy(), z.copy()
            zp[j] = M.exp(z[j], h * e)
            zm[j] = M.exp(z[j], -h * e)
            mp = karcher_mean(M, zp, w, tol=1e-14, max_iter=500, init=m0)
            mm = karcher_mean(M, zm, w, tol=1e-14, max_iter=500, init=m0)
            dm = (M.log(m0, mp) - M.log(m0, mm)) / (2 * h)
            out[j] += M.inner(m0, cot, dm) * e
    return out

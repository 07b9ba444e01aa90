"""Differentials of geodesic maps via Jacobi fields.

Every function works on raw point arrays and broadcasts over leading axes.
Weights depend on ``K``, the sectional curvature of each frame plane times
the squared geodesic length, so one set of formulas covers flat, positively
and negatively curved directions.
"""

from __future__ import annotations

import numpy as np

_SMALL = 1e-10


def _sfun(K, pos, neg, series):
    K = np.asarray(K, float)
    s = np.sqrt(np.abs(K))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(K > 0, pos(s), neg(s))
    return np.where(np.abs(K) < _SMALL, series, out)


def beta_first(K, t):
    """Normal Jacobi weight of d/dx [x, y]_t."""
    t = np.asarray(t, float)[..., None] if np.ndim(t) else float(t)
    u = 1.0 - t
    return _sfun(K, lambda s: np.sin(u * s) / np.sin(s), lambda s: np.sinh(u * s) / np.sinh(s),
                 u * (1.0 + (1.0 - u**2) * K / 6.0))


def beta_second(K, t):
    """Normal Jacobi weight of d/dy [x, y]_t."""
    t = np.asarray(t, float)[..., None] if np.ndim(t) else float(t)
    return _sfun(K, lambda s: np.sin(t * s) / np.sin(s), lambda s: np.sinh(t * s) / np.sinh(s),
                 t * (1.0 + (1.0 - t**2) * K / 6.0))


def beta_exp(K):
    """Weight of the differential of v -> exp_x(v)."""
    return _sfun(K, lambda s: np.sin(s) / s, lambda s: np.sinh(s) / s, 1.0 - np.asarray(K) / 6.0)


def beta_hess(K):
    """Eigenvalues of the Hessian of d^2(., y) / 2."""
    return _sfun(K, lambda s: s / np.tan(s), lambda s: s / np.tanh(s), 1.0 - np.asarray(K) / 3.0)


def _combine(M, w, B):
    return np.sum(M.scal(w) * B, axis=-M.pdim - 1)


def _setup(M, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    B, K = M.jacobi_frame(x, y)
    v = M.log(x, y)
    return x, y, v, B, K


def _at_t(M, x, v, B, t):
    tv = M.scal(t) * v if np.ndim(t) else t * v
    g = M.exp(x, tv)
    Bt = M.transport_along(M.expand(x), M.expand(tv), B)
    return g, Bt


def geo_diff_first(M, x, y, t, xi):
    """Differential of x -> [x, y]_t applied to ``xi`` (at x); result at [x, y]_t."""
    x, y, v, B, K = _setup(M, x, y)
    _, Bt = _at_t(M, x, v, B, t)
    c = M.inner(M.expand(x), B, M.expand(xi))
    return _combine(M, c * beta_first(K, t), Bt)


def geo_diff_second(M, x, y, t, eta):
    """Differential of y -> [x, y]_t applied to ``eta`` (at y); result at [x, y]_t."""
    x, y, v, B, K = _setup(M, x, y)
    _, Bt = _at_t(M, x, v, B, t)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(y), By, M.expand(eta))
    return _combine(M, c * beta_second(K, t), Bt)


def geo_adj(M, x, y, t, zeta):
    """Both adjoints of ``(x, y) -> [x, y]_t`` from one frame computation."""
    if M.is_flat:
        zeta = np.asarray(zeta, float)
        t = M.scal(t) if np.ndim(t) else t
        return (1.0 - t) * zeta, t * zeta
    x, y, v, B, K = _setup(M, x, y)
    g, Bt = _at_t(M, x, v, B, t)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(g), Bt, M.expand(zeta))
    return _combine(M, c * beta_first(K, t), B), _combine(M, c * beta_second(K, t), By)


def geo_adj_first(M, x, y, t, zeta):
    """Adjoint of :func:`geo_diff_first`; ``zeta`` at [x, y]_t, result at x."""
    if M.is_flat:
        return (1.0 - (M.scal(t) if np.ndim(t) else t)) * np.asarray(zeta, float)
    x, y, v, B, K = _setup(M, x, y)
    g, Bt = _at_t(M, x, v, B, t)
    c = M.inner(M.expand(g), Bt, M.expand(zeta))
    return _combine(M, c * beta_first(K, t), B)


def geo_adj_second(M, x, y, t, zeta):
    """Adjoint of :func:`geo_diff_second`; ``zeta`` at [x, y]_t, result at y."""
    if M.is_flat:
        return (M.scal(t) if np.ndim(t) else t) * np.asarray(zeta, float)
    x, y, v, B, K = _setup(M, x, y)
    g, Bt = _at_t(M, x, v, B, t)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(g), Bt, M.expand(zeta))
    return _combine(M, c * beta_second(K, t), By)


def exp_diff(M, x, v, zeta):
    """Differential of v -> exp_x(v) applied to ``zeta`` (at x); result at exp_x(v)."""
    x = np.asarray(x, float)
    y = M.exp(x, v)
    B, K = M.jacobi_frame(x, y)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(x), B, M.expand(zeta))
    return _combine(M, c * beta_exp(K), By)


def exp_adj(M, x, v, zeta):
    x = np.asarray(x, float)
    y = M.exp(x, v)
    B, K = M.jacobi_frame(x, y)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(y), By, M.expand(zeta))
    return _combine(M, c * beta_exp(K), B)


def log_diff(M, x, y, eta):
    """Differential of y -> log_x(y) applied to ``eta`` (at y); result at x."""
    x, y, v, B, K = _setup(M, x, y)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(y), By, M.expand(eta))
    return _combine(M, c / beta_exp(K), B)


def log_adj(M, x, y, zeta):
    x, y, v, B, K = _setup(M, x, y)
    By = M.transport_along(M.expand(x), M.expand(v), B)
    c = M.inner(M.expand(x), B, M.expand(zeta))
    return _combine(M, c / beta_exp(K), By)


def hess_half_sqdist(M, x, y, xi):
    """Riemannian Hessian of d^2(., y)/2 at x applied to ``xi``."""
    x, y, v, B, K = _setup(M, x, y)
    c = M.inner(M.expand(x), B, M.expand(xi))
    return _combine(M, c * beta_hess(K), B)


def fd_differential(M, fn, x, xi, M_out=None, h: float = 1e-5):
    """Central finite-difference differential of a point map ``fn`` at ``x``."""
    M_out = M_out or M
    scale = np.maximum(M.norm(x, xi), 1e-300)
    hh = h / scale
    fp = fn(M.exp(x, M.scal(hh) * xi))
    fm = fn(M.exp(x, -M.scal(hh) * xi))
    f0 = fn(x)
    hh_out = M_out.scal(hh)
    return (M_out.log(f0, fp) - M_out.log(f0, fm)) / (2.0 * hh_out)

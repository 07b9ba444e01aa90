"""Seeded noise models for synthetic experiments."""

from __future__ import annotations

import numpy as np

from .manifolds import Circle, Manifold, Sphere, wrap_angle


def _rng(seed):
    return np.random.default_rng(seed)


def _householder_to(mu, v):
    """Map vectors ``v`` (rows, last axis) by the reflection taking ``e_last`` to ``mu``."""
    n = len(mu)
    e = np.zeros(n)
    e[-1] = 1.0
    w = e - mu
    nw = np.linalg.norm(w)
    if nw < 1e-15:
        return v
    w /= nw
    return v - 2.0 * np.outer(v @ w, w)


def _vmf_cosines(rng, kappa, d, count):
    """Cosine of the angle to the mean direction on ``S^{d-1}``."""
    if d == 3:
        # inverse CDF of the density proportional to exp(kappa t) on [-1, 1]
        xi = rng.random(count)
        return 1.0 + np.log(xi + (1.0 - xi) * np.exp(-2.0 * kappa)) / kappa
    b = (d - 1) / (2.0 * kappa + np.sqrt(4.0 * kappa**2 + (d - 1) ** 2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + (d - 1) * np.log(1.0 - x0**2)
    out = np.empty(count)
    filled = 0
    while filled < count:
        m = count - filled
        z = rng.beta((d - 1) / 2.0, (d - 1) / 2.0, m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(m)
        ok = kappa * w + (d - 1) * np.log(1.0 - x0 * w) - c >= np.log(u)
        k = int(ok.sum())
        out[filled:filled + k] = w[ok]
        filled += k
    return out


def sample_vmf(mu, kappa: float, count: int, seed=None):
    """Von Mises-Fisher draws with mean direction ``mu`` on a sphere; shape ``(count, d)``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    mu = np.asarray(mu, float)
    mu = mu / np.linalg.norm(mu)
    d = len(mu)
    rng = _rng(seed)
    t = np.clip(_vmf_cosines(rng, kappa, d, count), -1.0, 1.0)
    v = rng.standard_normal((count, d - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = np.concatenate([np.sqrt(1.0 - t**2)[:, None] * v, t[:, None]], axis=1)
    return _householder_to(mu, pts)


def sample_von_mises(mu: float, kappa: float, count: int, seed=None):
    """Von Mises angles around ``mu``, wrapped to ``[-pi, pi)``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return wrap_angle(_rng(seed).vonmises(mu, kappa, count))


def sample_tangent_gaussian(M: Manifold, p, sigma: float, count: int, seed=None):
    """``exp_p`` of Gaussian tangent vectors with coordinate deviation ``sigma``."""
    p = np.broadcast_to(np.asarray(p, float), (count,) + M.point_shape)
    rng = _rng(seed)
    return M.exp(p, M.random_tangent(rng, p, sigma))


def add_noise(M: Manifold, x, kind: str = "gaussian", level: float = 0.1, seed=None):
    """Corrupt every sample of ``x`` independently.

    ``kind`` is ``'gaussian'`` (tangent Gaussian, ``level`` = sigma),
    ``'vmf'`` (spheres, ``level`` = kappa) or ``'von_mises'`` (circle,
    ``level`` = kappa).
    """
    x = np.asarray(x, float)
    batch = x.shape[: x.ndim - M.pdim]
    flat = x.reshape((-1,) + M.point_shape)
    rng = _rng(seed)
    if kind == "gaussian":
        out = M.exp(flat, M.random_tangent(rng, flat, level))
    elif kind == "vmf":
        if not isinstance(M, Sphere):
            raise ValueError("von Mises-Fisher noise needs a sphere")
        out = np.stack([sample_vmf(m, level, 1, rng)[0] for m in flat])
    elif kind == "von_mises":
        if not isinstance(M, Circle):
            raise ValueError("von Mises noise needs the circle")
        out = wrap_angle(flat + rng.vonmises(0.0, level, flat.shape))
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return out.reshape(batch + M.point_shape)

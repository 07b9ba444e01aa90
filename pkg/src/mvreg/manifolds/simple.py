"""Euclidean space, the circle and spheres."""

from __future__ import annotations

import numpy as np

from .base import Manifold

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Wrap angles into ``[-pi, pi)``."""
    return np.mod(np.asarray(a, dtype=float) + np.pi, TWO_PI) - np.pi


class Euclidean(Manifold):
    kind = "euclidean"
    is_flat = True

    def __init__(self, d: int = 1):
        if int(d) < 1:
            raise ValueError("dimension must be positive")
        self.d = int(d)
        self.point_shape = (self.d,)
        self.ambient_dim = self.intrinsic_dim = self.d

    @property
    def name(self) -> str:
        return f"euclidean({self.d})"

    def exp(self, x, v):
        return np.asarray(x, float) + v

    def log(self, x, y):
        return np.asarray(y, float) - x

    def dist(self, x, y):
        return np.linalg.norm(np.asarray(y, float) - x, axis=-1)

    def inner(self, x, v, w):
        return np.sum(np.asarray(v) * w, axis=-1)

    def transport_along(self, x, v, w):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v), np.shape(w))
        return np.broadcast_to(w, shape).astype(float, copy=True)

    def project(self, x):
        return np.array(x, dtype=float)

    def to_tangent(self, x, v):
        return np.array(v, dtype=float)

    def tangent_basis(self, x):
        b = self.batch_shape(x)
        return np.broadcast_to(np.eye(self.d), b + (self.d, self.d)).copy()

    def jacobi_frame(self, x, y):
        b = np.broadcast_shapes(self.batch_shape(x), self.batch_shape(y))
        return np.broadcast_to(np.eye(self.d), b + (self.d, self.d)).copy(), np.zeros(b + (self.d,))

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.standard_normal(size + (self.d,))

    def constraint_violation(self, x):
        return np.zeros(self.batch_shape(x))

    def tangent_violation(self, x, v):
        return np.zeros(np.broadcast_shapes(self.batch_shape(x), self.batch_shape(v)))


class Circle(Manifold):
    """The unit circle, points stored as a single angle in ``[-pi, pi)``."""

    kind = "circle"
    point_shape = (1,)
    ambient_dim = 1
    intrinsic_dim = 1

    def exp(self, x, v):
        return wrap_angle(np.asarray(x, float) + v)

    def log(self, x, y):
        d = wrap_angle(np.asarray(y, float) - x)
        # antipodal tie goes to the positive direction
        return np.where(d <= -np.pi, np.pi, d)

    def is_cut(self, x, y):
        d = wrap_angle(np.asarray(y, float) - x)[..., 0]
        return np.abs(np.abs(d) - np.pi) < 1e-12

    def dist(self, x, y):
        return np.abs(self.log(x, y))[..., 0]

    def inner(self, x, v, w):
        return np.sum(np.asarray(v) * w, axis=-1)

    def transport_along(self, x, v, w):
        shape = np.broadcast_shapes(np.shape(x), np.shape(v), np.shape(w))
        return np.broadcast_to(w, shape).astype(float, copy=True)

    def project(self, x):
        return wrap_angle(x)

    def to_tangent(self, x, v):
        return np.array(v, dtype=float)

    def tangent_basis(self, x):
        return np.ones(self.batch_shape(x) + (1, 1))

    def jacobi_frame(self, x, y):
        b = np.broadcast_shapes(self.batch_shape(x), self.batch_shape(y))
        return np.ones(b + (1, 1)), np.zeros(b + (1,))

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return rng.uniform(-np.pi, np.pi, size + (1,))

    def constraint_violation(self, x):
        a = np.asarray(x, float)[..., 0]
        return np.maximum(np.maximum(-np.pi - a, a - np.pi), 0.0)

    def tangent_violation(self, x, v):
        return np.zeros(np.broadcast_shapes(self.batch_shape(x), self.batch_shape(v)))

    def global_mean(self, points, weights):
        """Exact weighted intrinsic mean on the circle for nonnegative weights.

        The objective is piecewise quadratic in the angle; on each arc between
        consecutive antipodes of the data it has a closed-form stationary
        point, so the global minimiser is found by enumerating those
        candidates.  ``points`` has shape ``(K, ..., 1)`` and ``weights``
        broadcasts to ``(K, ...)``.
        """
        a = np.asarray(points, float)[..., 0]
        w = np.broadcast_to(np.asarray(weights, float), a.shape)
        K = a.shape[0]
        batch = a.shape[1:]
        a2 = a.reshape(K, -1)
        w2 = w.reshape(K, -1)
        wsum = np.sum(w2, axis=0)
        # candidate arcs: the circle cut at the antipodes of all points
        cuts = np.sort(wrap_angle(a2 + np.pi), axis=0)
        lo = cuts
        hi = np.concatenate([cuts[1:], cuts[:1] + TWO_PI], axis=0)
        best_val = np.full(a2.shape[1], np.inf)
        best = np.zeros(a2.shape[1])
        for c in range(K):
            mid = 0.5 * (lo[c] + hi[c])
            # unwrap every point to within pi of the arc midpoint
            un = mid + wrap_angle(a2 - mid)
            cand = np.sum(w2 * un, axis=0) / wsum
            cand = np.clip(cand, lo[c], hi[c])
            val = np.sum(w2 * wrap_angle(a2 - cand) ** 2, axis=0)
            better = val < best_val - 1e-15
            best = np.where(better, cand, best)
            best_val = np.where(better, val, best_val)
        return wrap_angle(best).reshape(batch + (1,))


class Sphere(Manifold):
    """Unit sphere S^n embedded in R^(n+1)."""

    kind = "sphere"

    def __init__(self, n: int = 2):
        if int(n) < 1:
            raise ValueError("sphere dimension must be positive")
        self.n = int(n)
        self.point_shape = (self.n + 1,)
        self.ambient_dim = self.n + 1
        self.intrinsic_dim = self.n

    @property
    def name(self) -> str:
        return f"sphere({self.n})"

    def exp(self, x, v):
        x = np.asarray(x, float)
        th = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(th > 0, th, 1.0)
        sinc = np.where(th > 1e-8, np.sin(th) / safe, 1.0 - th**2 / 6.0)
        return self._exact_exp(x, v, self.project(x * np.cos(th) + v * sinc))

    def _log_parts(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        c = np.sum(x * y, axis=-1, keepdims=True)
        u = y - c * x
        nu = np.linalg.norm(u, axis=-1, keepdims=True)
        th = np.arctan2(nu, c)
        return c, u, nu, th

    def log(self, x, y):
        c, u, nu, th = self._log_parts(x, y)
        safe = np.where(nu > 0, nu, 1.0)
        fac = np.where(nu > 1e-12, th / safe, 1.0)
        v = u * fac
        anti = (nu[..., 0] <= 1e-14) & (c[..., 0] < 0)
        if np.any(anti):
            xb = np.broadcast_to(x, v.shape)
            e = self.tangent_basis(xb)[..., 0, :]
            v = np.where(anti[..., None], np.pi * e, v)
        return self._exact_log(x, y, v)

    def is_cut(self, x, y):
        c, u, nu, th = self._log_parts(x, y)
        return (nu[..., 0] <= 1e-14) & (c[..., 0] < 0)

    def dist(self, x, y):
        same = np.all(np.asarray(x) == np.asarray(y), axis=-1)
        return np.where(same, 0.0, self._log_parts(x, y)[3][..., 0])

    def inner(self, x, v, w):
        return np.sum(np.asarray(v) * w, axis=-1)

    def transport_along(self, x, v, w):
        x = np.asarray(x, float)
        th = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(th > 0, th, 1.0)
        e = v / safe
        a = np.sum(e * w, axis=-1, keepdims=True)
        return w + a * ((np.cos(th) - 1.0) * e - np.sin(th) * x)

    def project(self, x):
        x = np.asarray(x, float)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def to_tangent(self, x, v):
        return v - np.sum(np.asarray(x) * v, axis=-1, keepdims=True) * x

    def tangent_basis(self, x):
        x = np.asarray(x, float)
        m = self.n + 1
        s = np.where(x[..., :1] >= 0, 1.0, -1.0)
        u = x.copy()
        u[..., :1] += s
        uu = np.sum(u * u, axis=-1)[..., None, None]
        H = np.eye(m) - 2.0 * u[..., :, None] * u[..., None, :] / uu
        # columns 1..n of the reflection are orthonormal and orthogonal to x
        return np.swapaxes(H[..., :, 1:], -1, -2)

    def jacobi_frame(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        v = self.log(x, y)
        th = np.linalg.norm(v, axis=-1)
        B0 = self.tangent_basis(x)[..., 0, :]
        e = np.where((th > 0)[..., None], v / np.where(th > 0, th, 1.0)[..., None], B0)
        B = self.adapted_frame(x, e)
        K = np.repeat((th**2)[..., None], self.n, axis=-1)
        K[..., 0] = 0.0
        return B, K

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        return self.project(rng.standard_normal(size + (self.n + 1,)))

    def constraint_violation(self, x):
        return np.abs(np.linalg.norm(x, axis=-1) - 1.0)

    def tangent_violation(self, x, v):
        return np.abs(np.sum(np.asarray(x) * v, axis=-1))

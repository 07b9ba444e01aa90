"""Finite products of manifolds with flattened point storage."""

from __future__ import annotations

import numpy as np

from .base import Manifold


class Product(Manifold):
    """Product manifold; a point is the concatenation of flattened factor points."""

    kind = "product"

    def __init__(self, factors):
        flat = []
        for f in factors:
            flat.extend(f.factors if isinstance(f, Product) else [f])
        if len(flat) < 2:
            raise ValueError("a product needs at least two factors")
        self.factors = tuple(flat)
        sizes = [int(np.prod(f.point_shape)) for f in self.factors]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.point_shape = (int(self._offsets[-1]),)
        self.ambient_dim = sum(f.ambient_dim for f in self.factors)
        self.intrinsic_dim = sum(f.intrinsic_dim for f in self.factors)
        self._dims = [f.intrinsic_dim for f in self.factors]

    @property
    def name(self) -> str:
        return "product(" + ",".join(f.name for f in self.factors) + ")"

    def split(self, x):
        x = np.asarray(x, float)
        out = []
        for k, f in enumerate(self.factors):
            a, b = self._offsets[k], self._offsets[k + 1]
            out.append(x[..., a:b].reshape(x.shape[:-1] + f.point_shape))
        return out

    def join(self, parts):
        flat = [p.reshape(p.shape[: p.ndim - f.pdim] + (-1,)) for p, f in zip(parts, self.factors)]
        shape = np.broadcast_shapes(*[p.shape[:-1] for p in flat])
        return np.concatenate([np.broadcast_to(p, shape + p.shape[-1:]) for p in flat], axis=-1)

    def _map(self, fn, *args):
        parts = [self.split(a) for a in args]
        return self.join([fn(f, *[p[k] for p in parts]) for k, f in enumerate(self.factors)])

    def exp(self, x, v):
        return self._map(lambda f, a, b: f.exp(a, b), x, v)

    def log(self, x, y):
        return self._map(lambda f, a, b: f.log(a, b), x, y)

    def is_cut(self, x, y):
        xs, ys = self.split(x), self.split(y)
        flags = [f.is_cut(a, b) for f, a, b in zip(self.factors, xs, ys)]
        return np.logical_or.reduce(np.broadcast_arrays(*flags))

    def dist(self, x, y):
        xs, ys = self.split(x), self.split(y)
        return np.sqrt(sum(f.dist(a, b) ** 2 for f, a, b in zip(self.factors, xs, ys)))

    def inner(self, x, v, w):
        xs, vs, ws = self.split(x), self.split(v), self.split(w)
        return sum(f.inner(a, b, c) for f, a, b, c in zip(self.factors, xs, vs, ws))

    def transport_along(self, x, v, w):
        return self._map(lambda f, a, b, c: f.transport_along(a, b, c), x, v, w)

    def project(self, x):
        return self._map(lambda f, a: f.project(a), x)

    def to_tangent(self, x, v):
        return self._map(lambda f, a, b: f.to_tangent(a, b), x, v)

    def _block(self, per_factor, batch):
        """Embed factor bases into the flattened product tangent representation."""
        total = self.point_shape[0]
        out = np.zeros(batch + (self.intrinsic_dim, total))
        row = 0
        for k, (f, B) in enumerate(zip(self.factors, per_factor)):
            d = f.intrinsic_dim
            a, b = self._offsets[k], self._offsets[k + 1]
            Bf = B.reshape(B.shape[: B.ndim - f.pdim] + (-1,))
            out[..., row:row + d, a:b] = Bf
            row += d
        return out

    def tangent_basis(self, x):
        xs = self.split(x)
        return self._block([f.tangent_basis(a) for f, a in zip(self.factors, xs)], self.batch_shape(x))

    def jacobi_frame(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        xs, ys = self.split(x), self.split(y)
        frames = [f.jacobi_frame(a, b) for f, a, b in zip(self.factors, xs, ys)]
        B = self._block([fr[0] for fr in frames], self.batch_shape(x))
        K = np.concatenate([fr[1] for fr in frames], axis=-1)
        return B, K

    def random_point(self, rng, size=()):
        return self.join([f.random_point(rng, size) for f in self.factors])

    def constraint_violation(self, x):
        return np.maximum.reduce([f.constraint_violation(a) for f, a in zip(self.factors, self.split(x))])

    def tangent_violation(self, x, v):
        xs, vs = self.split(x), self.split(v)
        return np.maximum.reduce([f.tangent_violation(a, b) for f, a, b in zip(self.factors, xs, vs)])

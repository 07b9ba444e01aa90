"""Matrix manifolds: rotations SO(3) and symmetric positive definite matrices."""

from __future__ import annotations

import numpy as np

from .base import Manifold


def hat(w):
    w = np.asarray(w, float)
    z = np.zeros(w.shape[:-1])
    return np.stack(
        [
            np.stack([z, -w[..., 2], w[..., 1]], -1),
            np.stack([w[..., 2], z, -w[..., 0]], -1),
            np.stack([-w[..., 1], w[..., 0], z], -1),
        ],
        -2,
    )


def vee(O):
    O = np.asarray(O, float)
    return 0.5 * np.stack(
        [O[..., 2, 1] - O[..., 1, 2], O[..., 0, 2] - O[..., 2, 0], O[..., 1, 0] - O[..., 0, 1]], -1
    )


def rodrigues(w):
    """Matrix exponential of ``hat(w)``."""
    w = np.asarray(w, float)
    th = np.linalg.norm(w, axis=-1)[..., None, None]
    K = hat(w)
    safe = np.where(th > 0, th, 1.0)
    small = th < 1e-6
    a = np.where(small, 1.0 - th**2 / 6.0, np.sin(th) / safe)
    b = np.where(small, 0.5 - th**2 / 24.0, (1.0 - np.cos(th)) / safe**2)
    return np.eye(3) + a * K + b * (K @ K)


def _quaternion(Q):
    """Unit quaternion (w, x, y, z) with w >= 0 of rotation matrices."""
    Q = np.asarray(Q, float)
    tr = np.trace(Q, axis1=-2, axis2=-1)
    d0, d1, d2 = Q[..., 0, 0], Q[..., 1, 1], Q[..., 2, 2]
    cands = []
    w = 0.5 * np.sqrt(np.maximum(1.0 + tr, 1e-300))
    cands.append(np.stack([w, (Q[..., 2, 1] - Q[..., 1, 2]) / (4 * w),
                           (Q[..., 0, 2] - Q[..., 2, 0]) / (4 * w), (Q[..., 1, 0] - Q[..., 0, 1]) / (4 * w)], -1))
    x = 0.5 * np.sqrt(np.maximum(1.0 + d0 - d1 - d2, 1e-300))
    cands.append(np.stack([(Q[..., 2, 1] - Q[..., 1, 2]) / (4 * x), x,
                           (Q[..., 0, 1] + Q[..., 1, 0]) / (4 * x), (Q[..., 0, 2] + Q[..., 2, 0]) / (4 * x)], -1))
    y = 0.5 * np.sqrt(np.maximum(1.0 - d0 + d1 - d2, 1e-300))
    cands.append(np.stack([(Q[..., 0, 2] - Q[..., 2, 0]) / (4 * y), (Q[..., 0, 1] + Q[..., 1, 0]) / (4 * y),
                           y, (Q[..., 1, 2] + Q[..., 2, 1]) / (4 * y)], -1))
    z = 0.5 * np.sqrt(np.maximum(1.0 - d0 - d1 + d2, 1e-300))
    cands.append(np.stack([(Q[..., 1, 0] - Q[..., 0, 1]) / (4 * z), (Q[..., 0, 2] + Q[..., 2, 0]) / (4 * z),
                           (Q[..., 1, 2] + Q[..., 2, 1]) / (4 * z), z], -1))
    choice = np.argmax(np.stack([tr, d0, d1, d2], -1), axis=-1)
    q = np.choose(choice[..., None], cands)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def rotvec(Q):
    """Rotation vector of ``Q`` with angle in ``[0, pi]`` and an ambiguity flag."""
    q = _quaternion(Q)
    w = q[..., 0]
    v = q[..., 1:]
    nv = np.linalg.norm(v, axis=-1)
    th = 2.0 * np.arctan2(nv, w)
    fac = np.where(nv > 1e-12, th / np.where(nv > 0, nv, 1.0), 2.0 / np.maximum(w, 1e-300))
    r = v * fac[..., None]
    flag = w < 1e-12
    if np.any(flag):
        # half-turn: choose the axis sign with the first significant component positive
        idx = np.argmax(np.abs(r) > 1e-9, axis=-1)
        lead = np.take_along_axis(r, idx[..., None], -1)[..., 0]
        r = np.where((flag & (lead < 0))[..., None], -r, r)
    return r, flag


class Rotations3(Manifold):
    """SO(3) with the bi-invariant metric <A, B> = tr(A^T B) / 2."""

    kind = "rotations3"
    point_shape = (3, 3)
    ambient_dim = 9
    intrinsic_dim = 3

    @property
    def name(self) -> str:
        return "rotations3"

    def exp(self, x, v):
        x = np.asarray(x, float)
        w = vee(np.swapaxes(x, -1, -2) @ v)
        return self._exact_exp(x, v, self.project(x @ rodrigues(w)))

    def log(self, x, y):
        x = np.asarray(x, float)
        r, _ = rotvec(np.swapaxes(x, -1, -2) @ y)
        return self._exact_log(x, y, x @ hat(r))

    def is_cut(self, x, y):
        return rotvec(np.swapaxes(np.asarray(x, float), -1, -2) @ y)[1]

    def dist(self, x, y):
        q = _quaternion(np.swapaxes(np.asarray(x, float), -1, -2) @ y)
        return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])

    def inner(self, x, v, w):
        return 0.5 * np.sum(np.asarray(v) * w, axis=(-2, -1))

    def transport_along(self, x, v, w):
        x = np.asarray(x, float)
        xt = np.swapaxes(x, -1, -2)
        E = rodrigues(0.5 * vee(xt @ v))
        return x @ E @ (xt @ w) @ E

    def project(self, x):
        U, _, Vt = np.linalg.svd(np.asarray(x, float))
        d = np.sign(np.linalg.det(U @ Vt))
        U = U.copy()
        U[..., :, 2] *= d[..., None]
        return U @ Vt

    def to_tangent(self, x, v):
        x = np.asarray(x, float)
        O = np.swapaxes(x, -1, -2) @ v
        return x @ (0.5 * (O - np.swapaxes(O, -1, -2)))

    def tangent_basis(self, x):
        x = np.asarray(x, float)
        return self.expand(x) @ hat(np.eye(3))

    def jacobi_frame(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        r, _ = rotvec(np.swapaxes(x, -1, -2) @ y)
        th = np.linalg.norm(r, axis=-1)
        axis = np.where((th > 0)[..., None], r / np.where(th > 0, th, 1.0)[..., None], np.array([1.0, 0, 0]))
        B = self.adapted_frame(x, x @ hat(axis))
        K = np.repeat((th**2 / 4.0)[..., None], 3, axis=-1)
        K[..., 0] = 0.0
        return B, K

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        q = rng.standard_normal(size + (4,))
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        w, v = q[..., :1], q[..., 1:]
        th = 2.0 * np.arctan2(np.linalg.norm(v, axis=-1, keepdims=True), w)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        return rodrigues(v / np.where(nv > 0, nv, 1.0) * th)

    def constraint_violation(self, x):
        x = np.asarray(x, float)
        orth = np.max(np.abs(np.swapaxes(x, -1, -2) @ x - np.eye(3)), axis=(-2, -1))
        return np.maximum(orth, np.abs(np.linalg.det(x) - 1.0))

    def tangent_violation(self, x, v):
        O = np.swapaxes(np.asarray(x, float), -1, -2) @ v
        return np.max(np.abs(O + np.swapaxes(O, -1, -2)), axis=(-2, -1))


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _funm(A, f):
    w, U = np.linalg.eigh(_sym(A))
    return (U * f(w)[..., None, :]) @ np.swapaxes(U, -1, -2)


def _sqrt_pair(P):
    w, U = np.linalg.eigh(_sym(np.asarray(P, float)))
    Ut = np.swapaxes(U, -1, -2)
    s = np.sqrt(w)
    return (U * s[..., None, :]) @ Ut, (U * (1.0 / s)[..., None, :]) @ Ut


class SPD(Manifold):
    """Symmetric positive definite matrices with the affine-invariant metric."""

    kind = "spd"

    def __init__(self, n: int = 3):
        if int(n) < 1:
            raise ValueError("matrix size must be positive")
        self.n = int(n)
        self.point_shape = (self.n, self.n)
        self.ambient_dim = self.n * self.n
        self.intrinsic_dim = self.n * (self.n + 1) // 2
        iu = np.triu_indices(self.n)
        E = np.zeros((self.intrinsic_dim, self.n, self.n))
        for k, (i, j) in enumerate(zip(*iu)):
            if i == j:
                E[k, i, i] = 1.0
            else:
                E[k, i, j] = E[k, j, i] = np.sqrt(0.5)
        self._E = E
        self._iu = iu

    @property
    def name(self) -> str:
        return f"spd({self.n})"

    def exp(self, x, v):
        s, si = _sqrt_pair(x)
        return self._exact_exp(x, v, self.project(s @ _funm(si @ v @ si, np.exp) @ s))

    def log(self, x, y):
        s, si = _sqrt_pair(x)
        return self._exact_log(x, y, _sym(s @ _funm(si @ y @ si, np.log) @ s))

    def dist(self, x, y):
        _, si = _sqrt_pair(x)
        w = np.linalg.eigvalsh(_sym(si @ y @ si))
        d = np.sqrt(np.sum(np.log(w) ** 2, axis=-1))
        same = np.all(np.asarray(x) == np.asarray(y), axis=(-2, -1))
        return np.where(same, 0.0, d)

    def inner(self, x, v, w):
        A = np.linalg.solve(x, v)
        B = np.linalg.solve(x, w)
        return np.sum(A * np.swapaxes(B, -1, -2), axis=(-2, -1))

    def transport_along(self, x, v, w):
        s, si = _sqrt_pair(x)
        E = s @ _funm(0.5 * (si @ v @ si), np.exp) @ si
        return _sym(E @ w @ np.swapaxes(E, -1, -2))

    def project(self, x):
        return _funm(np.asarray(x, float), lambda w: np.maximum(w, 1e-12))

    def to_tangent(self, x, v):
        return _sym(np.asarray(v, float))

    def tangent_basis(self, x):
        s, _ = _sqrt_pair(x)
        s = self.expand(s)
        return s @ self._E @ s

    def jacobi_frame(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        s, si = _sqrt_pair(x)
        lw, U = np.linalg.eigh(_sym(si @ y @ si))
        lw = np.log(lw)
        Ue = self.expand(U)
        B = self.expand(s) @ Ue @ self._E @ np.swapaxes(Ue, -1, -2) @ self.expand(s)
        i, j = self._iu
        K = -0.25 * (lw[..., i] - lw[..., j]) ** 2
        return _sym(B), K

    def random_point(self, rng, size=()):
        size = (size,) if np.isscalar(size) else tuple(size)
        A = rng.standard_normal(size + (self.n, self.n)) * 0.5
        return _funm(_sym(A), np.exp)

    def constraint_violation(self, x):
        x = np.asarray(x, float)
        asym = np.max(np.abs(x - np.swapaxes(x, -1, -2)), axis=(-2, -1))
        lo = np.linalg.eigvalsh(_sym(x))[..., 0]
        return np.maximum(asym, np.where(lo > 0, 0.0, np.abs(lo) + 1.0))

    def tangent_violation(self, x, v):
        v = np.asarray(v, float)
        return np.max(np.abs(v - np.swapaxes(v, -1, -2)), axis=(-2, -1))

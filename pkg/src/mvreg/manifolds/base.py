"""Abstract Riemannian manifold interface.

Points are stored as numpy arrays whose trailing axes have the manifold's
``point_shape``; every operation broadcasts over arbitrary leading axes so a
whole signal or image is processed in one call.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np


class ManifoldError(ValueError):
    """Raised for invalid geometric input (descriptor or base-point mismatch)."""


class Manifold(ABC):
    """Base class of all concrete geometries.

    Subclasses set ``kind``, ``point_shape``, ``ambient_dim`` and
    ``intrinsic_dim`` and implement the abstract primitives.  Tangent vectors
    live in the ambient representation of the tangent space at their base.
    """

    kind: str = ""
    point_shape: tuple[int, ...] = ()
    ambient_dim: int = 0
    intrinsic_dim: int = 0
    is_flat: bool = False

    # -- identity ---------------------------------------------------------------
    @property
    def name(self) -> str:
        return self.kind

    def __repr__(self) -> str:
        return self.name

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Manifold) and other.name == self.name

    def __hash__(self) -> int:
        return hash(self.name)

    # -- shape helpers ----------------------------------------------------------
    @property
    def pdim(self) -> int:
        return len(self.point_shape)

    def batch_shape(self, x: np.ndarray) -> tuple[int, ...]:
        return np.shape(x)[: np.ndim(x) - self.pdim]

    def scal(self, a) -> np.ndarray:
        """Append singleton axes so a per-point scalar broadcasts against points."""
        a = np.asarray(a, dtype=float)
        return a.reshape(a.shape + (1,) * self.pdim)

    def expand(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        """Insert a batch axis just before the point axes (``axis=-1``)."""
        return np.expand_dims(x, axis=np.ndim(x) - self.pdim + axis + 1)

    def _axes(self):
        return tuple(range(-self.pdim, 0))

    def _exact_exp(self, x, v, out):
        """``out`` with ``x`` itself wherever ``v`` vanishes, so ``exp_x(0) = x`` bitwise."""
        zero = ~np.any(np.asarray(v) != 0, axis=self._axes())
        return np.where(self.scal(zero), x, out) if np.any(zero) else out

    def _exact_log(self, x, y, out):
        """``out`` with exact zeros wherever ``x`` and ``y`` coincide."""
        same = np.all(np.asarray(x) == np.asarray(y), axis=self._axes())
        return np.where(self.scal(same), 0.0, out) if np.any(same) else out

    # -- primitives -------------------------------------------------------------
    @abstractmethod
    def exp(self, x, v): ...

    @abstractmethod
    def log(self, x, y): ...

    @abstractmethod
    def inner(self, x, v, w): ...

    @abstractmethod
    def transport_along(self, x, v, w):
        """Parallel transport of ``w`` along ``t -> exp_x(t v)`` to ``t = 1``."""

    @abstractmethod
    def project(self, x): ...

    @abstractmethod
    def to_tangent(self, x, v): ...

    @abstractmethod
    def tangent_basis(self, x):
        """Orthonormal basis of T_x, shape ``batch + (dim,) + point_shape``."""

    @abstractmethod
    def jacobi_frame(self, x, y):
        """Orthonormal frame at ``x`` diagonalising the Jacobi operator.

        Returns ``(basis, K)`` where ``K[..., l]`` is the sectional curvature
        of the plane spanned by ``basis[l]`` and the geodesic direction,
        multiplied by ``dist(x, y)**2``.
        """

    @abstractmethod
    def random_point(self, rng: np.random.Generator, size=()): ...

    @abstractmethod
    def constraint_violation(self, x): ...

    @abstractmethod
    def tangent_violation(self, x, v): ...

    # -- derived operations -----------------------------------------------------
    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def dist(self, x, y):
        return self.norm(x, self.log(x, y))

    def geopoint(self, x, y, t):
        return self.exp(x, self.scal(t) * self.log(x, y))

    def transport(self, x, y, w):
        return self.transport_along(x, self.log(x, y), w)

    def is_cut(self, x, y):
        return np.zeros(np.broadcast_shapes(self.batch_shape(x), self.batch_shape(y)), bool)

    def log_with_flag(self, x, y):
        return self.log(x, y), self.is_cut(x, y)

    def zero_tangent(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def coords(self, x, v):
        """Coordinates of ``v`` in ``tangent_basis(x)``."""
        B = self.tangent_basis(x)
        return self.inner(self.expand(x), B, self.expand(v))

    def from_coords(self, x, c):
        B = self.tangent_basis(x)
        return np.sum(self.scal(c) * B, axis=-self.pdim - 1)

    def random_tangent(self, rng: np.random.Generator, x, scale: float = 1.0):
        B = self.tangent_basis(x)
        c = rng.standard_normal(B.shape[: B.ndim - self.pdim]) * scale
        return np.sum(self.scal(c) * B, axis=-self.pdim - 1)

    def adapted_frame(self, x, e):
        """Rotate ``tangent_basis(x)`` so that its first vector equals unit ``e``.

        Uses a stable Householder reflection in the coordinate space.
        """
        B = self.tangent_basis(x)
        c = self.inner(self.expand(x), B, self.expand(e))  # batch + (dim,)
        dim = c.shape[-1]
        s = np.where(c[..., :1] >= 0, 1.0, -1.0)
        u = c.copy()
        u[..., :1] += s
        uu = np.sum(u * u, axis=-1, keepdims=True)
        H = np.eye(dim) - 2.0 * u[..., :, None] * u[..., None, :] / uu[..., None]
        # column 0 of H is -s * c
        H[..., :, 0] *= -s
        ax = B.ndim - self.pdim - 1
        Bm = np.moveaxis(B, ax, -1)  # batch + point_shape + (dim,)
        Hb = H.reshape(H.shape[:-2] + (1,) * self.pdim + H.shape[-2:])
        newB = np.matmul(Bm[..., None, :], Hb)[..., 0, :]
        return np.moveaxis(newB, -1, ax)

    def validate_point(self, x, tol: float = 1e-10) -> None:
        if np.shape(x)[np.ndim(x) - self.pdim:] != self.point_shape:
            raise ManifoldError(f"expected point shape {self.point_shape} for {self.name}")
        if np.any(self.constraint_violation(x) > tol):
            raise ManifoldError(f"point violates the {self.name} constraint")

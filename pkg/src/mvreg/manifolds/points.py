"""Immutable point and tangent-vector value objects with a functional API."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jacobi
from .base import Manifold, ManifoldError


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A point on ``manifold`` stored by its ambient coordinates."""

    coords: np.ndarray
    manifold: Manifold
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(self.coords))
        if self.coords.shape != self.manifold.point_shape:
            raise ManifoldError(f"coords must have shape {self.manifold.point_shape}")
        if self.check:
            self.manifold.validate_point(self.coords)

    @property
    def descriptor(self) -> Manifold:
        return self.manifold


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Tangent vector at ``base`` in the ambient representation."""

    base: ManifoldPoint
    coeffs: np.ndarray
    non_unique: bool = False
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs))
        M = self.base.manifold
        if self.coeffs.shape != M.point_shape:
            raise ManifoldError(f"coeffs must have shape {M.point_shape}")
        if self.check and M.tangent_violation(self.base.coords, self.coeffs) > 1e-10 * max(
            1.0, float(np.max(np.abs(self.coeffs)))
        ):
            raise ManifoldError("vector is not tangent at its base point")

    @property
    def norm(self) -> float:
        return float(self.base.manifold.norm(self.base.coords, self.coeffs))


def _same(*objs) -> Manifold:
    ms = [o.manifold if isinstance(o, ManifoldPoint) else o.base.manifold for o in objs]
    if any(m != ms[0] for m in ms[1:]):
        raise ManifoldError("descriptor mismatch")
    return ms[0]


def _same_base(p: ManifoldPoint, v: TangentVector) -> None:
    if v.base is not p and not np.array_equal(v.base.coords, p.coords):
        raise ManifoldError("tangent vector is not based at the given point")


def point(manifold: Manifold, coords) -> ManifoldPoint:
    return ManifoldPoint(coords, manifold)


def exp_map(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    M = _same(p, v)
    _same_base(p, v)
    return ManifoldPoint(M.exp(p.coords, v.coeffs), M, check=False)


def log_map(p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    M = _same(p, q)
    v, flag = M.log_with_flag(p.coords, q.coords)
    return TangentVector(p, v, non_unique=bool(flag), check=False)


def dist(p: ManifoldPoint, q: ManifoldPoint) -> float:
    M = _same(p, q)
    return float(M.dist(p.coords, q.coords))


def geopoint(p: ManifoldPoint, q: ManifoldPoint, t: float) -> ManifoldPoint:
    M = _same(p, q)
    return ManifoldPoint(M.geopoint(p.coords, q.coords, float(t)), M, check=False)


def parallel_transport(p: ManifoldPoint, q: ManifoldPoint, v: TangentVector) -> TangentVector:
    M = _same(p, q, v)
    _same_base(p, v)
    if M.is_cut(p.coords, q.coords):
        raise ManifoldError("transport between cut points is ambiguous")
    return TangentVector(q, M.transport(p.coords, q.coords, v.coeffs), check=False)


def inner(p: ManifoldPoint, v: TangentVector, w: TangentVector) -> float:
    M = _same(p, v, w)
    _same_base(p, v)
    _same_base(p, w)
    return float(M.inner(p.coords, v.coeffs, w.coeffs))


_DIFFS = {
    "exp": (jacobi.exp_diff, jacobi.exp_adj),
    "log": (jacobi.log_diff, jacobi.log_adj),
    "geopoint-first": (jacobi.geo_diff_first, jacobi.geo_adj_first),
    "geopoint-second": (jacobi.geo_diff_second, jacobi.geo_adj_second),
}


def diff_of_map(map_id: str, anchors, direction: TangentVector, t: float = 0.5,
                adjoint: bool = False) -> TangentVector:
    """Directional derivative (or its adjoint) of a geometric map.

    ``exp``: anchors ``(x, v)`` with ``v`` a TangentVector at x; derivative in
    the tangent argument.  ``log``: anchors ``(x, y)``; derivative of
    ``y -> log_x(y)``.  ``geopoint-first`` / ``geopoint-second``: anchors
    ``(x, y)`` and parameter ``t``.
    """
    if map_id not in _DIFFS:
        raise ManifoldError(f"unsupported map {map_id!r}")
    fwd, adj = _DIFFS[map_id]
    fn = adj if adjoint else fwd
    a, b = anchors
    M = a.manifold
    d = direction.coeffs
    if map_id == "exp":
        y = M.exp(a.coords, b.coeffs)
        out = fn(M, a.coords, b.coeffs, d)
        base = a.coords if adjoint else y
    elif map_id == "log":
        out = fn(M, a.coords, b.coords, d)
        base = b.coords if adjoint else a.coords
    else:
        out = fn(M, a.coords, b.coords, t, d)
        g = M.geopoint(a.coords, b.coords, t)
        if adjoint:
            base = a.coords if map_id == "geopoint-first" else b.coords
        else:
            base = g
    return TangentVector(ManifoldPoint(base, M, check=False), out, check=False)

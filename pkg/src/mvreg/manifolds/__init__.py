"""Riemannian geometries and geometric primitives."""

from __future__ import annotations

import re

from .base import Manifold, ManifoldError
from .matrix import SPD, Rotations3
from .points import (
    ManifoldPoint,
    TangentVector,
    diff_of_map,
    dist,
    exp_map,
    geopoint,
    inner,
    log_map,
    parallel_transport,
    point,
)
from .product import Product
from .simple import Circle, Euclidean, Sphere, wrap_angle

__all__ = [
    "Manifold", "ManifoldError", "Euclidean", "Circle", "Sphere", "Rotations3", "SPD", "Product",
    "ManifoldPoint", "TangentVector", "exp_map", "log_map", "dist", "geopoint", "parallel_transport",
    "inner", "diff_of_map", "point", "parse_manifold", "wrap_angle",
]


def _split_args(s: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    out.append(cur)
    return [a.strip() for a in out if a.strip()]


def parse_manifold(text: str) -> Manifold:
    """Build a manifold from its descriptor string, e.g. ``"product(circle,euclidean(2))"``."""
    s = text.strip().lower().replace(" ", "")
    m = re.fullmatch(r"([a-z0-9]+)(?:\((.*)\))?", s)
    if not m:
        raise ManifoldError(f"cannot parse manifold {text!r}")
    kind, arg = m.group(1), m.group(2)
    try:
        if kind == "euclidean":
            return Euclidean(int(arg) if arg else 1)
        if kind == "circle" and not arg:
            return Circle()
        if kind == "sphere":
            return Sphere(int(arg) if arg else 2)
        if kind in ("rotations3", "so3") and not arg:
            return Rotations3()
        if kind == "spd":
            return SPD(int(arg) if arg else 3)
        if kind == "product" and arg:
            return Product([parse_manifold(a) for a in _split_args(arg)])
    except ValueError as exc:
        raise ManifoldError(str(exc)) from exc
    raise ManifoldError(f"unknown manifold {text!r}")

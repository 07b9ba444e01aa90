"""Raster previews written as binary PPM."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .manifolds import SPD, Circle, Euclidean, Manifold, Product, Rotations3, Sphere


def _hue(t):
    """HSV hue in ``[0, 1)`` at full saturation and value to RGB in ``[0, 1]``."""
    h = (np.asarray(t) % 1.0) * 6.0
    c = np.ones_like(h)
    x = 1.0 - np.abs(h % 2.0 - 1.0)
    z = np.zeros_like(h)
    sector = np.floor(h).astype(int) % 6
    table = [(c, x, z), (x, c, z), (z, c, x), (z, x, c), (x, z, c), (c, z, x)]
    out = np.zeros(h.shape + (3,))
    for s, (r, g, b) in enumerate(table):
        m = sector == s
        out[m] = np.stack([r[m], g[m], b[m]], -1)
    return out


def _gray(v):
    return np.repeat(np.asarray(v)[..., None], 3, axis=-1)


def _normalise(v):
    lo, hi = float(np.min(v)), float(np.max(v))
    return np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)


def anisotropy(S):
    """Fractional anisotropy of SPD matrices (0 for isotropic, towards 1 for degenerate)."""
    lam = np.linalg.eigvalsh(S)
    n = lam.shape[-1]
    dev = lam - lam.mean(axis=-1, keepdims=True)
    return np.sqrt(n / (n - 1.0)) * np.linalg.norm(dev, axis=-1) / np.linalg.norm(lam, axis=-1)


def render(M: Manifold, x) -> np.ndarray:
    """RGB image (``uint8``, shape ``(rows, cols, 3)``); signals give a single row.

    Circle values are shown as hues, SPD values as anisotropy gray levels,
    sphere points by their (first three) coordinates, rotations by their
    rotation vectors and euclidean data by min-max scaled channels.
    """
    x = np.asarray(x, float)
    if isinstance(M, Product):
        return render(M.factors[0], M.split(x)[0])
    batch = x.shape[: x.ndim - M.pdim]
    if len(batch) == 1:
        x = x[None]
    if isinstance(M, Circle):
        rgb = _hue((x[..., 0] + np.pi) / (2.0 * np.pi))
    elif isinstance(M, SPD):
        rgb = _gray(np.clip(anisotropy(x), 0.0, 1.0))
    elif isinstance(M, Sphere):
        c = np.zeros(x.shape[:-1] + (3,))
        k = min(3, x.shape[-1])
        c[..., :k] = x[..., :k]
        rgb = (c + 1.0) / 2.0
    elif isinstance(M, Rotations3):
        I = np.broadcast_to(np.eye(3), x.shape)
        v = M.log(I, x)
        w = np.stack([v[..., 2, 1], v[..., 0, 2], v[..., 1, 0]], -1)
        rgb = (w / np.pi + 1.0) / 2.0
    elif isinstance(M, Euclidean):
        if M.d == 3:
            rgb = np.stack([_normalise(x[..., i]) for i in range(3)], -1)
        else:
            rgb = _gray(_normalise(x[..., 0]))
    else:
        raise ValueError(f"no preview for {M.name}")
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def ppm_bytes(rgb) -> bytes:
    rgb = np.asarray(rgb, np.uint8)
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def write_ppm(path, rgb) -> None:
    Path(path).write_bytes(ppm_bytes(rgb))


def save_preview(path, M: Manifold, x) -> None:
    write_ppm(path, render(M, x))

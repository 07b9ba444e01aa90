"""Closed-form proximal maps of distance-based terms.

All maps move points along geodesics; they broadcast over leading axes.
"""

from __future__ import annotations

import numpy as np

from .manifolds import Manifold


def _check_lam(lam):
    if np.any(np.asarray(lam) < 0):
        raise ValueError("proximal parameter must be nonnegative")


def data_step(d, lam, q):
    """Geodesic fraction ``t`` of the data prox for ``d = dist(x, f)``."""
    d = np.asarray(d, float)
    lam = np.asarray(lam, float)
    if q == 2:
        return np.broadcast_to(lam / (1.0 + lam), d.shape).copy()
    if q == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(d > 0, np.minimum(lam / np.where(d > 0, d, 1.0), 1.0), 0.0)
    if q < 1:
        raise ValueError("data exponent must be at least 1")
    # phi'(t) = -d^q (1-t)^(q-1) + t d^2 / lam is increasing on [0, 1]
    lo = np.zeros(np.broadcast_shapes(d.shape, lam.shape))
    hi = np.ones_like(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(80):
            t = 0.5 * (lo + hi)
            g = -(d**q) * (1.0 - t) ** (q - 1) + t * d**2 / lam
            pos = g > 0
            hi = np.where(pos, t, hi)
            lo = np.where(pos, lo, t)
    t = 0.5 * (lo + hi)
    return np.where((d > 0) & (lam > 0), t, 0.0)


def prox_data(M: Manifold, x, f, lam, q: float = 2):
    """Prox of ``(lam/q) d(., f)^q`` at ``x``: the point ``[x, f]_t``."""
    _check_lam(lam)
    t = data_step(M.dist(x, f), lam, q)
    return M.geopoint(x, f, t)


def prox_pair(M: Manifold, x1, x2, lam_alpha):
    """Prox of ``lam*alpha*d(y1, y2)``: both points move by ``min(lam*alpha, d/2)``."""
    _check_lam(lam_alpha)
    d = M.dist(x1, x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(d > 0, np.minimum(lam_alpha / np.where(d > 0, d, 1.0), 0.5), 0.0)
    return M.geopoint(x1, x2, t), M.geopoint(x2, x1, t)


def prox_pair_quadratic(M: Manifold, x1, x2, lam_alpha):
    """Prox of ``(lam*alpha/2) d(y1, y2)^2``."""
    _check_lam(lam_alpha)
    t = np.asarray(lam_alpha, float) / (1.0 + 2.0 * np.asarray(lam_alpha, float))
    t = np.broadcast_to(t, np.shape(M.dist(x1, x2)))
    return M.geopoint(x1, x2, t), M.geopoint(x2, x1, t)


def huber(d, tau, omega):
    """Huber function: ``omega d^2 / (2 tau)`` below ``tau``, linear with slope ``omega`` above."""
    d = np.asarray(d, float)
    return np.where(d <= tau, omega * d**2 / (2.0 * tau), omega * (d - tau / 2.0))


def prox_huber(M: Manifold, x, y, lam, tau: float, omega: float, pair: bool = False):
    """Prox of a Huber distance term.

    Data variant (``pair=False``): prox of ``lam * h(d(., y))`` at ``x``.
    Pair variant: prox of ``lam * h(d(y1, y2))`` at ``(x, y)``, returning the
    two moved points.  ``lam`` already includes any regularization weight.
    """
    _check_lam(lam)
    if tau <= 0 or omega < 0:
        raise ValueError("huber needs tau > 0 and omega >= 0")
    d = M.dist(x, y)
    lam = np.asarray(lam, float)
    a = omega * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        if not pair:
            t = np.where(d <= tau + a, a / (tau + a), a / np.where(d > 0, d, 1.0))
            t = np.where(d > 0, np.minimum(t, 1.0), 0.0)
            return M.geopoint(x, y, t)
        t = np.where(d <= tau + 2 * a, a / (tau + 2 * a), a / np.where(d > 0, d, 1.0))
        t = np.where(d > 0, np.minimum(t, 0.5), 0.0)
    return M.geopoint(x, y, t), M.geopoint(y, x, t)

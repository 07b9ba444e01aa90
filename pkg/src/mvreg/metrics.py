"""Quality measures for reconstructions."""

from __future__ import annotations

import numpy as np

from .manifolds import Manifold


def delta_snr(M: Manifold, h, f, u) -> float:
    """``10 log10(sum d(h, f)^2 / sum d(h, u)^2)`` in dB; ``inf`` when ``u = h``."""
    h, f, u = (np.asarray(a, float) for a in (h, f, u))
    if not (h.shape == f.shape == u.shape):
        raise ValueError("ground truth, data and reconstruction shapes differ")
    num = float(np.sum(M.dist(h, f) ** 2))
    den = float(np.sum(M.dist(h, u) ** 2))
    if den == 0:
        return float("inf")
    if num == 0:
        return float("-inf")
    return 10.0 * np.log10(num / den)


def mean_error(M: Manifold, h, u) -> float:
    """Mean geodesic distance between ground truth and reconstruction."""
    return float(np.mean(M.dist(np.asarray(h, float), np.asarray(u, float))))

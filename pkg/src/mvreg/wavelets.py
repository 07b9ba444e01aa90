"""Interpolatory wavelets for manifold-valued signals and sparse regularization.

A signal ``u`` of length ``2^R n0 + 1`` is thinned to levels
``r = 0..R``; level ``r`` holds the samples ``u[2^(R-r) n]``.  Odd samples of
level ``r`` are predicted from level ``r-1`` by a weighted mean with the odd
mask entries and the detail is the scaled logarithm of the actual sample at
the prediction.  Signals of other lengths are padded at the right end by
geodesic reflection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .inverse import ForwardOperator, Regularizer, solve_inverse
from .manifolds import Manifold
from .solvers import SolverResult, SolverSchedule
from .stats import karcher_mean
from .terms import CountTerm, DetailTerm, Family, PairTerm, PowerTerm

EPS0 = 1e-12


@dataclass(frozen=True)
class SubdivisionScheme:
    """Interpolatory subdivision mask ``{offset: s_offset}``.

    Parameters
    ----------
    mask : dict
        Mask entries; even entries must be ``s_0 = 1`` and zero otherwise,
        odd entries must sum to one.
    boundary : {'shift', 'renormalize'}
        Near the ends the stencil either slides inwards and uses Lagrange
        weights on the shifted nodes (keeps the polynomial reproduction of
        Dubuc-Deslauriers masks) or drops missing nodes and renormalizes.
    """

    mask: dict
    boundary: str = "shift"
    name: str = ""

    def __post_init__(self):
        mask = {int(k): float(v) for k, v in self.mask.items() if v != 0}
        object.__setattr__(self, "mask", mask)
        even = {k: v for k, v in mask.items() if k % 2 == 0}
        odd = {k: v for k, v in mask.items() if k % 2}
        if even != {0: 1.0}:
            raise ValueError("interpolatory masks need s_0 = 1 and all other even entries 0")
        if not odd or abs(sum(odd.values()) - 1.0) > 1e-12:
            raise ValueError("odd mask entries must sum to 1")
        if self.boundary not in ("shift", "renormalize"):
            raise ValueError("boundary must be 'shift' or 'renormalize'")

    @classmethod
    def midpoint(cls) -> "SubdivisionScheme":
        return cls({0: 1.0, -1: 0.5, 1: 0.5}, name="midpoint")

    @classmethod
    def dd3(cls) -> "SubdivisionScheme":
        return cls({0: 1.0, -3: -1 / 16, -1: 9 / 16, 1: 9 / 16, 3: -1 / 16}, name="dd3")

    @property
    def half_support(self) -> int:
        return (max(abs(k) for k in self.mask if k % 2) + 1) // 2

    def stencil(self, m: int, L: int):
        """Coarse nodes and weights predicting the sample between nodes ``m`` and ``m + 1``."""
        h = self.half_support
        nodes = np.arange(m - h + 1, m + h + 1)
        w = np.array([self.mask.get(2 * m + 1 - 2 * j, 0.0) for j in nodes])
        keep = w != 0
        nodes, w = nodes[keep], w[keep]
        if nodes[0] >= 0 and nodes[-1] < L:
            return nodes, w
        if self.boundary == "renormalize":
            ok = (nodes >= 0) & (nodes < L)
            return nodes[ok], w[ok] / w[ok].sum()
        size = min(len(nodes), L)
        lo = min(max(m - size // 2 + 1, 0), L - size)
        nodes = np.arange(lo, lo + size)
        x = m + 0.5
        w = np.array([np.prod([(x - b) / (a - b) for b in nodes if b != a]) for a in nodes])
        return nodes, w


def _stencil_groups(scheme: SubdivisionScheme, L: int):
    """Group odd outputs of a level with ``L`` coarse samples by identical weights."""
    groups: dict = {}
    for m in range(L - 1):
        nodes, w = scheme.stencil(m, L)
        key = tuple(np.round(w, 15))
        g = groups.setdefault(key, (w, [], []))
        g[1].append(m)
        g[2].append(nodes)
    return [(w, np.array(ms), np.array(nd)) for w, ms, nd in groups.values()]


def _predict(M: Manifold, c, scheme: SubdivisionScheme):
    """Predictions of the ``L - 1`` odd samples from coarse samples ``c``."""
    L = len(c)
    out = np.empty((L - 1,) + M.point_shape)
    for w, ms, nodes in _stencil_groups(scheme, L):
        if len(w) == 2 and w[0] == w[1]:
            out[ms] = M.geopoint(c[nodes[:, 0]], c[nodes[:, 1]], 0.5)
        else:
            pts = np.swapaxes(c[nodes], 0, 1)
            out[ms] = karcher_mean(M, pts, w, tol=1e-13, max_iter=200)
    return out


def subdivide(M: Manifold, coarse, scheme: SubdivisionScheme | None = None):
    """One round of interpolatory subdivision; returns ``2 L - 1`` samples."""
    scheme = scheme or SubdivisionScheme.midpoint()
    c = np.asarray(coarse, float)
    if len(c) < 2:
        raise ValueError("need at least two coarse samples")
    out = np.empty((2 * len(c) - 1,) + M.point_shape)
    out[::2] = c
    out[1::2] = _predict(M, c, scheme)
    return out


# -- layout ------------------------------------------------------------------------
def dyadic_layout(n: int, levels: int | None = None) -> tuple[int, int, int]:
    """``(R, n0, padded length)`` with ``padded = 2^R n0 + 1 >= n``."""
    if n < 3:
        raise ValueError("signals need at least three samples")
    R = int(np.floor(np.log2(n - 1))) if levels is None else int(levels)
    if R < 1 or 2**R > n - 1:
        raise ValueError(f"{R} levels do not fit a signal of length {n}")
    n0 = -(-(n - 1) // 2**R)
    return R, n0, 2**R * n0 + 1


def reflect_pad(M: Manifold, u, length: int):
    """Extend ``u`` to ``length`` samples by geodesic reflection about its last sample."""
    u = np.asarray(u, float)
    P = length - len(u)
    if P <= 0:
        return u.copy()
    if P > len(u) - 1:
        raise ValueError("padding longer than the signal")
    last = np.broadcast_to(u[-1], (P,) + M.point_shape)
    mirror = u[-2:-P - 2:-1]
    return np.concatenate([u, M.exp(last, -M.log(last, mirror))])


@dataclass
class WaveletPyramid:
    """Coarse samples and per-level details (tangent vectors at the predictions)."""

    coarse: np.ndarray
    details: list
    bases: list
    scheme: SubdivisionScheme
    length: int
    extra: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return len(self.details)


def wavelet_analyze(M: Manifold, u, scheme: SubdivisionScheme | None = None,
                    levels: int | None = None) -> WaveletPyramid:
    """Interpolatory wavelet transform ``d_{n,r} = 2^{-r/2} log_{pred}(actual)``."""
    scheme = scheme or SubdivisionScheme.midpoint()
    u = np.asarray(u, float)
    R, n0, Np = dyadic_layout(len(u), levels)
    up = reflect_pad(M, u, Np)
    details, bases = [], []
    for r in range(1, R + 1):
        c = up[:: 2 ** (R - r + 1)]
        fine = up[2 ** (R - r):: 2 ** (R - r + 1)]
        pred = _predict(M, c, scheme)
        if np.any(M.is_cut(pred, fine)):
            raise ValueError(f"prediction and sample on level {r} are cut points")
        details.append(2.0 ** (-r / 2) * M.log(pred, fine))
        bases.append(pred)
    return WaveletPyramid(up[:: 2**R].copy(), details, bases, scheme, len(u))


def wavelet_synthesize(M: Manifold, pyr: WaveletPyramid):
    """Inverse transform; returns a signal of the original length."""
    c = np.asarray(pyr.coarse, float)
    for r, d in enumerate(pyr.details, start=1):
        pred = _predict(M, c, pyr.scheme)
        out = np.empty((2 * len(c) - 1,) + M.point_shape)
        out[::2] = c
        out[1::2] = M.exp(pred, 2.0 ** (r / 2) * np.asarray(d, float))
        c = out
    return c[: pyr.length]


def _detail_norms(M, pyr):
    return [M.norm(b, d) for b, d in zip(pyr.bases, pyr.details)]


def w_energy(M: Manifold, u, alpha=(1.0, 1.0), mu: float = 1.0, p: float = 1.0,
             scheme: SubdivisionScheme | None = None, levels: int | None = None) -> float:
    """``a1 sum_{n,r} 2^{rp(mu + 1/2 - 1/p)} |d_{n,r}|^p + a2 sum_n d(c_{n-1}, c_n)^p``."""
    a1, a2 = alpha
    pyr = wavelet_analyze(M, u, scheme, levels)
    val = sum(2.0 ** (r * p * (mu + 0.5 - 1.0 / p)) * float(np.sum(nr**p))
              for r, nr in enumerate(_detail_norms(M, pyr), start=1))
    c = pyr.coarse
    return a1 * val + a2 * float(np.sum(M.dist(c[:-1], c[1:]) ** p))


def w0_energy(M: Manifold, u, alpha=(1.0, 1.0), scheme: SubdivisionScheme | None = None,
              levels: int | None = None, eps: float = EPS0) -> float:
    """``a1 #{nonzero details} + a2 #{coarse jumps}``."""
    a1, a2 = alpha
    pyr = wavelet_analyze(M, u, scheme, levels)
    n_det = sum(int(np.sum(nr > eps)) for nr in _detail_norms(M, pyr))
    c = pyr.coarse
    return a1 * n_det + a2 * int(np.sum(M.dist(c[:-1], c[1:]) > eps))


# -- regularization ------------------------------------------------------------------
def wavelet_families(n: int, alpha=(1.0, 1.0), mu: float = 1.0, p: float | str = 1.0,
                     scheme: SubdivisionScheme | None = None, levels: int | None = None) -> list[Family]:
    """Detail and coarse-difference families over a padded signal of ``n`` samples.

    ``p='l0'`` selects the counting penalty.  The distance from prediction to
    sample is ``2^{r/2} |d_{n,r}|``, which is folded into the weights.
    """
    scheme = scheme or SubdivisionScheme.midpoint()
    a1, a2 = alpha
    R, n0, Np = dyadic_layout(n, levels)
    l0 = p == "l0"
    fams = []
    for r in range(1, R + 1):
        step = 2 ** (R - r)
        L = 2 ** (r - 1) * n0 + 1
        for w, ms, nodes in _stencil_groups(scheme, L):
            idx = np.column_stack([(2 * ms + 1) * step, nodes * 2 * step])
            term = DetailTerm(w)
            if l0:
                term, wt = CountTerm(term), a1
            else:
                wt = a1 * 2.0 ** (r * p * (mu - 1.0 / p))
                term = term if p == 1 else PowerTerm(term, p)
            fams.append(Family(term, idx, weight=wt, name=f"detail{r}"))
    k = np.arange(n0) * 2**R
    pair = CountTerm(PairTerm()) if l0 else (PairTerm() if p == 1 else PowerTerm(PairTerm(), p))
    for parity in (0, 1):
        sel = k[parity::2]
        fams.append(Family(pair, np.column_stack([sel, sel + 2**R]), weight=a2, name=f"coarse:{parity}"))
    return [fm for fm in fams if len(fm) and np.any(fm.weight)]


@dataclass(frozen=True)
class WaveletRegularizer(Regularizer):
    """``W^{mu,p}`` (or the counting variant for ``p='l0'``) on univariate signals."""

    alpha1: float
    alpha2: float
    mu: float = 1.0
    p: float | str = 1.0
    scheme: SubdivisionScheme = field(default_factory=SubdivisionScheme.midpoint)
    levels: int | None = None

    def extra(self, M, u0):
        u0 = np.asarray(u0, float)
        _, _, Np = dyadic_layout(len(u0), self.levels)
        return reflect_pad(M, u0, Np)[len(u0):]

    def families(self, M, shape):
        if len(shape) != 1:
            raise ValueError("wavelet regularization is univariate")
        return wavelet_families(shape[0], (self.alpha1, self.alpha2), self.mu, self.p, self.scheme, self.levels)

    def unpack(self, M, E, shape):
        return {"padding": E}


def denoise_wavelet(M: Manifold, f, alpha=(1.0, 1.0), mu: float = 1.0, p: float | str = 1.0,
                    q: float = 2, A: ForwardOperator | None = None,
                    scheme: SubdivisionScheme | None = None, levels: int | None = None,
                    engine: str = "cppa", schedule: SolverSchedule | None = None) -> SolverResult:
    """Wavelet sparse regularization ``(1/q) d(A u, f)^q + W(u)``.

    Parameters
    ----------
    alpha : (float, float)
        Weights of the detail and coarse-difference parts.
    p : float or 'l0'
        Exponent of the detail norms, or ``'l0'`` for the counting penalty.
    A : ForwardOperator, optional
        Defaults to the identity (pure denoising).  Padding slots beyond
        the signal carry no data term.
    """
    f = np.asarray(f, float)
    reg = WaveletRegularizer(alpha[0], alpha[1], mu, p, scheme or SubdivisionScheme.midpoint(), levels)
    A = A or ForwardOperator.identity(len(f))
    return solve_inverse(M, A, f, reg, q, schedule, engine)

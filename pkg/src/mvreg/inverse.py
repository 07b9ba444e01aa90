"""Manifold forward operators and Tikhonov-Phillips type reconstruction.

A forward operator is a real matrix with unit row sums; it acts on a
manifold-valued signal by taking, for every row, the weighted Riemannian
center of mass of the signal with the row entries as weights.  Images are
serialized in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .higher_order import TGVWeights, canonical_tips, stgv_families, tv2_families
from .manifolds import Manifold
from .solvers import ENGINES, SolverResult, SolverSchedule, fbs, fbs_traj
from .stats import MeanConvergenceError, karcher_mean
from .terms import (
    Atom,
    DataTerm,
    Family,
    PairTerm,
    RowMeanDataTerm,
    TruncatedPairTerm,
    family_grad,
    family_value,
    make_atom,
)
from .tv import DIAGONAL_WEIGHT, _coupled_families, _pair_families, atoms_from_families

ROW_SUM_TOL = 1e-12
INVERSE_ENGINES = ("fbs", "fbs_traj", "cppa", "pppa", "subgradient")


@dataclass(frozen=True, eq=False)
class ForwardOperator:
    """``K x N`` matrix with unit row sums.

    Parameters
    ----------
    matrix : array, shape ``(K, N)``
        Weights; entries may be negative.
    shape : tuple, optional
        Grid shape of the unknown (``(N,)`` for signals, ``(n, m)`` for
        serialized images).
    bandwidth : int, optional
        Half width of the band for convolution-type operators.
    """

    matrix: np.ndarray
    shape: tuple | None = None
    bandwidth: int | None = None

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2:
            raise ValueError("forward operator must be a matrix")
        err = np.abs(A.sum(axis=1) - 1.0)
        if np.any(err > ROW_SUM_TOL):
            bad = int(np.argmax(err))
            raise ValueError(f"row {bad} sums to {A[bad].sum()!r}, not 1")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        shape = (A.shape[1],) if self.shape is None else tuple(self.shape)
        if int(np.prod(shape)) != A.shape[1]:
            raise ValueError("grid shape does not match the number of columns")
        object.__setattr__(self, "shape", shape)

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, shape) -> "ForwardOperator":
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        return cls(np.eye(int(np.prod(shape))), shape, 0)

    def row_groups(self):
        """Rows grouped by support size: ``[(rows, cols (r, k), weights (r, k)), ...]``."""
        A = self.matrix
        nz = A != 0
        counts = nz.sum(axis=1)
        groups = []
        for k in np.unique(counts):
            rows = np.flatnonzero(counts == k)
            cols = np.array([np.flatnonzero(nz[i]) for i in rows]).reshape(len(rows), k)
            groups.append((rows, cols, A[rows[:, None], cols]))
        return groups


def _flat(M, u, n=None):
    U = np.asarray(u, float).reshape((-1,) + M.point_shape)
    if n is not None and len(U) != n:
        raise ValueError(f"expected {n} points, got {len(U)}")
    return U


def forward_apply(M: Manifold, A: ForwardOperator, u, *, tol: float = 1e-12, max_iter: int = 500):
    """Row-wise weighted means ``mean(A[i], u)``; returns ``(K,) + point_shape``."""
    U = _flat(M, u, A.N)
    out = np.empty((A.K,) + M.point_shape)
    for rows, cols, w in A.row_groups():
        pts = np.swapaxes(U[cols], 0, 1)
        try:
            out[rows] = karcher_mean(M, pts, w.T, tol=tol, max_iter=max_iter)
        except MeanConvergenceError:
            for j, i in enumerate(rows):
                try:
                    karcher_mean(M, pts[:, j], w[j], tol=tol, max_iter=max_iter)
                except MeanConvergenceError as exc:
                    exc.row = int(i)
                    exc.args = (f"row {int(i)}: {exc.args[0]}",)
                    raise
            raise
    return out


def _gauss_rows(n, sigma, width):
    if width < 1 or width % 2 == 0:
        raise ValueError("width must be a positive odd integer")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h = width // 2
    k = np.arange(-h, h + 1)
    g = np.exp(-(k**2) / (2.0 * sigma**2))
    A = np.zeros((n, n))
    for i in range(n):
        j = i + k
        ok = (j >= 0) & (j < n)
        A[i, j[ok]] = g[ok] / g[ok].sum()
    return A, h


def gaussian_kernel_operator(n: int, sigma: float = 1.0, width: int = 5) -> ForwardOperator:
    """Banded convolution with a sampled Gaussian; boundary rows are renormalized."""
    A, h = _gauss_rows(n, sigma, width)
    return ForwardOperator(A, (n,), h)


def gaussian_kernel_operator_2d(shape, sigma: float = 1.0, width: int = 5) -> ForwardOperator:
    """Separable ``width x width`` Gaussian blur acting on row-major serialized images."""
    n, m = shape
    A1, h = _gauss_rows(n, sigma, width)
    A2, _ = _gauss_rows(m, sigma, width)
    A = np.kron(A1, A2)
    # kron of unit row sums has unit row sums up to rounding
    A /= A.sum(axis=1, keepdims=True)
    return ForwardOperator(A, (n, m), h)


# -- data terms ------------------------------------------------------------------
def data_families(M: Manifold, A: ForwardOperator, f, q: float = 2) -> list[Family]:
    """Data term families, one per row support size.

    Rows with a single nonzero entry become plain distance terms so that the
    identity operator reproduces the denoising data term exactly.
    """
    if q not in (1, 2):
        raise ValueError("q must be 1 or 2")
    F = _flat(M, f, A.K)
    fams = []
    for rows, cols, w in A.row_groups():
        k = cols.shape[1]
        if k == 1:
            fams.append(Family(DataTerm(q), cols, {"f": F[rows]}, 1.0, role="data", name="data"))
        else:
            fams.append(Family(RowMeanDataTerm(k, q), cols, {"w": w, "f": F[rows]}, 1.0,
                               role="data", name=f"data-mean{k}"))
    return fams


def data_atom(M: Manifold, A: ForwardOperator, f, i: int, q: float = 2) -> Atom:
    """Atom ``(1/q) d(mean(A[i], u), f_i)^q`` for a single row ``i``."""
    F = _flat(M, f, A.K)
    cols = np.flatnonzero(A.matrix[i])
    fam = Family(RowMeanDataTerm(len(cols), q), cols[None], {"w": A.matrix[i, cols][None], "f": F[i:i + 1]},
                 1.0, role="data", name=f"data[{i}]")
    return make_atom(M, fam)


def _joint_atom(M, fams):
    """Single atom over possibly overlapping data families (value and gradient only)."""
    return Atom(value=lambda X: sum(family_value(M, fm, X) for fm in fams),
                grad=lambda X: sum(family_grad(M, fm, X) for fm in fams),
                footprint=np.unique(np.concatenate([fm.index.ravel() for fm in fams])),
                role="data", name="data")


# -- regularizers ----------------------------------------------------------------
class Regularizer:
    """Regularizer acting on the unknown stored in the first slots of ``X``.

    Subclasses may append auxiliary variables (``extra``) after the unknown.
    """

    def extra(self, M: Manifold, u0) -> np.ndarray:
        return np.zeros((0,) + M.point_shape)

    def families(self, M: Manifold, shape) -> list[Family]:
        raise NotImplementedError

    def unpack(self, M: Manifold, E, shape) -> dict:
        return {}


class NoRegularizer(Regularizer):
    def families(self, M, shape):
        return []


@dataclass(frozen=True)
class TVRegularizer(Regularizer):
    alpha: float
    p: float = 1
    diagonal: bool = False

    def families(self, M, shape):
        if len(shape) == 1:
            fams = _pair_families(shape, self.alpha, PairTerm, [(1,)])
        elif self.p != 1:
            fams = _coupled_families(shape, self.alpha, self.p)
        else:
            fams = _pair_families(shape, self.alpha, PairTerm, [(1, 0), (0, 1)])
        if self.diagonal and len(shape) == 2:
            fams += _pair_families(shape, self.alpha * DIAGONAL_WEIGHT, PairTerm, [(1, 1), (1, -1)])
        return [fm for fm in fams if len(fm)]


@dataclass(frozen=True)
class TVTV2Regularizer(Regularizer):
    """``alpha1 TV + alpha0 TV^2``; either weight may be zero."""

    alpha1: float
    alpha0: float
    p: float = 1

    def families(self, M, shape):
        fams = TVRegularizer(self.alpha1, self.p).families(M, shape) if self.alpha1 > 0 else []
        if self.alpha0 > 0:
            fams += tv2_families(shape, self.alpha0, self.p)
        return fams


@dataclass(frozen=True)
class STGVRegularizer(Regularizer):
    """Second order TGV type coupling with tips initialised canonically."""

    weights: TGVWeights

    def extra(self, M, u0):
        tips = canonical_tips(M, u0)
        tips = (tips,) if isinstance(tips, np.ndarray) else tips
        return np.concatenate([_flat(M, t) for t in tips])

    def families(self, M, shape):
        if self.weights.variant != "schild":
            raise ValueError("only the ladder variant can be minimised")
        return stgv_families(shape, self.weights)

    def unpack(self, M, E, shape):
        Y = E.reshape((-1,) + tuple(shape) + M.point_shape)
        return {"y": Y[0] if len(shape) == 1 else (Y[0], Y[1])}


@dataclass(frozen=True)
class MSRegularizer(Regularizer):
    """Truncated difference atoms ``(alpha/p) min(s^p, d^p)`` (Mumford-Shah type)."""

    alpha: float
    s: float
    p: float = 2

    def families(self, M, shape):
        offs = [(1,)] if len(shape) == 1 else [(1, 0), (0, 1)]
        fams = _pair_families(shape, self.alpha, lambda: TruncatedPairTerm(self.s, self.p), offs, name="ms")
        return [fm for fm in fams if len(fm)]


def _atoms_for(M, fams, n_inner):
    return atoms_from_families(M, fams, n_inner) if fams else []


def solve_inverse(M: Manifold, A: ForwardOperator, f, regularizer: Regularizer | None = None, q: float = 2,
                  schedule: SolverSchedule | None = None, engine: str = "fbs_traj", u0=None) -> SolverResult:
    """Minimise ``(1/q) sum_i d(mean(A[i], u), f_i)^q + R(u)``.

    Parameters
    ----------
    engine : {'fbs', 'fbs_traj', 'cppa', 'pppa', 'subgradient'}
        ``fbs`` takes one joint gradient step on the data term, ``fbs_traj``
        descends every data atom along geodesic trajectories of length
        ``lambda_k``; both follow with the regularizer proxes.  ``q=1``
        requires a proximal engine.
    u0 : array, optional
        Initial signal; defaults to ``f`` for square operators.

    Returns
    -------
    SolverResult
        ``x`` has shape ``A.shape + point_shape``; auxiliary variables of the
        regularizer are stored in ``extra``.
    """
    if engine not in INVERSE_ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    if q == 1 and engine in ("fbs", "fbs_traj"):
        raise ValueError("q = 1 has a nonsmooth data term; use a proximal engine")
    schedule = schedule or SolverSchedule()
    reg = regularizer or NoRegularizer()
    shape = A.shape
    if u0 is None:
        if A.K != A.N:
            raise ValueError("u0 is required for non-square operators")
        u0 = f
    U0 = _flat(M, u0, A.N)
    E0 = reg.extra(M, U0.reshape(shape + M.point_shape))
    X0 = np.concatenate([U0, E0])
    dfams = data_families(M, A, f, q)
    reg_atoms = _atoms_for(M, reg.families(M, shape), schedule.inner_iters)
    if engine == "fbs":
        res = fbs(M, [_joint_atom(M, dfams)], reg_atoms, X0, schedule)
    elif engine == "fbs_traj":
        res = fbs_traj(M, _atoms_for(M, dfams, schedule.inner_iters), reg_atoms, X0, schedule)
    else:
        res = ENGINES[engine](M, _atoms_for(M, dfams, schedule.inner_iters) + reg_atoms, X0, schedule)
    X = res.x
    res.x = X[: A.N].reshape(shape + M.point_shape)
    res.extra.update(reg.unpack(M, X[A.N:], shape))
    return res


def residual(M: Manifold, A: ForwardOperator, u, f) -> float:
    """``sum_i d(mean(A[i], u), f_i)^2``."""
    return float(np.sum(M.dist(forward_apply(M, A, u), _flat(M, f, A.K)) ** 2))

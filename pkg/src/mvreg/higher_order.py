"""Second-order regularizers: TV^2 and Schild-ladder TGV.

Point-level defects (``d_c``, ``d_cc``, ``d_s``, ``d_pt``, ``d_s_sym``) act
on :class:`~mvreg.manifolds.ManifoldPoint` objects.  The energies and
denoising drivers work on batched arrays through the term families of
:mod:`mvreg.terms`.

Grid terms are described by references ``(block, di, dj)`` into stacked
variable blocks (``u`` first, then the tip fields ``y``), so that signals
and images share one code path (a signal is an ``(n, 1)`` image).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifolds import Manifold, ManifoldError, ManifoldPoint, TangentVector
from .solvers import SolverResult, SolverSchedule
from .terms import (
    CoupledTerm,
    DataTerm,
    DccTerm,
    DcTerm,
    DsTerm,
    DsymTerm,
    Family,
    PairTerm,
    family_value,
    midpoint,
    schild,
)
from .tv import _flat, _run, atoms_from_families, grid_shape, tv_value_2d, TVModel


@dataclass(frozen=True)
class PointTuple:
    """Discrete tangent vector ``[base, tip]`` standing for ``log_base(tip)``."""

    base: ManifoldPoint
    tip: ManifoldPoint

    def __post_init__(self):
        if self.base.manifold != self.tip.manifold:
            raise ManifoldError("tuple points live on different manifolds")

    @property
    def manifold(self) -> Manifold:
        return self.base.manifold


@dataclass(frozen=True)
class TGVWeights:
    alpha1: float
    alpha0: float
    p: float = 1
    variant: str = "schild"

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha0 > 0):
            raise ValueError("TGV weights must be positive")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if self.variant not in ("schild", "parallel_transport"):
            raise ValueError("variant must be 'schild' or 'parallel_transport'")


def _common(*pts) -> Manifold:
    M = pts[0].manifold
    if any(q.manifold != M for q in pts[1:]):
        raise ManifoldError("descriptor mismatch")
    return M


def _midpoints(M, a, b):
    """Principal midpoint of ``a, b`` plus the opposite branch at cut pairs."""
    out = [midpoint(M, a, b)]
    if M.is_cut(a, b):
        out.append(M.exp(a, -0.5 * M.log(a, b)))
    return out


# -- point-level defects ----------------------------------------------------------
def d_c(u_minus: ManifoldPoint, u_center: ManifoldPoint, u_plus: ManifoldPoint) -> float:
    """``2 d(c, u_center)`` minimised over the midpoints ``c`` of ``u_minus, u_plus``."""
    M = _common(u_minus, u_center, u_plus)
    cs = _midpoints(M, u_minus.coords, u_plus.coords)
    return float(min(2.0 * M.dist(c, u_center.coords) for c in cs))


def d_cc(u00: ManifoldPoint, u10: ManifoldPoint, u0m: ManifoldPoint, u1m: ManifoldPoint) -> float:
    """Cross defect ``2 d([u10, u0m]_1/2, [u00, u1m]_1/2)`` over all midpoint branches."""
    M = _common(u00, u10, u0m, u1m)
    c1 = _midpoints(M, u10.coords, u0m.coords)
    c2 = _midpoints(M, u00.coords, u1m.coords)
    return float(min(2.0 * M.dist(a, b) for a in c1 for b in c2))


def schild_point(u_prev: ManifoldPoint, y_prev: ManifoldPoint, u_cur: ManifoldPoint,
                 return_flag: bool = False):
    """Ladder image ``[u_prev, [u_cur, y_prev]_1/2]_2`` of the tuple ``[u_prev, y_prev]`` at ``u_cur``.

    With ``return_flag`` a second value reports whether a cut-locus branch was chosen.
    """
    M = _common(u_prev, y_prev, u_cur)
    m = midpoint(M, u_cur.coords, y_prev.coords)
    s = M.geopoint(u_prev.coords, m, 2.0)
    pt = ManifoldPoint(M.project(s), M, check=False)
    if return_flag:
        flag = bool(M.is_cut(u_cur.coords, y_prev.coords) or M.is_cut(u_prev.coords, m))
        return pt, flag
    return pt


def d_s(t1: PointTuple, t2: PointTuple) -> float:
    """``d(t1.tip, S(t2.base, t2.tip, t1.base))``; the distance of the tips for equal bases."""
    M = _common(t1.base, t2.base)
    if np.array_equal(t1.base.coords, t2.base.coords):
        return float(M.dist(t1.tip.coords, t2.tip.coords))
    s = schild(M, t2.base.coords, t2.tip.coords, t1.base.coords)
    return float(M.dist(t1.tip.coords, s))


def d_pt(t1: PointTuple, t2: PointTuple) -> float:
    """``|log_x(y) - pt_x(log_u(v))|_x`` for ``t1 = [x, y]`` and ``t2 = [u, v]``."""
    M = _common(t1.base, t2.base)
    x, y, u, v = t1.base.coords, t1.tip.coords, t2.base.coords, t2.tip.coords
    if M.is_cut(x, y) or M.is_cut(u, v) or M.is_cut(u, x):
        raise ManifoldError("tuple or transport path meets the cut locus")
    diff = M.log(x, y) - M.transport(u, x, M.log(u, v))
    return float(M.norm(x, diff))


def d_s_sym(tx: PointTuple, ty: PointTuple, tx_prev: PointTuple, ty_prev: PointTuple) -> float:
    """Symmetrized cross defect of two tuple fields.

    The previous tuples are carried to the current bases by the ladder and
    the midpoint of the current tips is compared with the midpoint of the
    carried tips.  In euclidean space this is ``|(wx - wx') + (wy - wy')| / 2``.
    """
    M = _common(tx.base, ty.base, tx_prev.base, ty_prev.base)
    s1 = schild(M, tx_prev.base.coords, tx_prev.tip.coords, tx.base.coords)
    s2 = schild(M, ty_prev.base.coords, ty_prev.tip.coords, ty.base.coords)
    m1 = midpoint(M, tx.tip.coords, ty.tip.coords)
    return float(M.dist(m1, midpoint(M, s1, s2)))


def _tangents(pts, G):
    return tuple(TangentVector(p, g, check=False) for p, g in zip(pts, G))


def grad_dc(u_minus: ManifoldPoint, u_center: ManifoldPoint, u_plus: ManifoldPoint):
    """Riemannian gradients of ``d_c`` with respect to its three arguments (zero when degenerate)."""
    M = _common(u_minus, u_center, u_plus)
    pts = (u_minus, u_center, u_plus)
    G = DcTerm().grad(M, np.stack([p.coords for p in pts])[None], {})[0]
    return _tangents(pts, G)


def grad_ds(t1: PointTuple, t2: PointTuple):
    """Gradients of ``d_s(t1, t2)`` at ``(t1.base, t1.tip, t2.base, t2.tip)``."""
    M = _common(t1.base, t2.base)
    pts = (t1.base, t1.tip, t2.base, t2.tip)
    G = DsTerm().grad(M, np.stack([p.coords for p in pts])[None], {})[0]
    return _tangents(pts, G)


# -- grid families -----------------------------------------------------------------
def _grid(shape):
    return shape if len(shape) == 2 else (shape[0], 1)


def _ref(shape, ref, I, J):
    n, m = shape
    b, di, dj = ref
    return b * n * m + (I + di) * m + (J + dj)


def grid_families(shape, comps, p, weight, name):
    """Families for per-pixel sums ``(sum_c w_c g_c^p)^(1/p)``.

    ``comps`` holds ``(term, w, refs, valid)`` with ``valid(I, J)`` marking the
    pixels at which the component is in bounds.  For ``p = 1`` every
    component is a family of its own; otherwise pixels are grouped by the
    set of present components and coupled.
    """
    n, m = shape
    I, J = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    I, J = I.ravel(), J.ravel()
    masks = [valid(I, J) for *_, valid in comps]
    fams = []
    if p == 1:
        for (term, w, refs, _), mk in zip(comps, masks):
            if mk.any():
                idx = np.stack([_ref(shape, r, I[mk], J[mk]) for r in refs], 1)
                fams.append(Family(term, idx, weight=weight * w, name=name))
        return fams
    code = sum(mk.astype(int) << c for c, mk in enumerate(masks))
    for pattern in np.unique(code):
        if pattern == 0:
            continue
        sel = code == pattern
        present = [c for c in range(len(comps)) if (pattern >> c) & 1]
        union = []
        for c in present:
            union += [r for r in comps[c][2] if r not in union]
        idx = np.stack([_ref(shape, r, I[sel], J[sel]) for r in union], 1)
        parts = [(comps[c][0], [union.index(r) for r in comps[c][2]], comps[c][1]) for c in present]
        fams.append(Family(CoupledTerm(parts, p, len(union)), idx, weight=weight, name=name))
    return fams


def tv2_families(shape, alpha: float, p: float = 1) -> list[Family]:
    """Second-order difference families on a signal or image grid."""
    n, m = _grid(shape)
    comps = [
        (DcTerm(), 1.0, [(0, -1, 0), (0, 0, 0), (0, 1, 0)], lambda I, J: (I >= 1) & (I <= n - 2)),
    ]
    if len(shape) == 2:
        comps += [
            (DcTerm(), 1.0, [(0, 0, -1), (0, 0, 0), (0, 0, 1)], lambda I, J: (J >= 1) & (J <= m - 2)),
            (DccTerm(), 2.0, [(0, 0, 0), (0, 1, 0), (0, 0, -1), (0, 1, -1)],
             lambda I, J: (I <= n - 2) & (J >= 1)),
        ]
    return grid_families((n, m), comps, p if len(shape) == 2 else 1, alpha, "tv2")


def stgv_families(shape, w: TGVWeights) -> list[Family]:
    """First- and second-order families of Schild TGV over the blocks ``(u, y)`` or ``(u, y1, y2)``."""
    n, m = _grid(shape)
    p = w.p if len(shape) == 2 else 1
    first = [(PairTerm(), 1.0, [(0, 1, 0), (1, 0, 0)], lambda I, J: I <= n - 2)]
    second = [(DsTerm(), 1.0, [(0, 0, 0), (1, 0, 0), (0, -1, 0), (1, -1, 0)],
               lambda I, J: (I >= 1) & (I <= n - 2))]
    if len(shape) == 2:
        first.append((PairTerm(), 1.0, [(0, 0, 1), (2, 0, 0)], lambda I, J: J <= m - 2))
        second += [
            (DsTerm(), 1.0, [(0, 0, 0), (2, 0, 0), (0, 0, -1), (2, 0, -1)],
             lambda I, J: (J >= 1) & (J <= m - 2)),
            # 2^(1-p) (2 D)^p with D the halved symmetrized defect
            (DsymTerm(), 2.0, [(0, 0, 0), (1, 0, 0), (2, 0, 0), (0, 0, -1), (1, 0, -1), (0, -1, 0), (2, -1, 0)],
             lambda I, J: (I >= 1) & (I <= n - 2) & (J >= 1) & (J <= m - 2)),
        ]
    return (grid_families((n, m), first, p, w.alpha1, "tgv1")
            + grid_families((n, m), second, p, w.alpha0, "tgv0"))


def _families_value(M, fams, X) -> float:
    return float(sum(family_value(M, f, X) for f in fams))


# -- energies ----------------------------------------------------------------------
def tv2_energy(M: Manifold, u, p: float = 1) -> float:
    """Second-order TV of a signal (``sum D_c``) or image (ell^p coupled ``D_c, D_c, 2 D_cc``)."""
    shape = grid_shape(M, u)
    return _families_value(M, tv2_families(shape, 1.0, p), _flat(M, u))


def _stack(M, *fields):
    return np.concatenate([_flat(M, a) for a in fields])


def stgv_energy_1d(M: Manifold, u, y, w: TGVWeights) -> float:
    """``sum alpha1 d(u_{i+1}, y_i) + alpha0 D([u_i, y_i], [u_{i-1}, y_{i-1}])`` for given tips ``y``.

    ``D`` is the ladder defect, or the transported-log distance for the
    ``parallel_transport`` variant.  Summands reading past the end are 0.
    """
    if np.shape(u) != np.shape(y) or len(grid_shape(M, u)) != 1:
        raise ValueError("u and y must be signals of equal shape")
    if w.variant == "schild":
        return _families_value(M, stgv_families(grid_shape(M, u), w), _stack(M, u, y))
    u, y = np.asarray(u, float), np.asarray(y, float)
    val = w.alpha1 * float(np.sum(M.dist(u[1:], y[:-1])))
    n = len(u)
    for i in range(1, n - 1):
        t1 = PointTuple(ManifoldPoint(u[i], M, False), ManifoldPoint(y[i], M, False))
        t2 = PointTuple(ManifoldPoint(u[i - 1], M, False), ManifoldPoint(y[i - 1], M, False))
        val += w.alpha0 * d_pt(t1, t2)
    return val


def stgv_energy_2d(M: Manifold, u, y1, y2, w: TGVWeights) -> float:
    """Bivariate Schild TGV for given tip fields ``y1`` (first axis) and ``y2`` (second axis)."""
    if not (np.shape(u) == np.shape(y1) == np.shape(y2)) or len(grid_shape(M, u)) != 2:
        raise ValueError("u, y1 and y2 must be images of equal shape")
    if w.variant != "schild":
        raise ValueError("the bivariate energy is only available for the ladder variant")
    return _families_value(M, stgv_families(grid_shape(M, u), w), _stack(M, u, y1, y2))


def canonical_tips(M: Manifold, u):
    """Tips ``y_i = u_{i+1}`` (per axis for images); the last entry repeats ``u``."""
    u = np.asarray(u, float)
    shape = grid_shape(M, u)
    if len(shape) == 1:
        y = u.copy()
        y[:-1] = u[1:]
        return y
    y1, y2 = u.copy(), u.copy()
    y1[:-1] = u[1:]
    y2[:, :-1] = u[:, 1:]
    return y1, y2


def ic_energy(M: Manifold, u, v, w, alpha1: float, alpha0: float):
    """Infimal-convolution value ``(alpha1 TV(v) + alpha0 TV^2(w)) / 2`` and the constraint residual.

    The residual is ``max_i d(u_i, [v_i, w_i]_1/2)``; no minimisation is done.
    """
    shape = grid_shape(M, u)
    v, w = np.asarray(v, float), np.asarray(w, float)
    if len(shape) == 1:
        tv = float(np.sum(M.dist(v[:-1], v[1:])))
    else:
        tv = tv_value_2d(M, v, TVModel(1.0))
    value = 0.5 * (alpha1 * tv + alpha0 * tv2_energy(M, w))
    residual = float(np.max(M.dist(u, midpoint(M, v, w))))
    return value, residual


# -- denoising ---------------------------------------------------------------------
def _data_family(M, f, q):
    F = _flat(M, f)
    return Family(DataTerm(q), np.arange(len(F))[:, None], {"f": F}, 1.0, role="data", name="data")


def denoise_tv2(M: Manifold, f, alpha: float, p: float = 1, q: float = 2, engine: str = "cppa",
                schedule: SolverSchedule | None = None) -> SolverResult:
    """Minimise ``(1/q) sum d(x, f)^q + alpha TV^2(x)``."""
    schedule = schedule or SolverSchedule()
    f = np.asarray(f, float)
    fams = [_data_family(M, f, q)] + tv2_families(grid_shape(M, f), alpha, p)
    return _run(M, atoms_from_families(M, fams, schedule.inner_iters), f, engine, schedule)


def denoise_stgv(M: Manifold, f, w: TGVWeights, q: float = 2, engine: str = "cppa",
                 schedule: SolverSchedule | None = None) -> SolverResult:
    """Minimise ``(1/q) sum d(u, f)^q + S-TGV(u)`` jointly over ``u`` and the tips.

    The tips start at :func:`canonical_tips` of ``f``; the optimised tips are
    returned in ``result.extra['y']`` (a tuple ``(y1, y2)`` for images).
    """
    if w.variant != "schild":
        raise ValueError("only the ladder variant can be minimised")
    schedule = schedule or SolverSchedule()
    f = np.asarray(f, float)
    shape = grid_shape(M, f)
    tips = canonical_tips(M, f)
    tips = (tips,) if len(shape) == 1 else tips
    X0 = _stack(M, f, *tips)
    fams = [_data_family(M, f, q)] + stgv_families(shape, w)
    atoms = atoms_from_families(M, fams, schedule.inner_iters)
    blocks = len(tips) + 1
    res = _run(M, atoms, X0.reshape((blocks,) + f.shape), engine, schedule)
    X = res.x.reshape((blocks,) + f.shape)
    res.x = X[0]
    res.extra["y"] = X[1] if len(shape) == 1 else (X[1], X[2])
    return res

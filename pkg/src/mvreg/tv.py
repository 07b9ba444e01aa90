"""First-order TV regularization of manifold-valued signals and images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifolds import Manifold
from .solvers import ENGINES, SolverResult, SolverSchedule
from .terms import (
    CoupledTerm,
    DataTerm,
    Family,
    HuberPairTerm,
    PairSqTerm,
    PairTerm,
    family_atoms,
    make_atom,
)

DIAGONAL_WEIGHT = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class TVModel:
    """Parameters of ``(1/q) sum d(x, f)^q + alpha TV_p(x)``.

    ``p`` couples horizontal and vertical differences of an image through an
    inner ell^p norm; it has no effect on signals.
    """

    alpha: float
    q: float = 2
    p: float = 1
    diagonal: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.q not in (1, 2):
            raise ValueError("q must be 1 or 2")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")


def grid_shape(M: Manifold, x) -> tuple[int, ...]:
    shape = np.shape(x)[: np.ndim(x) - M.pdim]
    if len(shape) not in (1, 2):
        raise ValueError("signals must be one- or two-dimensional")
    return shape


def _check_same(M, x, f):
    if np.shape(x) != np.shape(f):
        raise ValueError("signal and data shapes differ")
    return grid_shape(M, x)


def grid_pairs(shape, offset):
    """Flat index pairs ``(p, p + offset)`` inside the grid and the parity of each pair."""
    if len(shape) == 1:
        n = shape[0]
        i = np.arange(n - offset[0])
        return np.stack([i, i + offset[0]], 1), i % 2
    n, m = shape
    di, dj = offset
    I, J = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    ok = (I + di >= 0) & (I + di < n) & (J + dj >= 0) & (J + dj < m)
    I, J = I[ok], J[ok]
    a = I * m + J
    b = (I + di) * m + (J + dj)
    par = (I if di != 0 else J) % 2
    return np.stack([a, b], 1), par


def _pair_dist(M, X, pairs):
    if len(pairs) == 0:
        return np.zeros(0)
    return M.dist(X[pairs[:, 0]], X[pairs[:, 1]])


def _flat(M, x):
    x = np.asarray(x, float)
    return x.reshape((-1,) + M.point_shape)


def data_energy(M: Manifold, x, f, q: float) -> float:
    return float(np.sum(M.dist(x, f) ** q) / q)


def tv_energy_1d(M: Manifold, x, f, model: TVModel) -> float:
    """``(1/q) sum d(x_i, f_i)^q + alpha sum d(x_i, x_{i+1})``."""
    shape = _check_same(M, x, f)
    if len(shape) != 1:
        raise ValueError("expected a signal")
    return data_energy(M, x, f, model.q) + model.alpha * float(np.sum(M.dist(x[:-1], x[1:])))


def tv_value_2d(M: Manifold, x, model: TVModel) -> float:
    """Bivariate TV seminorm with inner ell^p coupling (without data term)."""
    shape = grid_shape(M, x)
    n, m = shape
    X = _flat(M, x)
    p = model.p
    comp = np.zeros(n * m)
    for off in ((1, 0), (0, 1)):
        pr, _ = grid_pairs(shape, off)
        np.add.at(comp, pr[:, 0], _pair_dist(M, X, pr) ** p)
    val = float(np.sum(comp ** (1.0 / p)))
    if model.diagonal:
        for off in ((1, 1), (1, -1)):
            pr, _ = grid_pairs(shape, off)
            val += DIAGONAL_WEIGHT * float(np.sum(_pair_dist(M, X, pr)))
    return val


def tv_energy_2d(M: Manifold, x, f, model: TVModel) -> float:
    shape = _check_same(M, x, f)
    if len(shape) != 2:
        raise ValueError("expected an image")
    return data_energy(M, x, f, model.q) + model.alpha * tv_value_2d(M, x, model)


def tv_energy(M: Manifold, x, f, model: TVModel) -> float:
    shape = _check_same(M, x, f)
    return tv_energy_1d(M, x, f, model) if len(shape) == 1 else tv_energy_2d(M, x, f, model)


def _data_family(M, f, q, term=None):
    F = _flat(M, f)
    return Family(term or DataTerm(q), np.arange(len(F))[:, None], {"f": F}, 1.0, role="data", name="data")


def _pair_families(shape, weight, term_factory, offsets, name="tv"):
    """Even/odd pair families, one pair of families per difference direction."""
    fams = []
    for off in offsets:
        pr, par = grid_pairs(shape, off)
        for parity in (0, 1):
            fams.append(Family(term_factory(), pr[par == parity], weight=weight, name=f"{name}{off}:{parity}"))
    return fams


def _coupled_families(shape, alpha, p):
    """Pixelwise ell^p coupled difference terms for images (interior and borders)."""
    n, m = shape
    I, J = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    I, J = I.ravel(), J.ravel()
    flat = I * m + J
    both = (I < n - 1) & (J < m - 1)
    fams = []
    coupled = CoupledTerm([(PairTerm(), (0, 1), 1.0), (PairTerm(), (0, 2), 1.0)], p, k=3)
    idx = np.stack([flat[both], flat[both] + m, flat[both] + 1], 1)
    fams.append(Family(coupled, idx, weight=alpha, name="tv-coupled"))
    down = (I < n - 1) & (J == m - 1)
    fams.append(Family(PairTerm(), np.stack([flat[down], flat[down] + m], 1), weight=alpha, name="tv-edge"))
    right = (I == n - 1) & (J < m - 1)
    fams.append(Family(PairTerm(), np.stack([flat[right], flat[right] + 1], 1), weight=alpha, name="tv-edge"))
    return [f for f in fams if len(f)]


def tv_families(M: Manifold, f, model: TVModel, variant: str = "tv", tau: float = 1.0,
                omega: float = 1.0) -> list[Family]:
    """Data family plus difference families for TV, H^1 or Huber regularization."""
    shape = grid_shape(M, f)
    if variant == "tv":
        factory = PairTerm
    elif variant == "h1":
        factory = PairSqTerm
    elif variant == "huber":
        def factory():
            return HuberPairTerm(tau, omega)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    fams = [_data_family(M, f, model.q)]
    if len(shape) == 1:
        fams += _pair_families(shape, model.alpha, factory, [(1,)])
    elif model.p != 1 and variant == "tv":
        fams += _coupled_families(shape, model.alpha, model.p)
    else:
        fams += _pair_families(shape, model.alpha, factory, [(1, 0), (0, 1)])
    if model.diagonal and len(shape) == 2:
        fams += _pair_families(shape, model.alpha * DIAGONAL_WEIGHT, factory, [(1, 1), (1, -1)])
    return [fm for fm in fams if len(fm)]


def atoms_from_families(M: Manifold, fams: list[Family], n_inner: int = 50):
    atoms = []
    for fam in fams:
        flat = fam.index.ravel()
        if len(np.unique(flat)) == len(flat):
            atoms.append(make_atom(M, fam, n_inner))
        else:
            atoms.extend(family_atoms(M, fam, n_inner))
    return atoms


def tv_atoms(M: Manifold, f, model: TVModel, n_inner: int = 50):
    """Data atom plus even/odd difference atoms (3 for signals, 5 for images)."""
    return atoms_from_families(M, tv_families(M, f, model), n_inner)


def _run(M, atoms, f, engine, schedule):
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    shape = f.shape
    F = _flat(M, f)
    res: SolverResult = ENGINES[engine](M, atoms, F, schedule)
    res.x = res.x.reshape(shape)
    return res


def denoise_tv(M: Manifold, f, model: TVModel, engine: str = "cppa",
               schedule: SolverSchedule | None = None) -> SolverResult:
    """TV denoising; the result's ``x`` has the shape of ``f``."""
    schedule = schedule or SolverSchedule()
    return _run(M, tv_atoms(M, f, model, schedule.inner_iters), np.asarray(f, float), engine, schedule)


def denoise_h1(M: Manifold, f, model: TVModel, engine: str = "cppa",
               schedule: SolverSchedule | None = None) -> SolverResult:
    """Quadratic-variation denoising with penalty ``(alpha/2) sum d^2``."""
    schedule = schedule or SolverSchedule()
    fams = tv_families(M, f, model, variant="h1")
    return _run(M, atoms_from_families(M, fams), np.asarray(f, float), engine, schedule)


def denoise_huber(M: Manifold, f, model: TVModel, tau: float, omega: float = 1.0, engine: str = "cppa",
                  schedule: SolverSchedule | None = None) -> SolverResult:
    """Huber-regularized denoising with penalty ``alpha sum h(d)``."""
    schedule = schedule or SolverSchedule()
    fams = tv_families(M, f, model, variant="huber", tau=tau, omega=omega)
    return _run(M, atoms_from_families(M, fams), np.asarray(f, float), engine, schedule)

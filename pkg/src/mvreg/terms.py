"""Batched summands of split functionals and their assembly into atoms.

A :class:`Family` is a set of identical terms, each reading ``k`` entries of
a flat variable array ``X`` of shape ``(n_var,) + point_shape`` through an
index table.  Families are split by greedy coloring into groups whose
footprints are pairwise disjoint; each group becomes one :class:`Atom` whose
proximal map acts on all its terms at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .manifolds import Manifold
from .manifolds.jacobi import geo_adj
from .prox import huber, prox_data, prox_huber, prox_pair, prox_pair_quadratic
from .stats import karcher_mean, mean_adjoint


@dataclass(eq=False)
class Atom:
    """One summand of a split functional.

    ``value(X)`` evaluates the summand, ``prox(X, lam)`` returns the
    proximal map of ``lam`` times the summand and ``grad(X)`` a Riemannian
    (sub)gradient field; ``footprint`` lists the touched variable indices.
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray] | None = None
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    footprint: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    role: str = "reg"
    name: str = ""

    @property
    def kind(self) -> str:
        return "prox" if self.prox is not None else "subgradient"


# -- geometric helpers ---------------------------------------------------------
def midpoint(M, a, b):
    return M.geopoint(a, b, 0.5)


def schild(M, a, b, c):
    """Schild point ``[a, [c, b]_1/2]_2``; equals ``b + c - a`` in euclidean space."""
    return M.geopoint(a, midpoint(M, c, b), 2.0)


def schild_adjoint(M, a, b, c, zeta):
    """Pull back a cotangent at the Schild point to ``(a, b, c)``."""
    m = midpoint(M, c, b)
    ga, zm = geo_adj(M, a, m, 2.0, zeta)
    gc, gb = geo_adj(M, c, b, 0.5, zm)
    return ga, gb, gc


def _unit_log(M, x, y):
    """``-log_x(y) / d(x, y)`` (gradient of ``d(., y)`` at x), zero where x = y."""
    d = M.dist(x, y)
    safe = np.where(d > 0, d, 1.0)
    return np.where(M.scal(d > 1e-15), -M.log(x, y) / M.scal(safe), 0.0), d


# -- terms ---------------------------------------------------------------------
class Term:
    """Batched term acting on gathered points ``X`` of shape ``(n, k) + point_shape``."""

    k: int = 1

    def value(self, M: Manifold, X, P) -> np.ndarray:
        raise NotImplementedError

    def grad(self, M: Manifold, X, P) -> np.ndarray:
        raise NotImplementedError

    def prox(self, M: Manifold, Y, P, lamw, n_iter: int = 50) -> np.ndarray:
        return inner_prox(M, self, Y, P, lamw, n_iter=n_iter)


class DataTerm(Term):
    """``(1/q) d(x, f)^q`` with targets ``P['f']``."""

    k = 1

    def __init__(self, q: float = 2):
        self.q = q

    def value(self, M, X, P):
        return M.dist(X[:, 0], P["f"]) ** self.q / self.q

    def grad(self, M, X, P):
        u, d = _unit_log(M, X[:, 0], P["f"])
        return (u * M.scal(d ** (self.q - 1)))[:, None]

    def prox(self, M, Y, P, lamw, n_iter=50):
        return prox_data(M, Y[:, 0], P["f"], lamw, self.q)[:, None]


class HuberDataTerm(Term):
    k = 1

    def __init__(self, tau: float, omega: float):
        self.tau, self.omega = tau, omega

    def value(self, M, X, P):
        return huber(M.dist(X[:, 0], P["f"]), self.tau, self.omega)

    def grad(self, M, X, P):
        u, d = _unit_log(M, X[:, 0], P["f"])
        slope = np.where(d <= self.tau, self.omega * d / self.tau, self.omega)
        return (u * M.scal(slope))[:, None]

    def prox(self, M, Y, P, lamw, n_iter=50):
        return prox_huber(M, Y[:, 0], P["f"], lamw, self.tau, self.omega)[:, None]


class PairTerm(Term):
    """``d(x0, x1)``."""

    k = 2

    def value(self, M, X, P):
        return M.dist(X[:, 0], X[:, 1])

    def grad(self, M, X, P):
        u0, _ = _unit_log(M, X[:, 0], X[:, 1])
        u1, _ = _unit_log(M, X[:, 1], X[:, 0])
        return np.stack([u0, u1], axis=1)

    def prox(self, M, Y, P, lamw, n_iter=50):
        return np.stack(prox_pair(M, Y[:, 0], Y[:, 1], lamw), axis=1)


class PairSqTerm(Term):
    """``d(x0, x1)^2 / 2``."""

    k = 2

    def value(self, M, X, P):
        return 0.5 * M.dist(X[:, 0], X[:, 1]) ** 2

    def grad(self, M, X, P):
        return np.stack([-M.log(X[:, 0], X[:, 1]), -M.log(X[:, 1], X[:, 0])], axis=1)

    def prox(self, M, Y, P, lamw, n_iter=50):
        return np.stack(prox_pair_quadratic(M, Y[:, 0], Y[:, 1], lamw), axis=1)


class HuberPairTerm(Term):
    k = 2

    def __init__(self, tau: float, omega: float):
        self.tau, self.omega = tau, omega

    def value(self, M, X, P):
        return huber(M.dist(X[:, 0], X[:, 1]), self.tau, self.omega)

    def grad(self, M, X, P):
        u0, d = _unit_log(M, X[:, 0], X[:, 1])
        u1, _ = _unit_log(M, X[:, 1], X[:, 0])
        s = M.scal(np.where(d <= self.tau, self.omega * d / self.tau, self.omega))
        return np.stack([u0 * s, u1 * s], axis=1)

    def prox(self, M, Y, P, lamw, n_iter=50):
        return np.stack(prox_huber(M, Y[:, 0], Y[:, 1], lamw, self.tau, self.omega, pair=True), axis=1)


class TruncatedPairTerm(Term):
    """``min(s^p, d(x0, x1)^p) / p`` for ``p`` in ``{1, 2}``."""

    k = 2

    def __init__(self, s: float, p: float = 2):
        if p not in (1, 2):
            raise ValueError("truncated pair terms need p in {1, 2}")
        self.s, self.p = float(s), p

    def value(self, M, X, P):
        d = M.dist(X[:, 0], X[:, 1])
        return np.minimum(self.s**self.p, d**self.p) / self.p

    def grad(self, M, X, P):
        u0, d = _unit_log(M, X[:, 0], X[:, 1])
        u1, _ = _unit_log(M, X[:, 1], X[:, 0])
        fac = M.scal(np.where(d < self.s, d ** (self.p - 1), 0.0))
        return np.stack([u0 * fac, u1 * fac], axis=1)

    def prox(self, M, Y, P, lamw, n_iter=50):
        # prox of a minimum = better of the two proxes (constant branch keeps Y)
        moved = np.stack((prox_pair if self.p == 1 else prox_pair_quadratic)(M, Y[:, 0], Y[:, 1], lamw), axis=1)
        lamw = np.broadcast_to(np.asarray(lamw, float), (Y.shape[0],))
        d_m = M.dist(moved[:, 0], moved[:, 1])
        obj_m = 0.5 * np.sum(M.dist(moved, Y) ** 2, axis=1) + lamw * d_m**self.p / self.p
        obj_c = lamw * self.s**self.p / self.p
        return np.where(M.scal(obj_m <= obj_c)[:, None], moved, Y)


class DcTerm(Term):
    """Second-order difference ``2 d([x_-, x_+]_1/2, x_o)`` of ``(x_-, x_o, x_+)``."""

    k = 3

    def value(self, M, X, P):
        return 2.0 * M.dist(midpoint(M, X[:, 0], X[:, 2]), X[:, 1])

    def grad(self, M, X, P):
        a, y, b = X[:, 0], X[:, 1], X[:, 2]
        c = midpoint(M, a, b)
        zc, _ = _unit_log(M, c, y)
        gy, _ = _unit_log(M, y, c)
        ga, gb = geo_adj(M, a, b, 0.5, zc)
        return 2.0 * np.stack([ga, gy, gb], axis=1)


class DccTerm(Term):
    """Mixed difference ``2 d([u10, u0m]_1/2, [u00, u1m]_1/2)`` of ``(u00, u10, u0m, u1m)``."""

    k = 4

    def value(self, M, X, P):
        return 2.0 * M.dist(midpoint(M, X[:, 1], X[:, 2]), midpoint(M, X[:, 0], X[:, 3]))

    def grad(self, M, X, P):
        u00, u10, u0m, u1m = (X[:, i] for i in range(4))
        c1 = midpoint(M, u10, u0m)
        c2 = midpoint(M, u00, u1m)
        z1, _ = _unit_log(M, c1, c2)
        z2, _ = _unit_log(M, c2, c1)
        g10, g0m = geo_adj(M, u10, u0m, 0.5, z1)
        g00, g1m = geo_adj(M, u00, u1m, 0.5, z2)
        return 2.0 * np.stack([g00, g10, g0m, g1m], axis=1)


class DsTerm(Term):
    """Schild defect ``d(y_i, S(u_{i-1}, y_{i-1}, u_i))`` of ``(u_i, y_i, u_{i-1}, y_{i-1})``."""

    k = 4

    def value(self, M, X, P):
        return M.dist(X[:, 1], schild(M, X[:, 2], X[:, 3], X[:, 0]))

    def grad(self, M, X, P):
        u, y, a, b = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
        s = schild(M, a, b, u)
        gy, _ = _unit_log(M, y, s)
        zs, _ = _unit_log(M, s, y)
        ga, gb, gu = schild_adjoint(M, a, b, u, zs)
        return np.stack([gu, gy, ga, gb], axis=1)


class DsymTerm(Term):
    """Symmetrized mixed defect of ``(u, y1, y2, a1, b1, a2, b2)``.

    ``d([y1, y2]_1/2, [S(a1, b1, u), S(a2, b2, u)]_1/2)``; in euclidean space
    this is ``|(w1 - w1') + (w2 - w2')| / 2`` with ``w = y - u``.
    """

    k = 7

    def value(self, M, X, P):
        u, y1, y2, a1, b1, a2, b2 = (X[:, i] for i in range(7))
        m1 = midpoint(M, y1, y2)
        m2 = midpoint(M, schild(M, a1, b1, u), schild(M, a2, b2, u))
        return M.dist(m1, m2)

    def grad(self, M, X, P):
        u, y1, y2, a1, b1, a2, b2 = (X[:, i] for i in range(7))
        s1 = schild(M, a1, b1, u)
        s2 = schild(M, a2, b2, u)
        m1 = midpoint(M, y1, y2)
        m2 = midpoint(M, s1, s2)
        z1, _ = _unit_log(M, m1, m2)
        z2, _ = _unit_log(M, m2, m1)
        gy1, gy2 = geo_adj(M, y1, y2, 0.5, z1)
        zs1, zs2 = geo_adj(M, s1, s2, 0.5, z2)
        ga1, gb1, gu1 = schild_adjoint(M, a1, b1, u, zs1)
        ga2, gb2, gu2 = schild_adjoint(M, a2, b2, u, zs2)
        return np.stack([gu1 + gu2, gy1, gy2, ga1, gb1, ga2, gb2], axis=1)


class DetailTerm(Term):
    """Interpolatory wavelet detail ``d(mean(stencil; w), fine)`` of ``(fine, stencil...)``."""

    def __init__(self, weights):
        self.w = np.asarray(weights, float)
        self.k = 1 + len(self.w)

    def _pred(self, M, S):
        if len(self.w) == 2 and self.w[0] == self.w[1]:
            return midpoint(M, S[:, 0], S[:, 1])
        return karcher_mean(M, np.swapaxes(S, 0, 1), self.w, tol=1e-12, max_iter=200)

    def value(self, M, X, P):
        return M.dist(self._pred(M, X[:, 1:]), X[:, 0])

    def grad(self, M, X, P):
        S = X[:, 1:]
        m = self._pred(M, S)
        gf, _ = _unit_log(M, X[:, 0], m)
        zm, _ = _unit_log(M, m, X[:, 0])
        if len(self.w) == 2 and self.w[0] == self.w[1]:
            gs = np.stack(geo_adj(M, S[:, 0], S[:, 1], 0.5, zm), axis=1)
        else:
            gs = np.swapaxes(mean_adjoint(M, m, np.swapaxes(S, 0, 1), self.w, zm), 0, 1)
        return np.concatenate([gf[:, None], gs], axis=1)


class CountTerm(Term):
    """Indicator ``[g(x) > eps]`` of an inner term, for counting (ell^0) penalties.

    The prox compares keeping the input with a Gauss-Newton projection onto
    the zero set of ``g``; ties go to the projection.
    """

    def __init__(self, inner: Term, eps: float = 1e-12, n_kill: int = 20):
        self.inner, self.eps, self.n_kill = inner, eps, n_kill
        self.k = inner.k

    def value(self, M, X, P):
        return (self.inner.value(M, X, P) > self.eps).astype(float)

    def grad(self, M, X, P):
        return np.zeros_like(X)

    def prox(self, M, Y, P, lamw, n_iter=50):
        lamw = np.broadcast_to(np.asarray(lamw, float), (Y.shape[0],))
        Xk = Y.copy()
        for _ in range(self.n_kill):
            g = self.inner.value(M, Xk, P)
            if np.all(g <= self.eps):
                break
            G = self.inner.grad(M, Xk, P)
            gn2 = np.sum(M.inner(Xk, G, G), axis=1)
            ok = (gn2 > 1e-300) & (g > self.eps)
            fac = np.where(ok, g / np.where(ok, gn2, 1.0), 0.0)
            Xk = M.exp(Xk, -M.scal(fac)[:, None] * G)
        keep = lamw * self.value(M, Y, P)
        kill = 0.5 * np.sum(M.dist(Xk, Y) ** 2, axis=1) + lamw * self.value(M, Xk, P)
        return np.where(M.scal(keep < kill - 1e-12)[:, None], Y, Xk)


class RowMeanDataTerm(Term):
    """``(1/q) d(mean_j(x_j; P['w']), P['f'])^q`` for a row of a forward operator."""

    def __init__(self, k: int, q: float = 2, mean_tol: float = 1e-12):
        self.k = k
        self.q = q
        self.mean_tol = mean_tol

    def mean(self, M, X, P):
        return karcher_mean(M, np.swapaxes(X, 0, 1), P["w"].T, tol=self.mean_tol, max_iter=500)

    def value(self, M, X, P):
        return M.dist(self.mean(M, X, P), P["f"]) ** self.q / self.q

    def grad(self, M, X, P):
        m = self.mean(M, X, P)
        u, d = _unit_log(M, m, P["f"])
        cot = u * M.scal(d ** (self.q - 1))
        return np.swapaxes(mean_adjoint(M, m, np.swapaxes(X, 0, 1), P["w"].T, cot), 0, 1)


class PowerTerm(Term):
    """``g(x)^p`` for an inner term ``g``."""

    def __init__(self, inner: Term, p: float):
        self.inner, self.p = inner, p
        self.k = inner.k

    def value(self, M, X, P):
        return self.inner.value(M, X, P) ** self.p

    def grad(self, M, X, P):
        if self.p == 1:
            return self.inner.grad(M, X, P)
        v = self.inner.value(M, X, P)
        fac = self.p * v ** (self.p - 1)
        return self.inner.grad(M, X, P) * M.scal(fac)[:, None]


class CoupledTerm(Term):
    """``(sum_c w_c g_c(x)^p)^(1/p)`` over component terms reading local index subsets."""

    def __init__(self, components, p: float, k: int):
        self.components = [(t, np.asarray(loc, int), float(w)) for t, loc, w in components]
        self.p = p
        self.k = k

    def _vals(self, M, X, P):
        return [t.value(M, X[:, loc], P) for t, loc, _ in self.components]

    def value(self, M, X, P):
        s = sum(w * v**self.p for (_, _, w), v in zip(self.components, self._vals(M, X, P)))
        return s ** (1.0 / self.p)

    def grad(self, M, X, P):
        vals = self._vals(M, X, P)
        tot = sum(w * v**self.p for (_, _, w), v in zip(self.components, vals)) ** (1.0 / self.p)
        safe = np.where(tot > 0, tot, 1.0)
        G = np.zeros_like(X)
        for (t, loc, w), v in zip(self.components, vals):
            fac = np.where(tot > 0, w * (v / safe) ** (self.p - 1), 0.0)
            g = t.grad(M, X[:, loc], P) * M.scal(fac)[:, None]
            for j, l in enumerate(loc):
                G[:, l] += g[:, j]
        return G


# -- inner proximal solver -------------------------------------------------------
def inner_prox(M: Manifold, term: Term, Y, P, lamw, n_iter: int = 50, n_kill: int = 6):
    """Approximate prox of ``lamw * term`` at gathered points ``Y``.

    Runs subgradient descent on ``0.5 sum_l d(x_l, y_l)^2 + lamw g(x)`` with
    steps ``1/j`` (the first step is exact for euclidean norm-type terms) and
    compares the best iterate against a Gauss-Newton projection onto the
    zero set of ``g``; the lower objective wins per term.
    """
    Y = np.asarray(Y, float)
    lamw = np.broadcast_to(np.asarray(lamw, float), (Y.shape[0],))
    if np.all(lamw == 0):
        return Y.copy()

    def phi(X):
        return 0.5 * np.sum(M.dist(X, Y) ** 2, axis=1) + lamw * term.value(M, X, P)

    best = Y.copy()
    best_v = phi(Y)
    X = Y.copy()
    for j in range(1, n_iter + 1):
        G = -M.log(X, Y) + M.scal(lamw)[:, None] * term.grad(M, X, P)
        X = M.exp(X, -G / j)
        v = phi(X)
        better = v < best_v
        best = np.where(M.scal(better)[:, None], X, best)
        best_v = np.where(better, v, best_v)
    Xk = Y.copy()
    for _ in range(n_kill):
        g = term.value(M, Xk, P)
        G = term.grad(M, Xk, P)
        gn2 = np.sum(M.inner(Xk, G, G), axis=1)
        ok = (gn2 > 1e-300) & (g > 0)
        fac = np.where(ok, g / np.where(ok, gn2, 1.0), 0.0)
        Xk = M.exp(Xk, -M.scal(fac)[:, None] * G)
    v = phi(Xk)
    better = v < best_v
    return np.where(M.scal(better)[:, None], Xk, best)


# -- families --------------------------------------------------------------------
@dataclass(eq=False)
class Family:
    term: Term
    index: np.ndarray
    params: dict = field(default_factory=dict)
    weight: float | np.ndarray = 1.0
    role: str = "reg"
    name: str = ""

    def __post_init__(self):
        self.index = np.asarray(self.index, int).reshape(-1, self.term.k)
        w = np.asarray(self.weight, float)
        self.weight = np.broadcast_to(w, (len(self.index),)).copy()

    def subset(self, sel) -> "Family":
        return Family(self.term, self.index[sel], {k: v[sel] for k, v in self.params.items()},
                      self.weight[sel], self.role, self.name)

    def __len__(self):
        return len(self.index)


def color_groups(index: np.ndarray) -> list[np.ndarray]:
    """Greedy coloring of terms so that terms sharing a variable get different colors."""
    index = np.asarray(index, int)
    colors = np.zeros(len(index), int)
    used: dict[int, set] = {}
    for t, row in enumerate(index):
        taken = set()
        for v in row:
            taken |= used.get(int(v), set())
        c = 0
        while c in taken:
            c += 1
        colors[t] = c
        for v in row:
            used.setdefault(int(v), set()).add(c)
    return [np.flatnonzero(colors == c) for c in range(colors.max() + 1)] if len(index) else []


def family_value(M: Manifold, fam: Family, X) -> float:
    if len(fam) == 0:
        return 0.0
    return float(np.sum(fam.weight * fam.term.value(M, X[fam.index], fam.params)))


def family_grad(M: Manifold, fam: Family, X) -> np.ndarray:
    G = np.zeros_like(X)
    if len(fam):
        g = fam.term.grad(M, X[fam.index], fam.params) * M.scal(fam.weight)[:, None]
        np.add.at(G, fam.index, g)
    return G


def make_atom(M: Manifold, fam: Family, n_inner: int = 50) -> Atom:
    """Atom over a family whose terms have pairwise disjoint footprints."""
    idx = fam.index
    flat = idx.ravel()
    if len(np.unique(flat)) != len(flat):
        raise ValueError("atom footprints overlap")

    def value(X):
        return family_value(M, fam, X)

    def prox(X, lam):
        if lam == 0 or len(fam) == 0:
            return X
        Z = fam.term.prox(M, X[idx], fam.params, lam * fam.weight, n_iter=n_inner)
        out = X.copy()
        out[idx] = Z
        return out

    def grad(X):
        return family_grad(M, fam, X)

    return Atom(value=value, prox=prox, grad=grad, footprint=np.unique(flat), role=fam.role, name=fam.name)


def family_atoms(M: Manifold, fam: Family, n_inner: int = 50) -> list[Atom]:
    return [make_atom(M, fam.subset(g), n_inner) for g in color_groups(fam.index)]

"""Iterative engines over split functionals.

Engines operate on a variable array ``X`` (leading axes arbitrary) and a list
of :class:`~mvreg.terms.Atom` objects.  Step sizes follow
``lambda_k = lambda0 / k**decay`` which is square summable but not summable
for ``decay`` in ``(1/2, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifolds import Manifold
from .stats import karcher_mean, mean_approx_geodesic
from .terms import Atom


@dataclass(frozen=True)
class SolverSchedule:
    """Step-size sequence, iteration cap, stopping tolerance and seed."""

    lambda0: float = 1.0
    decay: float = 1.0
    max_iters: int = 1000
    tol: float = 1e-8
    seed: int = 0
    order: str = "fixed"
    inner_iters: int = 50

    def __post_init__(self):
        if not (0.5 < self.decay <= 1.0):
            raise ValueError("decay must lie in (1/2, 1]")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.order not in ("fixed", "random"):
            raise ValueError("order must be 'fixed' or 'random'")

    def step(self, k: int) -> float:
        return self.lambda0 / float(k) ** self.decay


@dataclass
class SolverResult:
    x: np.ndarray
    data: list = field(default_factory=list)
    reg: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def energies(self) -> list:
        return [d + r for d, r in zip(self.data, self.reg)]

    @property
    def energy(self) -> float:
        return self.energies[-1]

    def trace_rows(self):
        """Rows ``(iteration, data, regularizer, total)``."""
        return [(i, d, r, d + r) for i, (d, r) in enumerate(zip(self.data, self.reg))]


def split_energy(atoms, X) -> tuple[float, float]:
    data = sum(a.value(X) for a in atoms if a.role == "data")
    reg = sum(a.value(X) for a in atoms if a.role != "data")
    return float(data), float(reg)


def _record(res: SolverResult, atoms, X):
    d, r = split_energy(atoms, X)
    res.data.append(d)
    res.reg.append(r)


def _rel_change(M: Manifold, x_new, x_old, ref) -> float:
    num = float(np.mean(M.dist(x_new, x_old)))
    den = 1.0 + float(np.mean(M.dist(x_old, ref)))
    return num / den


def _check_atoms(atoms):
    if len(atoms) == 0:
        raise ValueError("at least one atom is required")


def _order(n: int, schedule: SolverSchedule, rng):
    return rng.permutation(n) if schedule.order == "random" else range(n)


def cppa(M: Manifold, atoms: list[Atom], x0, schedule: SolverSchedule, reference=None) -> SolverResult:
    """Cyclic proximal point algorithm: apply every atom's prox in turn."""
    _check_atoms(atoms)
    X = np.array(x0, dtype=float)
    ref = X.copy() if reference is None else np.asarray(reference, float)
    rng = np.random.default_rng(schedule.seed)
    res = SolverResult(X)
    _record(res, atoms, X)
    for k in range(1, schedule.max_iters + 1):
        lam = schedule.step(k)
        X_old = X
        for a in _order(len(atoms), schedule, rng):
            X = atoms[a].prox(X, lam)
        _record(res, atoms, X)
        res.iterations = k
        if _rel_change(M, X, X_old, ref) < schedule.tol:
            res.converged = True
            break
    res.x = X
    return res


def pppa(M: Manifold, atoms: list[Atom], x0, schedule: SolverSchedule, reference=None,
         mean_tol: float = 1e-12, mean_mode: str = "exact") -> SolverResult:
    """Parallel proximal point algorithm: average all atom proxes pointwise.

    ``mean_mode='approx'`` replaces the Karcher mean by iterated geodesic
    averaging.
    """
    _check_atoms(atoms)
    if mean_mode not in ("exact", "approx"):
        raise ValueError("mean_mode must be 'exact' or 'approx'")
    X = np.array(x0, dtype=float)
    ref = X.copy() if reference is None else np.asarray(reference, float)
    res = SolverResult(X)
    _record(res, atoms, X)
    n = len(atoms)
    for k in range(1, schedule.max_iters + 1):
        lam = schedule.step(k)
        outs = np.stack([a.prox(X, lam) for a in atoms])
        if mean_mode == "approx":
            X_new = mean_approx_geodesic(M, outs, np.full(n, 1.0 / n))
        else:
            X_new = karcher_mean(M, outs, np.full(n, 1.0 / n), tol=mean_tol, max_iter=200, init=X)
        _record(res, atoms, X_new)
        res.iterations = k
        done = _rel_change(M, X_new, X, ref) < schedule.tol
        X = X_new
        if done:
            res.converged = True
            break
    res.x = X
    return res


def subgradient_descent(M: Manifold, atoms: list[Atom], x0, schedule: SolverSchedule) -> SolverResult:
    """Riemannian subgradient descent; returns the best iterate seen."""
    X = np.array(x0, dtype=float)
    res = SolverResult(X)
    _record(res, atoms, X)
    best, best_e = X, res.energies[-1]
    for k in range(1, schedule.max_iters + 1):
        G = sum(a.grad(X) for a in atoms)
        if not np.any(G):
            res.converged = True
            break
        X = M.exp(X, -schedule.step(k) * G)
        _record(res, atoms, X)
        res.iterations = k
        if res.energies[-1] < best_e:
            best, best_e = X, res.energies[-1]
    res.x = best
    return res


def fbs(M: Manifold, data_atoms: list[Atom], reg_atoms: list[Atom], x0,
        schedule: SolverSchedule, reference=None) -> SolverResult:
    """Forward-backward splitting with a joint (Jacobi) explicit data step."""
    atoms = list(data_atoms) + list(reg_atoms)
    X = np.array(x0, dtype=float)
    ref = X.copy() if reference is None else np.asarray(reference, float)
    rng = np.random.default_rng(schedule.seed)
    res = SolverResult(X)
    _record(res, atoms, X)
    for k in range(1, schedule.max_iters + 1):
        lam = schedule.step(k)
        X_old = X
        G = sum(a.grad(X) for a in data_atoms)
        X = M.exp(X, -lam * G)
        for a in _order(len(reg_atoms), schedule, rng):
            X = reg_atoms[a].prox(X, lam)
        _record(res, atoms, X)
        res.iterations = k
        if _rel_change(M, X, X_old, ref) < schedule.tol:
            res.converged = True
            break
    res.x = X
    return res


def traj_step(M: Manifold, atom: Atom, X, budget: float, *, armijo: float = 1e-4,
              shrink: float = 0.5, max_substeps: int = 30):
    """Descend one smooth atom along successive geodesics for total time ``budget``.

    Each sub-step starts with the remaining budget as trial step, backtracks
    until the Armijo condition holds and then refines to the minimiser of the
    quadratic interpolant when that is better.  Stops when the budget is
    spent, the gradient vanishes or no progress is possible.
    """
    X = np.asarray(X, float)
    remaining = float(budget)
    f0 = atom.value(X)
    for _ in range(max_substeps):
        if remaining <= 1e-15 * max(budget, 1e-300):
            break
        G = atom.grad(X)
        gn2 = float(np.sum(M.inner(X, G, G)))
        if gn2 <= 1e-28 * max(1.0, f0):
            break
        t = remaining
        while True:
            Xt = M.exp(X, -t * G)
            ft = atom.value(Xt)
            if ft <= f0 - armijo * t * gn2:
                break
            t *= shrink
            if t < 1e-14 * budget:
                return X
        denom = ft - f0 + t * gn2
        if denom > 0:
            tq = gn2 * t * t / (2.0 * denom)
            if 0 < tq < t:
                Xq = M.exp(X, -tq * G)
                fq = atom.value(Xq)
                if fq <= ft:
                    Xt, ft, t = Xq, fq, tq
        X, f0 = Xt, ft
        remaining -= t
    return X


def fbs_traj(M: Manifold, data_atoms: list[Atom], reg_atoms: list[Atom], x0,
             schedule: SolverSchedule, reference=None) -> SolverResult:
    """Forward-backward splitting with Gauss-Seidel trajectory steps per data atom."""
    atoms = list(data_atoms) + list(reg_atoms)
    X = np.array(x0, dtype=float)
    ref = X.copy() if reference is None else np.asarray(reference, float)
    rng = np.random.default_rng(schedule.seed)
    res = SolverResult(X)
    _record(res, atoms, X)
    for k in range(1, schedule.max_iters + 1):
        lam = schedule.step(k)
        X_old = X
        for a in _order(len(data_atoms), schedule, rng):
            X = traj_step(M, data_atoms[a], X, lam)
        for a in _order(len(reg_atoms), schedule, rng):
            X = reg_atoms[a].prox(X, lam)
        _record(res, atoms, X)
        res.iterations = k
        if _rel_change(M, X, X_old, ref) < schedule.tol:
            res.converged = True
            break
    res.x = X
    return res


ENGINES = {"cppa": cppa, "pppa": pppa, "subgradient": subgradient_descent}

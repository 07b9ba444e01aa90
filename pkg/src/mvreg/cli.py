"""Command line front end.

Every subcommand reads an MVS file (``--input``; ``bundled:<name>`` selects a
shipped data set), writes its result as MVS (``--output``) and optionally a
CSV energy trace (``--trace``) and a PPM preview (``--preview``).

Exit codes: 0 success, 2 argument or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import io
from .higher_order import TGVWeights, denoise_stgv, denoise_tv2
from .inverse import (
    ForwardOperator,
    MSRegularizer,
    STGVRegularizer,
    TVRegularizer,
    TVTV2Regularizer,
    forward_apply,
    gaussian_kernel_operator,
    gaussian_kernel_operator_2d,
    solve_inverse,
)
from .manifolds import ManifoldError, parse_manifold
from .metrics import delta_snr, mean_error
from .noise import add_noise
from .potts import MSModel, dp_solve_1d, ms_energy_1d, ms_energy_2d, splitting_solve_2d
from .preview import save_preview
from .solvers import SolverSchedule
from .stats import MeanConvergenceError
from .tv import TVModel, data_energy, denoise_tv
from .wavelets import SubdivisionScheme, WaveletRegularizer

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
TRACE_HEADER = ("iteration", "data", "regularizer", "total")


class UsageError(Exception):
    pass


def _load(spec: str, manifold: str | None):
    path = io.bundled_path(spec.split(":", 1)[1]) if spec.startswith("bundled:") else spec
    try:
        M, x = io.read_mvs(path)
    except OSError as exc:
        raise UsageError(f"cannot read {spec}: {exc}") from exc
    except io.MVSParseError as exc:
        raise UsageError(f"{spec}: {exc}") from exc
    if manifold is not None:
        try:
            want = parse_manifold(manifold)
        except ManifoldError as exc:
            raise UsageError(str(exc)) from exc
        if want != M:
            raise UsageError(f"{spec} holds {M.name} data, not {want.name}")
    return M, x


def write_trace(path, rows, jumps=None) -> None:
    """CSV rows ``iteration,data,regularizer,total`` (plus ``jumps`` when given)."""
    head = TRACE_HEADER + (("jumps",) if jumps is not None else ())
    lines = [",".join(head)]
    for it, d, r in rows:
        vals = [str(int(it)), repr(float(d)), repr(float(r)), repr(float(d) + float(r))]
        if jumps is not None:
            vals.append(str(int(jumps)))
        lines.append(",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _schedule(a) -> SolverSchedule:
    return SolverSchedule(lambda0=a.lambda0, decay=a.decay, max_iters=a.iters, tol=a.tol, seed=a.seed)


def _result_rows(res):
    return [(i, d, r) for i, d, r, _ in res.trace_rows()]


def _dims(M, x):
    return x.shape[: x.ndim - M.pdim]


def _operator(M, x, sigma, width):
    shape = _dims(M, x)
    if sigma <= 0:
        return ForwardOperator.identity(shape)
    if len(shape) == 1:
        return gaussian_kernel_operator(shape[0], sigma, width)
    return gaussian_kernel_operator_2d(shape, sigma, width)


# -- subcommands ---------------------------------------------------------------------
def cmd_denoise_tv(a, M, f):
    res = denoise_tv(M, f, TVModel(a.alpha, a.q, a.p), a.engine, _schedule(a))
    return res.x, _result_rows(res), None


def cmd_denoise_tv2(a, M, f):
    res = denoise_tv2(M, f, a.alpha, a.p, a.q, a.engine, _schedule(a))
    return res.x, _result_rows(res), None


def cmd_denoise_tgv(a, M, f):
    res = denoise_stgv(M, f, TGVWeights(a.alpha1, a.alpha0, a.p), a.q, a.engine, _schedule(a))
    return res.x, _result_rows(res), None


def _segmentation(a, M, f, model):
    shape = _dims(M, f)
    if len(shape) == 1:
        res = dp_solve_1d(M, f, model)
        x, its, jumps = res.x, 0, len(res.jumps)
        total = ms_energy_1d(M, x, f, model)
    else:
        res = splitting_solve_2d(M, f, model, tol=a.tol, max_iter=a.iters)
        x, its = res.x, res.iterations
        thr = 1e-8 if model.is_potts else model.s
        jumps = int(np.sum(M.dist(x[1:], x[:-1]) > thr) + np.sum(M.dist(x[:, 1:], x[:, :-1]) > thr))
        total = ms_energy_2d(M, x, f, model)
    data = data_energy(M, x, f, model.q)
    return x, [(its, data, total - data)], jumps


def cmd_potts(a, M, f):
    return _segmentation(a, M, f, MSModel.potts(a.gamma, a.q))


def cmd_mumshah(a, M, f):
    return _segmentation(a, M, f, MSModel(a.alpha, a.gamma, a.p, a.q))


def _regularizer(a):
    if a.reg == "tv":
        return TVRegularizer(a.alpha, a.p)
    if a.reg == "tv+tv2":
        return TVTV2Regularizer(a.alpha1, a.alpha0, a.p)
    if a.reg == "stgv":
        return STGVRegularizer(TGVWeights(a.alpha1, a.alpha0, a.p))
    if a.reg == "mumford-shah":
        return MSRegularizer(a.alpha, MSModel(a.alpha, a.gamma, a.p).s, a.p)
    scheme = SubdivisionScheme.dd3() if a.scheme == "dd3" else SubdivisionScheme.midpoint()
    return WaveletRegularizer(a.alpha1, a.alpha0, 1.0, "l0" if a.reg == "wavelet-l0" else 1.0, scheme)


def cmd_deconv(a, M, f):
    A = _operator(M, f, a.sigma, a.width)
    res = solve_inverse(M, A, f, _regularizer(a), a.q, _schedule(a), a.engine)
    return res.x, _result_rows(res), None


def cmd_wavelet(a, M, f):
    A = _operator(M, f, a.sigma, a.width)
    scheme = SubdivisionScheme.dd3() if a.scheme == "dd3" else SubdivisionScheme.midpoint()
    reg = WaveletRegularizer(a.alpha1, a.alpha2, a.mu, "l0" if a.mode == "l0" else a.p, scheme, a.levels)
    res = solve_inverse(M, A, f, reg, a.q, _schedule(a), a.engine)
    return res.x, _result_rows(res), None


def cmd_noise(a, M, x):
    if a.sigma > 0:
        x = forward_apply(M, _operator(M, x, a.sigma, a.width), x).reshape(x.shape)
    return add_noise(M, x, a.kind.replace("-", "_"), a.level, a.seed), None, None


def cmd_metrics(a, M, u):
    _, h = _load(a.ground, M.name)
    _, f = _load(a.noisy, M.name)
    try:
        vals = {"delta_snr": float(delta_snr(M, h, f, u)), "mean_error": mean_error(M, h, u)}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = "".join(f"{k},{v!r}\n" for k, v in vals.items())
    sys.stdout.write(text)
    if a.output:
        with open(a.output, "w") as fh:
            fh.write("metric,value\n" + text)
    return None, None, None


# -- parser -----------------------------------------------------------------------------
def _common(engines, default_engine, p_default=1.0):
    # a fresh parent per subcommand: parent actions are shared objects
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", required=True, help="input MVS file or bundled:<name>")
    p.add_argument("--output", help="output MVS file")
    p.add_argument("--manifold", help="expected manifold descriptor of the input")
    p.add_argument("--engine", choices=engines, default=default_engine)
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--decay", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q", type=float, default=2, choices=(1.0, 2.0))
    p.add_argument("--p", type=float, default=p_default)
    p.add_argument("--trace", help="CSV energy trace path")
    p.add_argument("--preview", help="PPM preview path")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvreg", description="Variational regularization of manifold-valued data")
    sub = parser.add_subparsers(dest="command", required=True)
    def prox(p_default=1.0):
        return _common(("cppa", "pppa", "subgradient"), "cppa", p_default)

    def inv(default="fbs_traj"):
        return _common(("fbs", "fbs_traj", "cppa", "pppa", "subgradient"), default)

    s = sub.add_parser("denoise-tv", parents=[prox()], help="TV denoising")
    s.add_argument("--alpha", type=float, default=1.0)
    s.set_defaults(func=cmd_denoise_tv)

    s = sub.add_parser("denoise-tv2", parents=[prox()], help="second order TV denoising")
    s.add_argument("--alpha", type=float, default=1.0)
    s.set_defaults(func=cmd_denoise_tv2)

    s = sub.add_parser("denoise-tgv", parents=[prox()], help="S-TGV denoising")
    s.add_argument("--alpha1", type=float, default=1.0)
    s.add_argument("--alpha0", type=float, default=1.0)
    s.set_defaults(func=cmd_denoise_tgv)

    s = sub.add_parser("mumshah", parents=[prox(2.0)], help="Mumford-Shah segmentation")
    s.add_argument("--alpha", type=float, default=1.0)
    s.add_argument("--gamma", type=float, default=1.0)
    s.set_defaults(func=cmd_mumshah)

    s = sub.add_parser("potts", parents=[prox()], help="Potts segmentation")
    s.add_argument("--gamma", type=float, default=1.0)
    s.set_defaults(func=cmd_potts)

    s = sub.add_parser("deconv", parents=[inv()], help="deblurring with a Gaussian kernel")
    s.add_argument("--reg", choices=("tv", "tv+tv2", "stgv", "wavelet-l1", "wavelet-l0", "mumford-shah"),
                   default="tv")
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--alpha1", type=float, default=0.1)
    s.add_argument("--alpha0", type=float, default=0.1)
    s.add_argument("--gamma", type=float, default=1.0)
    s.add_argument("--scheme", choices=("midpoint", "dd3"), default="midpoint")
    s.add_argument("--sigma", type=float, default=1.0, help="kernel width; 0 for the identity")
    s.add_argument("--width", type=int, default=5)
    s.set_defaults(func=cmd_deconv)

    s = sub.add_parser("wavelet", parents=[inv("cppa")], help="wavelet sparse regularization")
    s.add_argument("--alpha1", type=float, default=0.1)
    s.add_argument("--alpha2", type=float, default=0.1)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--scheme", choices=("midpoint", "dd3"), default="midpoint")
    s.add_argument("--levels", type=int)
    s.add_argument("--sigma", type=float, default=0.0, help="blur of the forward operator; 0 for none")
    s.add_argument("--width", type=int, default=5)
    s.add_argument("--mode", choices=("l1", "l0"), default="l1", help="l0 counts nonzero details")
    s.set_defaults(func=cmd_wavelet)

    s = sub.add_parser("noise", parents=[prox()], help="blur and corrupt a signal")
    s.add_argument("--kind", choices=("gaussian", "vmf", "von-mises"), default="gaussian")
    s.add_argument("--level", type=float, default=0.1, help="sigma (gaussian) or kappa")
    s.add_argument("--sigma", type=float, default=0.0, help="Gaussian blur before the noise")
    s.add_argument("--width", type=int, default=5)
    s.set_defaults(func=cmd_noise)

    s = sub.add_parser("metrics", parents=[prox()], help="compare a reconstruction with the ground truth")
    s.add_argument("--ground", required=True)
    s.add_argument("--noisy", required=True)
    s.set_defaults(func=cmd_metrics)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        M, x = _load(a.input, a.manifold)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out, rows, jumps = a.func(a, M, x)
        if out is not None:
            if not np.all(np.isfinite(out)):
                raise FloatingPointError("non-finite result")
            if a.output:
                io.write_mvs(a.output, M, out)
            if a.preview:
                save_preview(a.preview, M, out)
        if rows is not None and a.trace:
            write_trace(a.trace, rows, jumps)
    except (MeanConvergenceError, ManifoldError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"mvreg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError) as exc:
        print(f"mvreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main(argv=None) -> int:
    threads = os.environ.get("MVR_THREADS")
    if threads:
        with threadpool_limits(int(threads)):
            return run(argv)
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())

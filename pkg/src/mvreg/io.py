"""Plain-text MVS files for manifold-valued signals and images.

Grammar (one item per line, ``#`` starts a comment line)::

    MVS 1
    manifold <descriptor>        e.g. sphere(2), spd(3), product(circle,euclidean(1))
    shape <N> | <N> <M>
    ambient <D>
    <D floats>                   one line per sample, row-major

Floats are written with ``repr`` so a write/read roundtrip is bitwise exact.
"""

from __future__ import annotations

import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .manifolds import Circle, Manifold, ManifoldError, parse_manifold, wrap_angle

FORMAT_TAG = "MVS 1"
ACCEPT_TOL = 1e-8
REJECT_TOL = 1e-4


class MVSParseError(ValueError):
    """Malformed MVS content; ``line`` is the 1-based line number (0 if unknown)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (``.mvs`` may be omitted)."""
    name = name if name.endswith(".mvs") else name + ".mvs"
    path = Path(str(resources.files("mvreg") / "data" / name))
    if not path.exists():
        raise FileNotFoundError(f"no bundled data set {name!r}")
    return path


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_mvs(M: Manifold, x) -> str:
    x = np.asarray(x, float)
    shape = x.shape[: x.ndim - M.pdim]
    if x.shape[x.ndim - M.pdim:] != M.point_shape or len(shape) not in (1, 2):
        raise ValueError(f"expected a signal or image of {M.name} points")
    D = int(np.prod(M.point_shape))
    rows = x.reshape(-1, D)
    lines = [FORMAT_TAG, f"manifold {M.name}", "shape " + " ".join(map(str, shape)), f"ambient {D}"]
    lines += [" ".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_mvs(path, M: Manifold, x) -> None:
    Path(path).write_text(dumps_mvs(M, x))


def _header(lines):
    items = []
    for no, text in lines:
        items.append((no, text))
        if len(items) == 4:
            break
    if len(items) < 4:
        raise MVSParseError("truncated header", items[-1][0] if items else 1)
    (n1, tag), (n2, man), (n3, shp), (n4, amb) = items
    if tag != FORMAT_TAG:
        raise MVSParseError(f"expected {FORMAT_TAG!r}", n1)
    if not man.startswith("manifold "):
        raise MVSParseError("expected 'manifold <descriptor>'", n2)
    try:
        M = parse_manifold(man.split(None, 1)[1])
    except ManifoldError as exc:
        raise MVSParseError(str(exc), n2) from exc
    parts = shp.split()
    try:
        if parts[0] != "shape" or len(parts) not in (2, 3):
            raise ValueError
        shape = tuple(int(v) for v in parts[1:])
        if any(v < 1 for v in shape):
            raise ValueError
    except (ValueError, IndexError):
        raise MVSParseError("expected 'shape <N>' or 'shape <N> <M>'", n3) from None
    parts = amb.split()
    try:
        if parts[0] != "ambient" or len(parts) != 2:
            raise ValueError
        D = int(parts[1])
    except (ValueError, IndexError):
        raise MVSParseError("expected 'ambient <D>'", n4) from None
    if D != int(np.prod(M.point_shape)):
        raise MVSParseError(f"ambient {D} does not match {M.name}", n4)
    return M, shape, D


def loads_mvs(text: str):
    """Parse MVS text; returns ``(manifold, array)``."""
    lines = ((no, ln.strip()) for no, ln in enumerate(text.splitlines(), start=1))
    lines = ((no, ln) for no, ln in lines if ln and not ln.startswith("#"))
    M, shape, D = _header(lines)
    n = int(np.prod(shape))
    rows, line_nos = [], []
    for no, ln in lines:
        if len(rows) == n:
            raise MVSParseError("more samples than the header announces", no)
        try:
            vals = [float(v) for v in ln.split()]
        except ValueError:
            raise MVSParseError("non-numeric entry", no) from None
        if len(vals) != D:
            raise MVSParseError(f"expected {D} values, found {len(vals)}", no)
        rows.append(vals)
        line_nos.append(no)
    if len(rows) != n:
        raise MVSParseError(f"expected {n} samples, found {len(rows)}", line_nos[-1] if line_nos else 4)
    x = np.array(rows, float).reshape(shape + M.point_shape)
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(np.array(rows)), axis=1))[0])
        raise MVSParseError("non-finite entry", line_nos[bad])
    if isinstance(M, Circle):
        w = wrap_angle(x)
        if np.any(w != x):
            warnings.warn("circle angles outside [-pi, pi) were wrapped", stacklevel=2)
        return M, w
    viol = np.asarray(M.constraint_violation(x)).reshape(-1)
    if np.any(viol > REJECT_TOL):
        bad = int(np.flatnonzero(viol > REJECT_TOL)[0])
        raise MVSParseError(f"sample violates the {M.name} constraint by {viol[bad]:.2e}", line_nos[bad])
    if np.any(viol > ACCEPT_TOL):
        warnings.warn(f"{int(np.sum(viol > ACCEPT_TOL))} samples re-projected onto {M.name}", stacklevel=2)
        x = np.where(M.scal(viol.reshape(shape) > ACCEPT_TOL), M.project(x), x)
    return M, x


def read_mvs(path):
    """Read an MVS file; returns ``(manifold, array)``."""
    return loads_mvs(Path(path).read_text())

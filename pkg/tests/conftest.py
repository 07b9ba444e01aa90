import numpy as np
import pytest

from mvreg.manifolds import SPD, Circle, Euclidean, Product, Rotations3, Sphere

ALL = [Euclidean(2), Circle(), Sphere(2), Rotations3(), SPD(3), Product([Sphere(2), Euclidean(1)])]


def ids(ms):
    return [m.name for m in ms]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def near(M, rng, size, scale=0.3, center=None):
    """Random points within roughly ``scale`` of a random center."""
    size = (size,) if np.isscalar(size) else tuple(size)
    c = M.random_point(rng) if center is None else np.asarray(center, float)
    c = np.broadcast_to(c, size + M.point_shape)
    return M.exp(c, M.random_tangent(rng, c, scale))


def directional_fd(M, fn, X, V, h=1e-5):
    """Central difference of ``fn`` along ``exp(X, t V)``."""
    return (fn(M.exp(X, h * V)) - fn(M.exp(X, -h * V))) / (2 * h)


def grad_error(M, fn, grad, X, rng, h=1e-5):
    """Mismatch between ``<grad, V>`` and a central difference, relative to ``|grad| |V|``."""
    V = M.random_tangent(rng, X)
    G = grad(X)
    ana = float(np.sum(M.inner(X, G, V)))
    fd = directional_fd(M, fn, X, V, h)
    scale = np.sqrt(float(np.sum(M.inner(X, G, G))) * float(np.sum(M.inner(X, V, V))))
    return abs(ana - fd) / max(scale, abs(fd), 1e-12)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[k])

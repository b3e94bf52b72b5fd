"""The compiled kernel must agree with the numpy fallback step for step."""
import os
import subprocess
import sys

import numpy as np
import pytest

from bllab import _kernel_py, kernels
from bllab.polynomial import NonlinearDatum, Polynomial, PolynomialMap, stacked_jacobian

compiled = pytest.importorskip("bllab._kernel")


def _parabola_stack(n_points, seed=0):
    x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    d = NonlinearDatum((PolynomialMap((x,)), PolynomialMap((x + y ** 2,))), (1.0, 1.0))
    pts = np.random.default_rng(seed).uniform(-1, 1, (n_points, 2))
    return stacked_jacobian(d, pts), np.array([0, 1, 2]), np.array([1.0, 1.0]), (1, 1)


def _lw3_stack(n_points, seed=0):
    rng = np.random.default_rng(seed)
    base = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0], [0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float)
    L = base + 0.1 * rng.standard_normal((n_points, 6, 3))
    return L, np.array([0, 2, 4, 6]), np.array([0.5, 0.5, 0.5]), (2, 2, 2)


@pytest.mark.parametrize("make", [_parabola_stack, _lw3_stack])
def test_compiled_matches_python(make):
    L, off, p, dims = make(300)
    A0 = [np.broadcast_to(np.eye(k), (len(L), k, k)).copy() for k in dims]
    a = _kernel_py.solve_batch(L, off, p, [x.copy() for x in A0])
    b = compiled.solve_batch(L, off, p, [x.copy() for x in A0])
    assert np.array_equal(a[1], b[1])
    assert np.allclose(a[0], b[0], rtol=0, atol=1e-10)
    assert np.array_equal(a[2], b[2])


def test_trace_is_nondecreasing():
    L, off, p, dims = _lw3_stack(5, seed=3)
    A0 = [np.stack([np.diag([1.0, 4.0])] * len(L)) for _ in dims]
    lr, st, it, _, trace = compiled.solve_batch(L, off, p, A0, trace_len=50)
    for row, n in zip(trace, it):
        t = row[: min(50, n + 1)]
        assert np.all(np.diff(t) >= -1e-12)


def test_backend_env_forces_python():
    env = dict(os.environ, BLLAB_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from bllab import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_default_backend_is_compiled():
    if os.environ.get("BLLAB_BACKEND", "").lower() == "python":
        pytest.skip("fallback forced by the environment")
    assert kernels.BACKEND == "compiled"

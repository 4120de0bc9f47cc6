import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otbl import _kernels_py, kernels

compiled = pytest.mark.skipif("cython" not in kernels.available_backends(),
                              reason="compiled kernels not built")


def _both(name, *args):
    out = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            out[backend] = getattr(kernels, name)(*args)
    return out


def _assert_same(results):
    ref = results["python"]
    for other in results.values():
        if isinstance(ref, tuple):
            for a, b in zip(ref, other):
                np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14)
        else:
            np.testing.assert_allclose(ref, other, rtol=1e-14, atol=1e-14)


@compiled
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_backends_agree(n1, n2, seed):
    rng = np.random.default_rng(seed)
    a1, a2 = rng.standard_normal(n1), rng.standard_normal(n2)
    cost = rng.standard_normal((n1, n2))
    mask = rng.random((n1, n2)) < 0.5
    _assert_same(_both("positive_part_sums", a1, a2, cost))
    _assert_same(_both("newton_matrix", a1, a2, cost, 0.3, 0.0))
    _assert_same(_both("system_matrix_from_mask", mask, 1e-3))
    _assert_same(_both("project_simplex", rng.standard_normal(n1), 2.0))
    basis = rng.random((n1, n2)) < 0.3
    r = _both("bland_entering", cost, a1, a2, basis, 1e-12)
    assert len({tuple(v) for v in r.values()}) == 1


def test_newton_matrix_includes_zero_slack():
    N = kernels.newton_matrix(np.zeros(1), np.zeros(1), np.zeros((1, 1)), 0.0, 0.0)
    np.testing.assert_array_equal(N, [[1, 1], [1, 1]])


def test_bland_lowest_row_major_index():
    cost = np.array([[0.0, -1.0], [-5.0, 0.0]])
    basis = np.zeros((2, 2), dtype=bool)
    assert tuple(kernels.bland_entering(cost, np.zeros(2), np.zeros(2), basis, 0.0)) == (0, 1)
    assert tuple(kernels.bland_entering(np.ones((2, 2)), np.zeros(2), np.zeros(2), basis, 0.0)) == (-1, -1)


def test_use_backend_restores():
    before = kernels.active_backend()
    with kernels.use_backend("python"):
        assert kernels.active_backend() == "python"
    assert kernels.active_backend() == before
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_env_forces_fallback():
    env = dict(os.environ, OTBL_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "from otbl import kernels; print(kernels.active_backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_env_rejects_unknown_backend():
    env = dict(os.environ, OTBL_BACKEND="nope")
    out = subprocess.run([sys.executable, "-c", "import otbl.kernels"], env=env, capture_output=True, text=True)
    assert out.returncode != 0 and "OTBL_BACKEND" in out.stderr


def test_reference_projection_matches_bisection():
    rng = np.random.default_rng(3)
    v = rng.standard_normal(9)
    x = _kernels_py.project_simplex(v, 1.0)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        lo, hi = (tau, hi) if np.maximum(v - tau, 0).sum() > 1.0 else (lo, tau)
    np.testing.assert_allclose(x, np.maximum(v - lo, 0.0), atol=1e-12)

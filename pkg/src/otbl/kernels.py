"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
NumPy implementations in ``_kernels_py`` are used. Setting ``OTBL_BACKEND=python``
forces the fallback. :func:`use_backend` switches temporarily, which is what the
benchmark and the equivalence tests do.
"""

import contextlib
import importlib
import os

import numpy as np

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}
try:
    _BACKENDS["cython"] = importlib.import_module("otbl._ckernels")
except ImportError:  # extension not built
    pass


def available_backends():
    return sorted(_BACKENDS)


def _initial_backend():
    requested = os.environ.get("OTBL_BACKEND", "").strip().lower()
    if requested:
        if requested not in _BACKENDS:
            raise ImportError(
                f"OTBL_BACKEND={requested!r} is not available; have {available_backends()}"
            )
        return requested
    return "cython" if "cython" in _BACKENDS else "python"


_active = _initial_backend()
_impl = _BACKENDS[_active]


def active_backend():
    return _active


def set_backend(name):
    global _active, _impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    _active, _impl = name, _BACKENDS[name]


@contextlib.contextmanager
def use_backend(name):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _vec(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _mask(m):
    return np.ascontiguousarray(m, dtype=np.uint8)


def positive_part_sums(alpha1, alpha2, cost):
    return _impl.positive_part_sums(_vec(alpha1), _vec(alpha2), _vec(cost))


def newton_matrix(alpha1, alpha2, cost, shift=0.0, threshold=0.0):
    return _impl.newton_matrix(_vec(alpha1), _vec(alpha2), _vec(cost), float(shift), float(threshold))


def system_matrix_from_mask(mask, shift=0.0):
    return _impl.system_matrix_from_mask(_mask(mask), float(shift))


def project_simplex(v, mass=1.0):
    return _impl.project_simplex(_vec(v), float(mass))


def bland_entering(cost, u, v, basis, tol):
    return _impl.bland_entering(_vec(cost), _vec(u), _vec(v), _mask(basis), float(tol))

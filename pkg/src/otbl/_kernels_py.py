"""NumPy reference implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Inputs are assumed C-contiguous float64 (uint8 for masks); the dispatcher in
:mod:`otbl.kernels` normalizes them.
"""

import numpy as np


def positive_part_sums(alpha1, alpha2, cost):
    """Return ``P = (alpha1 (+) alpha2 - cost)_+`` with its row and column sums."""
    P = alpha1[:, None] + alpha2[None, :] - cost
    np.maximum(P, 0.0, out=P)
    return P, P.sum(axis=1), P.sum(axis=0)


def newton_matrix(alpha1, alpha2, cost, shift, threshold):
    """System matrix of ``{alpha1 (+) alpha2 - cost >= threshold}`` plus ``shift * I``."""
    mask = (alpha1[:, None] + alpha2[None, :] - cost) >= threshold
    return system_matrix_from_mask(mask.astype(np.uint8), shift)


def system_matrix_from_mask(mask, shift):
    n1, n2 = mask.shape
    chi = mask.astype(np.float64)
    N = np.zeros((n1 + n2, n1 + n2))
    N[:n1, n1:] = chi
    N[n1:, :n1] = chi.T
    diag = np.concatenate([chi.sum(axis=1), chi.sum(axis=0)]) + shift
    N[np.diag_indices(n1 + n2)] = diag
    return N


def project_simplex(v, mass):
    """Euclidean projection onto ``{x >= 0, sum(x) = mass}`` by sort and threshold."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, v.size + 1)
    cond = u - css / k > 0
    r = k[cond][-1]
    tau = css[r - 1] / r
    return np.maximum(v - tau, 0.0)


def bland_entering(cost, u, v, basis, tol):
    """First non-basic cell in row-major order with reduced cost below ``-tol``.

    Returns ``(-1, -1)`` when every reduced cost is at least ``-tol``.
    """
    reduced = cost - u[:, None] - v[None, :]
    candidates = np.flatnonzero((reduced < -tol).ravel() & (basis.ravel() == 0))
    if candidates.size == 0:
        return -1, -1
    i, j = divmod(int(candidates[0]), cost.shape[1])
    return i, j

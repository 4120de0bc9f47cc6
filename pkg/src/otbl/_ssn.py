"""Globalized semismooth Newton for the (regularized) dual transport system.

Minimizes ``phi(a) = 1/2 |(a1 (+) a2 - c)_+|^2 + reg/2 |a|^2 - gamma <a, mu>``,
whose gradient is the residual of the dual optimality system

    (a1 (+) a2 - c)_+ 1   + reg a1 = gamma mu1
    (a1 (+) a2 - c)_+^T 1 + reg a2 = gamma mu2.

``reg = gamma * epsilon`` for the doubly regularized system and ``reg = 0`` for
the plain quadratically regularized dual (then ``shift`` keeps the Newton
matrix invertible).
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 80
POLISH_STEPS = 3


@dataclass
class NewtonRun:
    alpha1: np.ndarray
    alpha2: np.ndarray
    P: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _state(a1, a2, cost, gamma, mu1, mu2, reg):
    P, rows, cols = kernels.positive_part_sums(a1, a2, cost)
    g = np.concatenate([rows + reg * a1 - gamma * mu1, cols + reg * a2 - gamma * mu2])
    phi = 0.5 * float(np.vdot(P, P)) + 0.5 * reg * (a1 @ a1 + a2 @ a2) - gamma * (a1 @ mu1 + a2 @ mu2)
    return P, g, phi


def _newton_direction(a1, a2, cost, g, diag_shift):
    N = kernels.newton_matrix(a1, a2, cost, diag_shift, 0.0)
    try:
        return -scipy.linalg.cho_solve(scipy.linalg.cho_factor(N, check_finite=False), g,
                                       check_finite=False)
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(N, g, rcond=None)[0]


def exact_step(v, w, base, curv):
    """Minimizer ``t > 0`` of ``1/2 sum (v + t w)_+^2 + base t + curv t^2 / 2``.

    The derivative is piecewise linear and nondecreasing in ``t``; the sweep
    over its breakpoints is exact. Returns ``inf`` when it never turns
    nonnegative.
    """
    v = v.ravel()
    w = w.ravel()
    on = (v > 0) | ((v == 0) & (w > 0))
    A0 = curv + float(np.sum(w[on] ** 2))
    B0 = base + float(np.sum(w[on] * v[on]))
    moving = (w != 0) & (((v > 0) & (w < 0)) | ((v < 0) & (w > 0)))
    bps = -v[moving] / w[moving]
    order = np.argsort(bps, kind="stable")
    bps = bps[order]
    sign = np.where(w[moving][order] > 0, 1.0, -1.0)
    dA = sign * w[moving][order] ** 2
    dB = sign * w[moving][order] * v[moving][order]
    A = A0 + np.concatenate([[0.0], np.cumsum(dA)])
    B = B0 + np.concatenate([[0.0], np.cumsum(dB)])
    right = np.concatenate([bps, [np.inf]])
    left = np.concatenate([[0.0], bps])
    with np.errstate(invalid="ignore", over="ignore"):
        slope_right = A * right + B
    slope_right[-1] = np.inf if A[-1] > 0 else B[-1]
    hit = np.nonzero(slope_right >= 0)[0]
    if hit.size == 0:
        return np.inf
    k = hit[0]
    if A[k] <= 0:
        return float(left[k])
    return float(np.clip(-B[k] / A[k], left[k], right[k]))


def _initial_step(a, d, n1, cost, gamma, mu1, mu2, reg):
    v = np.add.outer(a[:n1], a[n1:]) - cost
    w = np.add.outer(d[:n1], d[n1:])
    base = reg * float(a @ d) - gamma * float(d[:n1] @ mu1 + d[n1:] @ mu2)
    t = exact_step(v, w, base, reg * float(d @ d))
    return 1.0 if not np.isfinite(t) or t <= 0 else t


def newton_solve(mu1, mu2, cost, gamma, reg, alpha0, tol, max_iter, shift=0.0):
    """Run the Newton iteration until ``max|residual| <= tol``.

    Returns a :class:`NewtonRun`; the caller decides whether non-convergence
    is an error.
    """
    n1 = mu1.shape[0]
    a = np.concatenate([np.asarray(alpha0[0], dtype=float), np.asarray(alpha0[1], dtype=float)])
    P, g, phi = _state(a[:n1], a[n1:], cost, gamma, mu1, mu2, reg)
    res = float(np.abs(g).max())
    it = 0
    polish = 0
    while it < max_iter:
        if res <= tol:
            if polish >= POLISH_STEPS:
                break
            # piecewise-linear system: one more full step is usually exact
            d = _newton_direction(a[:n1], a[n1:], cost, g, reg + shift)
            trial = a + d
            P_t, g_t, phi_t = _state(trial[:n1], trial[n1:], cost, gamma, mu1, mu2, reg)
            res_t = float(np.abs(g_t).max())
            polish += 1
            if res_t < res:
                a, P, g, phi, res = trial, P_t, g_t, phi_t, res_t
                it += 1
                continue
            break
        d = _newton_direction(a[:n1], a[n1:], cost, g, reg + shift)
        slope = float(g @ d)
        if slope >= 0:
            d = -g
            slope = -float(g @ g)
        t = _initial_step(a, d, n1, cost, gamma, mu1, mu2, reg)
        for _ in range(MAX_HALVINGS):
            trial = a + t * d
            P_t, g_t, phi_t = _state(trial[:n1], trial[n1:], cost, gamma, mu1, mu2, reg)
            res_t = float(np.abs(g_t).max())
            if phi_t <= phi + ARMIJO * t * slope:
                break
            # decrease in phi is below rounding: judge by the residual instead
            if abs(phi_t - phi) <= 1e-13 * (1.0 + abs(phi)) and res_t < res:
                break
            t *= 0.5
        else:
            log.debug("line search stalled at iteration %d, residual %.3e", it, res)
            break
        a, P, g, phi, res = trial, P_t, g_t, phi_t, res_t
        it += 1
    return NewtonRun(a[:n1].copy(), a[n1:].copy(), P, res, it, res <= tol)

"""Quadratically regularized transport through its concave dual.

The regularized plan is ``pi = (1/gamma) (alpha1 (+) alpha2 - c)_+`` where the
potentials maximize the dual objective. Potentials are only determined up to
a constant shift, so the Newton matrix gets a tiny diagonal shift and the
result is normalized to ``min(alpha1) = 0``.
"""

import numpy as np

from ._ssn import newton_solve
from .core import DualPotentials, ProblemData, pos_part
from .errors import ConvergenceError, DomainError, InfeasibleError

NEWTON_SHIFT = 1e-12


def _check_gamma(gamma):
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")


def solve_qreg(data: ProblemData, gamma, alpha0=None, tol=1e-10, max_iter=200, info=None):
    """Solve the regularized problem; returns ``(plan, duals)``.

    Parameters
    ----------
    data : ProblemData
        Nonnegative, mass-compatible marginals and cost.
    gamma : float
        Regularization weight, ``> 0``.
    alpha0 : DualPotentials, optional
        Starting potentials; zero by default.
    tol : float
        Bound on ``max |pi 1 - mu1|`` and ``max |pi^T 1 - mu2|``.
    max_iter : int
        Newton iteration budget.
    info : dict, optional
        Receives ``iterations`` and ``residual`` (marginal residual).

    Raises
    ------
    ConvergenceError
        The marginal residual did not reach ``tol``.
    """
    _check_gamma(gamma)
    if not data.is_nonnegative():
        raise DomainError("marginals must be nonnegative")
    if not data.is_compatible():
        raise InfeasibleError("marginal masses differ")
    if alpha0 is None:
        alpha0 = DualPotentials.zeros(data.n1, data.n2)
    run = newton_solve(data.mu1, data.mu2, data.cost, gamma, 0.0,
                       (alpha0.alpha1, alpha0.alpha2), tol * gamma, max_iter, shift=NEWTON_SHIFT)
    if info is not None:
        info.update(iterations=run.iterations, residual=run.residual / gamma)
    if not run.converged:
        raise ConvergenceError("regularized dual did not converge", run.residual / gamma, run.iterations)
    shift = run.alpha1.min()
    duals = DualPotentials(run.alpha1 - shift, run.alpha2 + shift)
    return run.P / gamma, duals


def dual_objective_qreg(alpha: DualPotentials, data: ProblemData, gamma):
    _check_gamma(gamma)
    P = pos_part(alpha.outer() - data.cost)
    return float(alpha.alpha1 @ data.mu1 + alpha.alpha2 @ data.mu2 - np.vdot(P, P) / (2.0 * gamma))


def primal_objective_qreg(plan, data: ProblemData, gamma):
    plan = np.asarray(plan, dtype=float)
    return float(np.vdot(data.cost, plan) + 0.5 * gamma * np.vdot(plan, plan))


def duality_gap_qreg(plan, alpha, data, gamma, feas_tol=1e-9):
    """Primal minus dual objective; the plan must be a feasible coupling."""
    plan = np.asarray(plan, dtype=float)
    if (plan.shape != data.cost.shape or plan.min() < -feas_tol
            or np.abs(plan.sum(axis=1) - data.mu1).max() > feas_tol
            or np.abs(plan.sum(axis=0) - data.mu2).max() > feas_tol):
        raise DomainError("plan is not a feasible coupling of the marginals")
    return primal_objective_qreg(plan, data, gamma) - dual_objective_qreg(alpha, data, gamma)

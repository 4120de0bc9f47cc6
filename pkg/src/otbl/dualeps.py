"""The doubly regularized dual system and the marginal-to-plan map.

For ``gamma, epsilon > 0`` the system

    (a1 (+) a2 - c)_+ 1   + gamma eps a1 = gamma mu1
    (a1 (+) a2 - c)_+^T 1 + gamma eps a2 = gamma mu2

has a unique solution for arbitrary marginals (signs and masses unrestricted).
It is the optimality condition of a strongly concave dual, solved here by a
globalized semismooth Newton method.
"""

from dataclasses import dataclass

import numpy as np

from ._ssn import newton_solve
from .core import DualPotentials, IndexPartition, ProblemData, RegParams, partition_indices
from .errors import ConvergenceError
from . import kernels


@dataclass(frozen=True)
class EpsSolveResult:
    """Solution of the doubly regularized system at one marginal pair.

    ``data`` and ``params`` are kept so that derivative routines can be
    evaluated from the result alone.
    """

    duals: DualPotentials
    plan: np.ndarray
    residual: float
    partition: IndexPartition
    newton_iters: int
    data: ProblemData
    params: RegParams


def solve_dual_eps(data: ProblemData, params: RegParams, alpha0=None, tol=1e-12, max_iter=100):
    """Solve the system for ``data.mu1, data.mu2``.

    ``residual`` is the max-norm of the left minus right hand side. Raises
    :class:`ConvergenceError` when it stays above ``tol``.
    """
    params.require_epsilon()
    if alpha0 is None:
        alpha0 = DualPotentials.zeros(data.n1, data.n2)
    run = newton_solve(data.mu1, data.mu2, data.cost, params.gamma, params.shift,
                       (alpha0.alpha1, alpha0.alpha2), tol, max_iter)
    if not run.converged:
        raise ConvergenceError("doubly regularized dual did not converge", run.residual, run.iterations)
    duals = DualPotentials(run.alpha1, run.alpha2)
    return EpsSolveResult(
        duals=duals,
        plan=run.P / params.gamma,
        residual=run.residual,
        partition=partition_indices(duals, data.cost),
        newton_iters=run.iterations,
        data=data,
        params=params,
    )


def s_map(mu1, mu2, cost, params, alpha0=None, tol=1e-12, max_iter=100):
    """Regularized transport plan for the marginals ``(mu1, mu2)``."""
    return solve_dual_eps(ProblemData(mu1, mu2, cost), params, alpha0, tol, max_iter).plan


def f_inverse(alpha: DualPotentials, cost, params: RegParams):
    """Marginals whose solution is ``alpha``; closed form, no iteration."""
    params.require_epsilon()
    _, rows, cols = kernels.positive_part_sums(alpha.alpha1, alpha.alpha2, cost)
    ge = params.shift
    return ((rows + ge * alpha.alpha1) / params.gamma, (cols + ge * alpha.alpha2) / params.gamma)


def result_from_duals(alpha: DualPotentials, cost, params: RegParams):
    """Result object at prescribed potentials, with the marginals ``f_inverse(alpha)``.

    The only way to sit exactly on a kink: solving would perturb the zero
    slacks by the solver tolerance.
    """
    cost = np.asarray(cost, dtype=float)
    mu1, mu2 = f_inverse(alpha, cost, params)
    P = np.maximum(alpha.outer() - cost, 0.0)
    return EpsSolveResult(
        duals=alpha,
        plan=P / params.gamma,
        residual=0.0,
        partition=partition_indices(alpha, cost),
        newton_iters=0,
        data=ProblemData(mu1, mu2, cost),
        params=params,
    )

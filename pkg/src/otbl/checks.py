"""Finite-difference and adjoint checks for the plan-map derivatives.

Used by the ``check-derivatives`` command and by the test suite. The plan
map is piecewise linear in the marginals, so central differences are exact
up to the solver tolerance as long as the step does not cross a kink.
"""

from dataclasses import dataclass, field

import numpy as np

from . import sens
from .core import DualPotentials, ProblemData, RegParams
from .dualeps import result_from_duals, solve_dual_eps
from .errors import NondifferentiableError

FD_STEP = 1e-5
SOLVE_TOL = 1e-14
THRESHOLDS = {"jacobian_fd": 1e-5, "adjoint": 1e-12, "composite_fd": 1e-5, "directional_fd": 1e-5}


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / scale


def grid_cost(n1, n2, exponent=2.0):
    return np.abs(np.subtract.outer(np.arange(n1), np.arange(n2))).astype(float) ** exponent


def seeded_point(seed, n1=5, n2=5, params=RegParams(1e-2, 1e-2)):
    """Solved point at dense random marginals of unit mass; differentiable almost surely."""
    rng = np.random.default_rng(seed)
    mu1 = rng.uniform(0.5, 1.5, n1)
    mu2 = rng.uniform(0.5, 1.5, n2)
    data = ProblemData(mu1 / mu1.sum(), mu2 / mu2.sum(), grid_cost(n1, n2))
    return solve_dual_eps(data, params, tol=SOLVE_TOL, max_iter=500)


def kink_point(seed, n1=5, n2=5, params=RegParams(1e-2, 1e-2), num_zero=1):
    """Point with ``num_zero`` cells whose dual slack is exactly zero.

    Random potentials are adjusted so the chosen cells (distinct rows and
    columns) sit on the activation boundary; the marginals follow from the
    closed-form inverse.
    """
    rng = np.random.default_rng(seed)
    cost = grid_cost(n1, n2)
    a1 = rng.uniform(0.0, 2.0, n1)
    a2 = rng.uniform(0.0, 2.0, n2)
    rows = rng.choice(n1, num_zero, replace=False)
    cols = rng.choice(n2, num_zero, replace=False)
    for i, j in zip(rows, cols):
        a2[j] = cost[i, j] - a1[i]
    return result_from_duals(DualPotentials(a1, a2), cost, params)


def _plan_at(result, mu1, mu2):
    data = result.data.with_marginals(mu1, mu2)
    return solve_dual_eps(data, result.params, alpha0=result.duals, tol=SOLVE_TOL, max_iter=500).plan


def jacobian_fd_error(result, step=FD_STEP):
    """Relative Frobenius error of the Jacobian against central differences, column by column."""
    J = sens.jacobian_S(result)
    mu = np.concatenate([result.data.mu1, result.data.mu2])
    n1 = result.data.n1
    cols = []
    for k in range(mu.size):
        e = np.zeros_like(mu)
        e[k] = step
        up, dn = mu + e, mu - e
        cols.append(((_plan_at(result, up[:n1], up[n1:]) - _plan_at(result, dn[:n1], dn[n1:]))
                     / (2 * step)).ravel())
    return _rel(np.column_stack(cols), J.dense())


def adjoint_error(J, rng):
    """``<W, J h>`` against ``<J* W, h>`` for one random pair."""
    h1, h2 = rng.standard_normal(J.n1), rng.standard_normal(J.n2)
    W = rng.standard_normal((J.n1, J.n2))
    lhs = float(np.vdot(W, J.apply(h1, h2)))
    p1, p2 = J.adjoint(W)
    rhs = float(p1 @ h1 + p2 @ h2)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def composite_fd_error(result, rng, lam=1.0, step=FD_STEP):
    """Composite subgradient of ``1/2|S - pi_d|^2 + lam/2 |mu1 - mu_d|^2`` against central differences in ``mu1``."""
    n1, n2 = result.data.n1, result.data.n2
    pi_d = np.abs(rng.standard_normal((n1, n2))) / (n1 * n2)
    mu_d = np.abs(rng.standard_normal(n1)) / n1
    mu1, mu2 = result.data.mu1, result.data.mu2

    def objective(m1):
        plan = _plan_at(result, m1, mu2)
        return 0.5 * float(np.vdot(plan - pi_d, plan - pi_d)) + 0.5 * lam * float((m1 - mu_d) @ (m1 - mu_d))

    g1, _ = sens.composite_subgradient(result, result.plan - pi_d, lam * (mu1 - mu_d))
    fd = np.empty(n1)
    for i in range(n1):
        e = np.zeros(n1)
        e[i] = step
        fd[i] = (objective(mu1 + e) - objective(mu1 - e)) / (2 * step)
    return _rel(fd, g1)


def directional_fd_error(result, rng, step=FD_STEP):
    """Directional derivative at a kink against a one-sided difference along a random direction."""
    n1, n2 = result.data.n1, result.data.n2
    h1, h2 = rng.standard_normal(n1), rng.standard_normal(n2)
    d = sens.directional_derivative_S(result, (h1, h2))
    fd = (_plan_at(result, result.data.mu1 + step * h1, result.data.mu2 + step * h2) - result.plan) / step
    return _rel(fd, d)


@dataclass
class DerivativeReport:
    points: int
    errors: dict
    kinks: int = 0
    notes: list = field(default_factory=list)

    def passed(self):
        return not self.notes and all(self.errors[k] <= THRESHOLDS[k] for k in self.errors)


def run_derivative_checks(seed=0, num_points=20, n1=5, n2=5, params=RegParams(1e-2, 1e-2),
                          kink=False, allow_kinks=False):
    """Run the suites at ``num_points`` seeded points; errors are maxima over points.

    With ``kink`` the points carry a zero-slack cell. Unless ``allow_kinks``
    is set, the Jacobian check then fails with a note; with it, the
    directional derivative and every Bouligand element are checked instead.
    """
    rng = np.random.default_rng([seed, 1])
    errors = {}
    report = DerivativeReport(points=num_points, errors=errors)

    def record(key, value):
        errors[key] = max(errors.get(key, 0.0), value)

    for k in range(num_points):
        point_seed = [seed, 0, k]
        result = kink_point(point_seed, n1, n2, params) if kink else seeded_point(point_seed, n1, n2, params)
        if not sens.is_differentiable(result):
            report.kinks += 1
            if not allow_kinks:
                try:
                    sens.jacobian_S(result)
                except NondifferentiableError as exc:
                    report.notes.append(f"point {k}: NondifferentiableError: {exc}")
                continue
            record("directional_fd", directional_fd_error(result, rng))
            for J in sens.bouligand_subdifferential(result):
                record("adjoint", adjoint_error(J, rng))
            continue
        record("jacobian_fd", jacobian_fd_error(result))
        record("adjoint", adjoint_error(sens.jacobian_S(result), rng))
        record("composite_fd", composite_fd_error(result, rng))
    return report

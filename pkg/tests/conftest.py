import numpy as np
import pytest

from otbl.core import DualPotentials, ProblemData, RegParams
from otbl.dualeps import result_from_duals

# 3x3 instance with three optimal LP plans; the regularized limit is PI3
CE_MU1 = np.array([1.0, 1.0, 0.0])
CE_MU2 = np.array([0.0, 1.0, 1.0])
CE_COST = np.abs(np.subtract.outer(np.arange(3), np.arange(3))).astype(float)
PI1 = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
PI2 = np.array([[0, 0, 1], [0, 1, 0], [0, 0, 0]], dtype=float)
PI3 = np.array([[0, 0.5, 0.5], [0, 0.5, 0.5], [0, 0, 0]])


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def counterexample():
    return ProblemData(CE_MU1, CE_MU2, CE_COST)


def constructed_kink(zero_cells, n1=4, n2=4, params=RegParams(1e-2, 1e-2), seed=0):
    """Solved point whose zero-slack cells are exactly ``zero_cells``.

    The cost is built around random potentials: equal to the outer sum on
    ``zero_cells`` and off by at least 0.1 elsewhere, with random sign.
    """
    rng = np.random.default_rng(seed)
    a1, a2 = rng.uniform(0, 1, n1), rng.uniform(0, 1, n2)
    outer = np.add.outer(a1, a2)
    offset = rng.uniform(0.1, 0.5, (n1, n2)) * rng.choice([-1.0, 1.0], (n1, n2))
    for c in zero_cells:
        offset[c] = 0.0
    cost = outer - offset
    # the slack is exactly representable only if cost == outer bitwise
    for c in zero_cells:
        cost[c] = a1[c[0]] + a2[c[1]]
    return result_from_duals(DualPotentials(a1, a2), cost, params)


def perturbation_active_sets(result, num_directions=400, seed=0):
    """Active sets reached at ``F^{-1}(alpha + t v)`` for random directions ``v``.

    For small ``t`` only the zero-slack cells change status, and they become
    active exactly where ``v1 (+) v2 > 0``. Each perturbed point is re-solved
    from scratch so the active set does not come from the construction.
    Returns ``{active_set: dense Jacobian}``.
    """
    from otbl import sens
    from otbl.dualeps import f_inverse, solve_dual_eps

    rng = np.random.default_rng(seed)
    alpha, cost, params = result.duals, result.data.cost, result.params
    slack = alpha.outer() - cost
    zero = result.partition.zero.to_mask(*cost.shape)
    gap = np.abs(slack[~zero]).min()
    found = {}
    for _ in range(num_directions):
        v1, v2 = rng.standard_normal(cost.shape[0]), rng.standard_normal(cost.shape[1])
        w = np.add.outer(v1, v2)
        if np.abs(w[zero]).min() < 1e-3:
            continue
        t = 1e-2 * gap / np.abs(w).max()
        moved = DualPotentials(alpha.alpha1 + t * v1, alpha.alpha2 + t * v2)
        mu1, mu2 = f_inverse(moved, cost, params)
        r = solve_dual_eps(result.data.with_marginals(mu1, mu2), params, tol=1e-14, max_iter=200)
        assert sens.is_differentiable(r)
        found.setdefault(r.partition.plus, sens.jacobian_S(r).dense())
    return found

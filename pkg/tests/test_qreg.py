import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otbl.core import DualPotentials, ProblemData
from otbl.errors import ConvergenceError, DomainError, InfeasibleError
from otbl.lp_oracle import solve_hitchcock
from otbl.qreg import dual_objective_qreg, duality_gap_qreg, primal_objective_qreg, solve_qreg

from conftest import PI1, PI3


def _instance(seed, n1, n2, spread=1.0):
    rng = np.random.default_rng(seed)
    mu1, mu2 = rng.uniform(0.1, 1, n1), rng.uniform(0.1, 1, n2)
    mu1 /= mu1.sum()
    mu2 /= mu2.sum()
    return ProblemData(mu1, mu2, spread * rng.random((n1, n2)))


def _projected_gradient_2x2(data, gamma, iters=5000):
    # 2x2 couplings form a segment parametrized by the (0, 0) entry
    m1, m2 = data.mu1, data.mu2
    lo, hi = max(0.0, m2[0] - m1[1]), min(m1[0], m2[0])

    def plan(t):
        return np.array([[t, m1[0] - t], [m2[0] - t, m1[1] - m2[0] + t]])

    direction = np.array([[1.0, -1.0], [-1.0, 1.0]])
    t = 0.5 * (lo + hi)
    for _ in range(iters):
        grad = float(np.sum((data.cost + gamma * plan(t)) * direction))
        t = min(max(t - grad / (4 * gamma), lo), hi)
    return plan(t)


@pytest.mark.parametrize("gamma", [1e-1, 1e-2])
def test_counterexample_gives_pi3(counterexample, gamma):
    plan, duals = solve_qreg(counterexample, gamma)
    np.testing.assert_allclose(plan, PI3, atol=1e-8)
    np.testing.assert_allclose(plan, np.maximum(duals.outer() - counterexample.cost, 0) / gamma, atol=1e-14)
    assert duals.alpha1.min() == 0.0


def test_one_by_one():
    m, k, gamma = 2.0, 3.0, 0.25
    plan, duals = solve_qreg(ProblemData([m], [m], [[k]]), gamma)
    assert plan[0, 0] == pytest.approx(m, abs=1e-12)
    assert duals.alpha1[0] + duals.alpha2[0] == pytest.approx(k + gamma * m, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("gamma", [1.0, 1e-1, 1e-2])
def test_2x2_against_projected_gradient(seed, gamma):
    data = _instance(seed, 2, 2)
    plan, _ = solve_qreg(data, gamma)
    np.testing.assert_allclose(plan, _projected_gradient_2x2(data, gamma), atol=1e-7)


def test_dual_objective_examples(counterexample):
    assert dual_objective_qreg(DualPotentials.zeros(3, 3), counterexample, 0.3) == 0.0
    m, k, gamma = 2.0, 3.0, 0.5
    data = ProblemData([m], [m], [[k]])
    alpha = DualPotentials([k + gamma * m], [0.0])
    assert dual_objective_qreg(alpha, data, gamma) == m * k + gamma * m * m / 2
    assert primal_objective_qreg([[m]], data, gamma) == m * k + gamma * m * m / 2
    assert duality_gap_qreg([[m]], alpha, data, gamma) == 0.0


def test_counterexample_no_duality_gap(counterexample):
    gamma = 1e-2
    plan, duals = solve_qreg(counterexample, gamma)
    primal = primal_objective_qreg(plan, counterexample, gamma)
    assert dual_objective_qreg(duals, counterexample, gamma) == pytest.approx(primal, abs=1e-9)
    assert abs(duality_gap_qreg(plan, duals, counterexample, gamma)) <= 1e-9 * (1 + abs(primal))


def test_product_coupling_is_the_regularized_optimum(counterexample):
    product = np.outer(counterexample.mu1, counterexample.mu2) / counterexample.mass
    np.testing.assert_array_equal(product, PI3)


def test_non_optimal_plan_has_positive_gap(counterexample):
    gamma = 1e-2
    _, duals = solve_qreg(counterexample, gamma)
    # primal values 2 + gamma for PI1 against 2 + gamma / 2 at the optimum
    assert duality_gap_qreg(PI1, duals, counterexample, gamma) == pytest.approx(gamma / 2, abs=1e-9)


def test_gap_rejects_infeasible_plan(counterexample):
    with pytest.raises(DomainError):
        duality_gap_qreg(np.zeros((3, 3)), DualPotentials.zeros(3, 3), counterexample, 1.0)


def test_errors(counterexample):
    with pytest.raises(DomainError):
        solve_qreg(counterexample, 0.0)
    with pytest.raises(InfeasibleError):
        solve_qreg(ProblemData([1.0], [2.0], [[0.0]]), 1.0)
    with pytest.raises(DomainError):
        solve_qreg(ProblemData([-1.0, 2.0], [1.0], [[0.0], [0.0]]), 1.0)
    with pytest.raises(ConvergenceError) as exc:
        solve_qreg(_instance(0, 6, 6), 1e-3, max_iter=1)
    assert exc.value.residual > 0


def test_info_dict(counterexample):
    info = {}
    solve_qreg(counterexample, 1e-2, info=info)
    assert info["iterations"] >= 1 and info["residual"] <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 1e-1, 1e-2]))
def test_solution_contract_and_uniqueness(n1, n2, seed, gamma):
    data = _instance(seed, n1, n2)
    tol = 1e-10
    plan, duals = solve_qreg(data, gamma, tol=tol)
    np.testing.assert_allclose(plan, np.maximum(duals.outer() - data.cost, 0) / gamma, atol=1e-13)
    assert np.abs(plan.sum(axis=1) - data.mu1).max() <= tol
    assert np.abs(plan.sum(axis=0) - data.mu2).max() <= tol
    gap = duality_gap_qreg(plan, duals, data, gamma)
    assert -1e-10 <= gap <= 1e-9 * (1 + abs(primal_objective_qreg(plan, data, gamma)))
    rng = np.random.default_rng(seed)
    start = DualPotentials(rng.standard_normal(n1), rng.standard_normal(n2))
    other, _ = solve_qreg(data, gamma, alpha0=start, tol=tol)
    np.testing.assert_allclose(other, plan, atol=1e-7)


def test_regularization_path(counterexample):
    lp_value = solve_hitchcock(counterexample).value
    values = []
    for gamma in (1e-4, 1e-3, 1e-2, 1e-1):
        plan, _ = solve_qreg(counterexample, gamma)
        values.append(primal_objective_qreg(plan, counterexample, gamma))
        transport = float(np.sum(counterexample.cost * plan))
        assert -1e-9 <= transport - lp_value <= gamma * float(np.vdot(plan, plan)) / 2 + 1e-8
    assert all(a <= b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("seed", range(3))
def test_regularization_path_random(seed):
    data = _instance(seed, 5, 4)
    lp_value = solve_hitchcock(data).value
    previous = -np.inf
    for gamma in (1e-4, 1e-3, 1e-2, 1e-1):
        plan, _ = solve_qreg(data, gamma)
        value = primal_objective_qreg(plan, data, gamma)
        assert value >= previous - 1e-12
        previous = value
        transport = float(np.sum(data.cost * plan))
        assert transport - lp_value <= gamma * float(np.vdot(plan, plan)) / 2 + 1e-8

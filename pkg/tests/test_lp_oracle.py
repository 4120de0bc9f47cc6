import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from otbl.core import ProblemData
from otbl.errors import CapacityError, DomainError, InfeasibleError
from otbl.lp_oracle import (
    LPSolution,
    basic_feasible_solutions,
    check_optimality,
    enumerate_optimal_faces,
    solve_hitchcock,
)

from conftest import PI1, PI2, PI3


def _random_instance(rng, n1, n2, zeros=False):
    mu1, mu2 = rng.random(n1), rng.random(n2)
    if zeros:
        mu1[rng.random(n1) < 0.3] = 0.0
        mu2[rng.random(n2) < 0.3] = 0.0
        mu1[0] += 0.1
        mu2[-1] += 0.1
    mu1 /= mu1.sum()
    mu2 *= mu1.sum() / mu2.sum()
    return ProblemData(mu1, mu2, rng.random((n1, n2)))


def _linprog_value(data):
    n1, n2 = data.n1, data.n2
    A = np.zeros((n1 + n2, n1 * n2))
    for i in range(n1):
        A[i, i * n2:(i + 1) * n2] = 1.0
    for j in range(n2):
        A[n1 + j, j::n2] = 1.0
    res = linprog(data.cost.ravel(), A_eq=A, b_eq=np.concatenate([data.mu1, data.mu2]),
                  bounds=(0, None), method="highs")
    return res.fun


def test_counterexample_value(counterexample):
    sol = solve_hitchcock(counterexample)
    assert sol.value == 2.0
    assert float(np.sum(counterexample.cost * PI1)) == 2.0
    assert check_optimality(sol, counterexample)


def test_one_by_one():
    sol = solve_hitchcock(ProblemData([2.5], [2.5], [[3.0]]))
    np.testing.assert_array_equal(sol.plan, [[2.5]])
    assert sol.value == pytest.approx(7.5)


@pytest.mark.parametrize("seed", range(5))
def test_4x4_matches_vertex_enumeration_and_highs(seed):
    data = _random_instance(np.random.default_rng(seed), 4, 4)
    sol = solve_hitchcock(data)
    brute = min(float(np.sum(data.cost * p)) for p in basic_feasible_solutions(data))
    assert sol.value == pytest.approx(brute, abs=1e-12)
    assert sol.value == pytest.approx(_linprog_value(data), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1), st.booleans())
def test_solver_contract(n1, n2, seed, zeros):
    data = _random_instance(np.random.default_rng(seed), n1, n2, zeros)
    sol = solve_hitchcock(data)
    plan = sol.plan
    assert plan.min() >= -1e-9
    np.testing.assert_allclose(plan.sum(axis=1), data.mu1, atol=1e-9)
    np.testing.assert_allclose(plan.sum(axis=0), data.mu2, atol=1e-9)
    assert (sol.duals.outer() <= data.cost + 1e-9).all()
    assert float(np.sum((data.cost - sol.duals.outer()) * plan)) <= 1e-9 * (1 + abs(sol.value))
    assert sol.value == pytest.approx(float(np.sum(data.cost * plan)), abs=1e-15)
    # strong duality
    dual = sol.duals.alpha1 @ data.mu1 + sol.duals.alpha2 @ data.mu2
    assert abs(sol.value - dual) <= 1e-9 * (1 + abs(sol.value))
    assert check_optimality(sol, data)
    assert sol.value == pytest.approx(_linprog_value(data), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_cost_shift_invariance(n, seed, shift):
    data = _random_instance(np.random.default_rng(seed), n, n)
    base = solve_hitchcock(data).value
    moved = solve_hitchcock(ProblemData(data.mu1, data.mu2, data.cost + shift)).value
    assert moved == pytest.approx(base + shift * data.mass, abs=1e-9)


def test_degenerate_instance_terminates():
    # zero marginal entries make the northwest basis degenerate
    data = ProblemData([0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 0.0], np.arange(16.0).reshape(4, 4) % 5)
    sol = solve_hitchcock(data)
    assert check_optimality(sol, data)
    assert sol.value == pytest.approx(_linprog_value(data), abs=1e-12)


def test_errors():
    with pytest.raises(InfeasibleError):
        solve_hitchcock(ProblemData([1.0], [2.0], [[0.0]]))
    with pytest.raises(DomainError):
        solve_hitchcock(ProblemData([-1.0, 2.0], [1.0], [[0.0], [0.0]]))


def test_check_optimality_shared_duals(counterexample):
    sol = solve_hitchcock(counterexample)
    for plan in (PI1, PI2, PI3):
        assert check_optimality(LPSolution(plan, sol.duals, 2.0, 0), counterexample)


def test_check_optimality_perturbed(counterexample):
    sol = solve_hitchcock(counterexample)
    bad = sol.plan.copy()
    bad[0, 1] += 0.1
    assert not check_optimality(LPSolution(bad, sol.duals, sol.value, 0), counterexample)
    assert not check_optimality(LPSolution(np.zeros((2, 2)), sol.duals, 0.0, 0), counterexample)


def test_enumerate_counterexample(counterexample):
    faces = enumerate_optimal_faces(counterexample)
    assert any(np.array_equal(f, PI1) for f in faces)
    assert any(np.array_equal(f, PI2) for f in faces)
    sol = solve_hitchcock(counterexample)
    for f in faces:
        assert check_optimality(LPSolution(f, sol.duals, 2.0, 0), counterexample)


def test_enumerate_unique_2x2():
    data = ProblemData([0.4, 0.6], [0.5, 0.5], [[0.0, 1.0], [3.0, 0.5]])
    faces = enumerate_optimal_faces(data)
    assert len(faces) == 1
    np.testing.assert_allclose(faces[0], solve_hitchcock(data).plan, atol=1e-15)


def test_enumerate_1x1_and_capacity():
    faces = enumerate_optimal_faces(ProblemData([2.0], [2.0], [[1.0]]))
    assert len(faces) == 1 and faces[0][0, 0] == 2.0
    with pytest.raises(CapacityError):
        enumerate_optimal_faces(ProblemData(np.ones(5), np.ones(5), np.zeros((5, 5))))


@pytest.mark.parametrize("seed", range(4))
def test_enumerated_faces_are_optimal(seed):
    rng = np.random.default_rng(seed)
    # integer costs produce ties and several optimal vertices
    data = ProblemData(np.full(3, 1 / 3), np.full(3, 1 / 3), rng.integers(0, 2, (3, 3)).astype(float))
    sol = solve_hitchcock(data)
    faces = enumerate_optimal_faces(data)
    assert faces
    for f in faces:
        assert check_optimality(LPSolution(f, sol.duals, sol.value, 0), data)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otbl.core import (
    DualPotentials,
    IndexSet,
    ProblemData,
    RegParams,
    adjoint_outer,
    characteristic_matrix,
    mask,
    max_prime,
    outer_sum,
    partition_indices,
    pos_part,
    system_matrix,
)
from otbl.errors import DomainError
from otbl.qreg import solve_qreg

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_outer_sum_examples():
    np.testing.assert_array_equal(outer_sum([1, 2], [10, 20]), [[11, 21], [12, 22]])
    np.testing.assert_array_equal(outer_sum(np.zeros(3), np.zeros(2)), np.zeros((3, 2)))
    np.testing.assert_array_equal(outer_sum([1.5], [-4.0]), [[-2.5]])


def test_adjoint_outer_examples():
    r, c = adjoint_outer([[11, 21], [12, 22]])
    np.testing.assert_array_equal(r, [32, 34])
    np.testing.assert_array_equal(c, [23, 43])
    r, c = adjoint_outer(np.eye(2))
    np.testing.assert_array_equal(r, [1, 1])
    np.testing.assert_array_equal(c, [1, 1])


def test_adjoint_outer_seeded_3x4():
    rng = np.random.default_rng(7)
    v1, v2, M = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal((3, 4))
    lhs = sum(M[i, j] * (v1[i] + v2[j]) for i in range(3) for j in range(4))
    r, c = adjoint_outer(M)
    assert lhs == pytest.approx(v1 @ r + v2 @ c, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_adjointness_property(n1, n2, seed):
    rng = np.random.default_rng(seed)
    v1, v2, M = rng.standard_normal(n1), rng.standard_normal(n2), rng.standard_normal((n1, n2))
    r, c = adjoint_outer(M)
    lhs = float(np.vdot(outer_sum(v1, v2), M))
    rhs = float(v1 @ r + v2 @ c)
    scale = float(np.abs(np.add.outer(v1, v2) * M).sum())
    assert abs(lhs - rhs) <= 1e-13 * max(scale, 1.0)


def test_pos_part_examples():
    np.testing.assert_array_equal(pos_part([[-1, 2], [0, -3]]), [[0, 2], [0, 0]])
    M = np.array([[0.0, 1.0], [2.0, 3.0]])
    np.testing.assert_array_equal(pos_part(M), M)
    np.testing.assert_array_equal(pos_part(-M), np.zeros((2, 2)))


def test_characteristic_matrix_examples():
    np.testing.assert_array_equal(characteristic_matrix(IndexSet([(0, 0)]), 2, 2), [[1, 0], [0, 0]])
    np.testing.assert_array_equal(characteristic_matrix(IndexSet(), 2, 3), np.zeros((2, 3)))
    np.testing.assert_array_equal(characteristic_matrix(IndexSet.full(2, 3), 2, 3), np.ones((2, 3)))
    with pytest.raises(DomainError):
        characteristic_matrix(IndexSet([(2, 0)]), 2, 2)


def test_mask_examples():
    M = np.array([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(mask(IndexSet([(0, 0)]), M), [[5, 0], [0, 0]])
    np.testing.assert_array_equal(mask(IndexSet.full(2, 2), M), M)
    np.testing.assert_array_equal(mask(IndexSet(), M), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        mask(IndexSet([(0, 2)]), M)


def test_system_matrix_examples():
    np.testing.assert_array_equal(
        system_matrix(IndexSet.full(2, 2), 2, 2),
        [[2, 0, 1, 1], [0, 2, 1, 1], [1, 1, 2, 0], [1, 1, 0, 2]],
    )
    np.testing.assert_array_equal(system_matrix(IndexSet(), 2, 2), np.zeros((4, 4)))
    np.testing.assert_array_equal(
        system_matrix(IndexSet([(0, 1)]), 2, 2),
        [[1, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 1]],
    )


def test_system_matrix_shift():
    K = system_matrix(IndexSet([(0, 0)]), 1, 2, shift=0.5)
    np.testing.assert_array_equal(K, [[1.5, 1, 0], [1, 1.5, 0], [0, 0, 0.5]])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_system_matrix_psd_symmetric(n1, n2, seed):
    rng = np.random.default_rng(seed)
    A = IndexSet.from_mask(rng.random((n1, n2)) < 0.5)
    N = system_matrix(A, n1, n2)
    np.testing.assert_array_equal(N, N.T)
    assert (N >= 0).all()
    assert np.linalg.eigvalsh(N).min() >= -1e-10
    # diagonal dominance
    assert (2 * np.diag(N) >= np.abs(N).sum(axis=1) - 1e-12).all()


def test_partition_examples():
    p = partition_indices(DualPotentials([1.0], [1.0]), [[1.0]])
    assert p.plus == IndexSet([(0, 0)]) and len(p.zero) == 0 and len(p.minus) == 0
    p = partition_indices(DualPotentials([0.0], [0.0]), [[0.0]])
    assert p.zero == IndexSet([(0, 0)])


def test_partition_counterexample_support(counterexample):
    _, duals = solve_qreg(counterexample, 1e-2)
    p = partition_indices(duals, counterexample.cost)
    assert p.plus == IndexSet([(0, 1), (0, 2), (1, 1), (1, 2)])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_partition_covers_grid(n1, n2, seed):
    rng = np.random.default_rng(seed)
    # integer data so exact zeros occur
    alpha = DualPotentials(rng.integers(-2, 3, n1), rng.integers(-2, 3, n2))
    cost = rng.integers(-2, 3, (n1, n2)).astype(float)
    p = partition_indices(alpha, cost, activation_tol=0.0)
    sets = [set(p.plus), set(p.zero), set(p.minus)]
    assert sum(len(s) for s in sets) == n1 * n2
    assert set().union(*sets) == set(IndexSet.full(n1, n2))
    values = alpha.outer() - cost
    assert all(values[c] > 0 for c in p.plus) and all(values[c] == 0 for c in p.zero)


def test_partition_negative_tol_rejected():
    with pytest.raises(DomainError):
        partition_indices(DualPotentials([0.0], [0.0]), [[0.0]], activation_tol=-1.0)


def test_max_prime_branches():
    assert max_prime(2, -3) == -3
    assert max_prime(0, -3) == 0
    assert max_prime(0, 4) == 4
    assert max_prime(-1, 5) == 0
    np.testing.assert_array_equal(max_prime([[1, 0], [0, -1]], [[-2, -2], [3, 3]]), [[-2, 0], [3, 0]])


@given(finite, finite, st.floats(1e-3, 1e3))
def test_max_prime_positively_homogeneous(a, b, t):
    assert max_prime(a, t * b) == pytest.approx(t * max_prime(a, b), rel=1e-12, abs=1e-300)


def test_index_set_canonical():
    A = IndexSet([(1, 0), (0, 1), (1, 0)])
    assert A.members == ((0, 1), (1, 0))
    assert A == IndexSet([(0, 1), (1, 0)])
    assert hash(A) == hash(IndexSet([(1, 0), (0, 1)]))
    assert (0, 1) in A and len(A) == 2


def test_problem_data_validation():
    with pytest.raises(DomainError):
        ProblemData([1.0], [1.0, 2.0], np.zeros((1, 1)))
    d = ProblemData([1.0], [1.0 + 1e-13], [[0.0]])
    assert d.is_compatible()
    assert not ProblemData([1.0], [1.1], [[0.0]]).is_compatible()
    assert not ProblemData([-1.0], [1.0], [[0.0]]).is_nonnegative()
    with pytest.raises(ValueError):
        d.mu1[0] = 3.0


@pytest.mark.parametrize("gamma,eps", [(0.0, 1.0), (-1.0, 1.0), (1.0, -1.0)])
def test_reg_params_rejects(gamma, eps):
    with pytest.raises(DomainError):
        RegParams(gamma, eps)


def test_reg_params_epsilon_zero_only_for_qreg():
    p = RegParams(1.0)
    with pytest.raises(DomainError):
        p.require_epsilon()
    assert RegParams(0.5, 0.2).shift == pytest.approx(0.1)


@given(arrays(np.float64, 4, elements=finite))
def test_pos_part_idempotent(v):
    np.testing.assert_array_equal(pos_part(pos_part(v)), pos_part(v))

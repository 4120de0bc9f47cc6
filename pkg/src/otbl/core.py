"""Index-grid algebra shared by the solvers.

Indices are 0-based ``(i1, i2)`` pairs into an ``n1 x n2`` grid. Matrices are
dense row-major ``numpy`` arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError

# Relative activation tolerance used by partition_indices when none is given.
ACTIVATION_RTOL = 1e-12
MASS_RTOL = 1e-12


def _frozen(a, ndim):
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DomainError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProblemData:
    """Marginals and cost of one transport instance."""

    mu1: np.ndarray
    mu2: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu1", _frozen(self.mu1, 1))
        object.__setattr__(self, "mu2", _frozen(self.mu2, 1))
        object.__setattr__(self, "cost", _frozen(self.cost, 2))
        if self.cost.shape != (self.n1, self.n2):
            raise DomainError(
                f"cost has shape {self.cost.shape}, marginals need ({self.n1}, {self.n2})"
            )
        if self.n1 == 0 or self.n2 == 0:
            raise DomainError("marginals must be non-empty")

    @property
    def n1(self):
        return self.mu1.shape[0]

    @property
    def n2(self):
        return self.mu2.shape[0]

    @property
    def mass(self):
        return float(self.mu1.sum())

    def is_compatible(self):
        s1, s2 = self.mu1.sum(), self.mu2.sum()
        return abs(s1 - s2) <= MASS_RTOL * max(1.0, abs(s1))

    def is_nonnegative(self):
        return bool((self.mu1 >= 0).all() and (self.mu2 >= 0).all())

    def with_marginals(self, mu1, mu2=None):
        return ProblemData(mu1, self.mu2 if mu2 is None else mu2, self.cost)


@dataclass(frozen=True)
class DualPotentials:
    alpha1: np.ndarray
    alpha2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha1", _frozen(self.alpha1, 1))
        object.__setattr__(self, "alpha2", _frozen(self.alpha2, 1))

    @classmethod
    def zeros(cls, n1, n2):
        return cls(np.zeros(n1), np.zeros(n2))

    def outer(self):
        return outer_sum(self.alpha1, self.alpha2)

    def stacked(self):
        return np.concatenate([self.alpha1, self.alpha2])


class IndexSet:
    """Immutable set of grid cells kept in row-major order."""

    __slots__ = ("_members",)

    def __init__(self, members=()):
        cells = sorted({(int(i), int(j)) for i, j in members})
        self._members = tuple(cells)

    @classmethod
    def from_mask(cls, mask):
        rows, cols = np.nonzero(np.asarray(mask))
        return cls(zip(rows.tolist(), cols.tolist()))

    @classmethod
    def full(cls, n1, n2):
        return cls((i, j) for i in range(n1) for j in range(n2))

    @property
    def members(self):
        return self._members

    def to_mask(self, n1, n2):
        return characteristic_matrix(self, n1, n2).astype(bool)

    def check_within(self, n1, n2):
        for i, j in self._members:
            if not (0 <= i < n1 and 0 <= j < n2):
                raise DomainError(f"cell {(i, j)} lies outside the {n1}x{n2} grid")

    def union(self, other):
        return IndexSet(self._members + tuple(other))

    def difference(self, other):
        drop = set(other)
        return IndexSet(c for c in self._members if c not in drop)

    def issubset(self, other):
        return set(self._members) <= set(other)

    def __iter__(self):
        return iter(self._members)

    def __len__(self):
        return len(self._members)

    def __contains__(self, cell):
        return tuple(cell) in set(self._members)

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self._members == other._members

    def __hash__(self):
        return hash(self._members)

    def __repr__(self):
        return f"IndexSet({list(self._members)})"


@dataclass(frozen=True)
class IndexPartition:
    """Split of the grid by the sign of ``alpha1 (+) alpha2 - c``."""

    plus: IndexSet
    zero: IndexSet
    minus: IndexSet
    activation_tol: float = 0.0


@dataclass(frozen=True)
class RegParams:
    gamma: float
    epsilon: float = field(default=0.0)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")

    def require_epsilon(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive for the doubly regularized dual")
        return self

    @property
    def shift(self):
        return self.gamma * self.epsilon


def outer_sum(v1, v2):
    return np.add.outer(np.asarray(v1, dtype=float), np.asarray(v2, dtype=float))


def adjoint_outer(M):
    """Adjoint of :func:`outer_sum`: the row and column sums of ``M``."""
    M = np.asarray(M, dtype=float)
    return M.sum(axis=1), M.sum(axis=0)


def pos_part(M):
    return np.maximum(np.asarray(M, dtype=float), 0.0)


def characteristic_matrix(A, n1, n2):
    A.check_within(n1, n2)
    chi = np.zeros((n1, n2))
    if len(A):
        rows, cols = zip(*A)
        chi[list(rows), list(cols)] = 1.0
    return chi


def mask(A, M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DomainError(f"mask expects a matrix, got shape {M.shape}")
    try:
        chi = characteristic_matrix(A, *M.shape)
    except DomainError as exc:
        raise DomainError(f"index set does not fit a matrix of shape {M.shape}") from exc
    return chi * M


def system_matrix(A, n1, n2, shift=0.0):
    """Row/column incidence block matrix of ``A``, optionally plus ``shift * I``."""
    return kernels.system_matrix_from_mask(characteristic_matrix(A, n1, n2), shift)


def default_activation_tol(values):
    return ACTIVATION_RTOL * (1.0 + float(np.max(np.abs(values), initial=0.0)))


def partition_indices(alpha, cost, activation_tol=None):
    values = alpha.outer() - np.asarray(cost, dtype=float)
    if values.shape != np.shape(cost):
        raise DomainError("dual potentials do not match the cost shape")
    tol = default_activation_tol(values) if activation_tol is None else float(activation_tol)
    if tol < 0:
        raise DomainError("activation_tol must be nonnegative")
    return IndexPartition(
        plus=IndexSet.from_mask(values > tol),
        zero=IndexSet.from_mask(np.abs(values) <= tol),
        minus=IndexSet.from_mask(values < -tol),
        activation_tol=tol,
    )


def max_prime(a, b):
    """Directional derivative of ``max(0, .)`` at ``a`` in direction ``b`` (entrywise)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.where(a > 0, b, np.where(a == 0, np.maximum(b, 0.0), 0.0))
    return float(out) if out.ndim == 0 else out

"""First-order analysis of the regularized marginal-to-plan map.

At a solved point with active cells ``Omega_+`` the plan derivative is

    h  ->  M(Omega_+) (+) (N(Omega_+) + gamma eps I)^{-1} h,

and at kinks (``Omega_0`` nonempty) every Bouligand element has this form with
``Omega_+`` replaced by ``Omega_+ | A`` for a subset ``A`` of ``Omega_0`` that
admits an outer structure.

Numerical note: ``N(A)`` is singular with one kernel vector per connected
component of the bipartite graph of ``A`` (rows +1, columns -1). Those
directions are scaled by ``1 / (gamma eps)`` in the inverse but annihilated by
``M(A) (+)``, so :class:`PlanJacobian` projects them out explicitly instead of
relying on cancellation.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._ssn import exact_step
from .core import IndexSet, RegParams, adjoint_outer, outer_sum, system_matrix
from .dualeps import EpsSolveResult, solve_dual_eps
from .errors import CapacityError, ConvergenceError, DomainError, NondifferentiableError

log = logging.getLogger(__name__)


def _kernel_basis(active, n1, n2):
    """Orthonormal basis of ker N(active) as rows of a matrix."""
    rows, cols = np.nonzero(active)
    graph = coo_matrix((np.ones(rows.size), (rows, n1 + cols)), shape=(n1 + n2, n1 + n2))
    ncomp, labels = connected_components(graph, directed=False)
    sign = np.concatenate([np.ones(n1), -np.ones(n2)])
    basis = np.zeros((ncomp, n1 + n2))
    basis[labels, np.arange(n1 + n2)] = sign
    basis /= np.linalg.norm(basis, axis=1, keepdims=True)
    return basis


def _factor(K):
    try:
        return ("chol", scipy.linalg.cho_factor(K, check_finite=False))
    except np.linalg.LinAlgError:
        return ("lu", scipy.linalg.lu_factor(K, check_finite=False))


def _solve(factor, rhs):
    kind, f = factor
    if kind == "chol":
        return scipy.linalg.cho_solve(f, rhs, check_finite=False)
    return scipy.linalg.lu_solve(f, rhs, check_finite=False)


@dataclass(frozen=True, eq=False)
class PlanJacobian:
    """Linear map ``(h1, h2) -> M(A) (+) (N(A) + gamma eps I)^{-1} (h1, h2)``."""

    active_set: IndexSet
    kkt_matrix: np.ndarray
    params: RegParams
    n1: int
    n2: int
    _factor: tuple = field(repr=False)
    _active: np.ndarray = field(repr=False)
    _kernel: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, active_set, n1, n2, params):
        params.require_epsilon()
        K = system_matrix(active_set, n1, n2, params.shift)
        active = active_set.to_mask(n1, n2)
        return cls(active_set, K, params, n1, n2, _factor(K), active, _kernel_basis(active, n1, n2))

    def _range_project(self, x):
        return x - self._kernel.T @ (self._kernel @ x)

    def solve(self, rhs):
        """``(N(A) + gamma eps I)^{-1} rhs`` restricted to the range of ``N(A)``."""
        return self._range_project(_solve(self._factor, self._range_project(np.asarray(rhs, float))))

    def apply(self, h1, h2):
        x = self.solve(np.concatenate([h1, h2]))
        return np.where(self._active, outer_sum(x[: self.n1], x[self.n1:]), 0.0)

    def adjoint(self, W):
        W = np.asarray(W, dtype=float)
        if W.shape != (self.n1, self.n2):
            raise DomainError(f"expected a {self.n1}x{self.n2} matrix, got {W.shape}")
        r1, r2 = adjoint_outer(np.where(self._active, W, 0.0))
        x = self.solve(np.concatenate([r1, r2]))
        return x[: self.n1], x[self.n1:]

    def dense(self):
        """Matrix of shape ``(n1 * n2, n1 + n2)`` acting on stacked marginals."""
        eye = np.eye(self.n1 + self.n2)
        return np.column_stack([self.apply(e[: self.n1], e[self.n1:]).ravel() for e in eye])


@dataclass(frozen=True)
class OuterStructureWitness:
    subset: IndexSet
    v1: np.ndarray
    v2: np.ndarray


def is_differentiable(result: EpsSolveResult) -> bool:
    return len(result.partition.zero) == 0


def jacobian_S(result: EpsSolveResult, params=None) -> PlanJacobian:
    """Derivative of the plan map at a differentiable point."""
    params = result.params if params is None else params
    if not is_differentiable(result):
        raise NondifferentiableError(
            f"{len(result.partition.zero)} cells have a zero dual slack; use bouligand_subdifferential"
        )
    return PlanJacobian.build(result.partition.plus, result.data.n1, result.data.n2, params)


def _directional_solve(result, h, params, tol, max_iter):
    """Solve the directional system; returns ``(eta, eta_range, active)``.

    ``eta_range`` drops the kernel components of ``N(active)``, which carry
    the ``1 / eps`` growth but do not reach the plan.
    """
    n1, n2 = result.data.n1, result.data.n2
    h = np.concatenate([np.asarray(h[0], float), np.asarray(h[1], float)])
    gamma, s = params.gamma, params.shift
    plus = result.partition.plus.to_mask(n1, n2)
    zero = result.partition.zero.to_mask(n1, n2)
    rhs = gamma * h
    scale = max(1.0, float(np.abs(rhs).max(initial=0.0)))

    def grad(eta):
        e = outer_sum(eta[:n1], eta[n1:])
        M = np.where(plus, e, 0.0) + np.where(zero, np.maximum(e, 0.0), 0.0)
        r, c = adjoint_outer(M)
        return np.concatenate([r, c]) + s * eta - rhs, e

    def piece(active):
        J = PlanJacobian.build(IndexSet.from_mask(active), n1, n2, params)
        x_range = gamma * J.solve(h)
        x_kernel = J._kernel.T @ (J._kernel @ rhs) / s
        return x_range + x_kernel, x_range

    eta = np.zeros(n1 + n2)
    eta_range = eta
    g, e = grad(eta)
    previous = None
    for it in range(max_iter + 1):
        active = plus | (zero & (e >= 0))
        # a full step that keeps the active pattern solves the current piece exactly
        if previous is not None and np.array_equal(active, previous):
            return eta, eta_range, active
        if np.abs(g).max() <= tol * (scale + float(np.abs(e).max(initial=0.0))):
            return eta, piece(active)[1], active
        if it == max_iter:
            break
        eta_new, range_new = piece(active)
        d = eta_new - eta
        w = outer_sum(d[:n1], d[n1:])
        # quadratic part from Omega_+ and the shift, kinked part from Omega_0
        base = float(np.sum(w[plus] * e[plus])) + s * float(eta @ d) - float(rhs @ d)
        curv = float(np.sum(w[plus] ** 2)) + s * float(d @ d)
        t = exact_step(e[zero], w[zero], base, curv)
        t = 1.0 if not np.isfinite(t) else t
        if t >= 1.0 - 1e-8:
            eta, eta_range, previous = eta_new, range_new, active
        else:
            eta, previous = eta + t * d, None
        g, e = grad(eta)
    raise ConvergenceError("directional derivative system did not converge",
                           float(np.abs(g).max()), max_iter)


def directional_derivative_F(mu, h, result: EpsSolveResult, params=None, tol=1e-13, max_iter=100):
    """Directional derivative ``eta`` of the dual solution map at ``mu`` along ``h``.

    Solves ``max'(a; eta1 (+) eta2) 1 + gamma eps eta1 = gamma h1`` (and the
    column equation), ``a = alpha1 (+) alpha2 - c``. It is the optimality
    system of a strongly convex piecewise quadratic, minimized by a
    semismooth Newton iteration; cells of ``Omega_0`` are active while
    ``eta1 (+) eta2 >= 0`` there.

    ``mu`` is accepted for interface symmetry; the result fixes the base point.
    """
    params = result.params if params is None else params
    eta = _directional_solve(result, h, params, tol, max_iter)[0]
    n1 = result.data.n1
    return eta[:n1], eta[n1:]


def directional_derivative_S(result: EpsSolveResult, h, params=None, tol=1e-13, max_iter=100):
    """Directional derivative ``(1/gamma) max'(a; eta1 (+) eta2)`` of the plan map."""
    params = result.params if params is None else params
    _, eta_range, active = _directional_solve(result, h, params, tol, max_iter)
    n1 = result.data.n1
    return np.where(active, outer_sum(eta_range[:n1], eta_range[n1:]), 0.0) / params.gamma


def has_outer_structure(A: IndexSet, B: IndexSet, n1, n2):
    """Witness ``(v1, v2)`` with ``v1 (+) v2 >= 1`` on ``A`` and ``<= -1`` on ``B \\ A``.

    Returns ``None`` when the margin-one system is infeasible. Strict
    inequalities are scale invariant, so this decides the strict version.
    """
    A.check_within(n1, n2)
    B.check_within(n1, n2)
    if not A.issubset(B):
        raise DomainError("A must be a subset of B")
    rest = B.difference(A)
    if len(B) == 0:
        return OuterStructureWitness(A, np.zeros(n1), np.zeros(n2))
    rows = []
    for (i, j), sgn in itertools.chain(((c, -1.0) for c in A), ((c, 1.0) for c in rest)):
        row = np.zeros(n1 + n2)
        row[i] = sgn
        row[n1 + j] = sgn
        rows.append(row)
    res = linprog(np.zeros(n1 + n2), A_ub=np.array(rows), b_ub=-np.ones(len(rows)),
                  bounds=[(None, None)] * (n1 + n2), method="highs")
    if res.status != 0:
        return None
    v = res.x
    vals = outer_sum(v[:n1], v[n1:])
    margin = min([vals[c] for c in A] + [-vals[c] for c in rest])
    if not margin > 0.5:
        return None
    v = v / margin
    return OuterStructureWitness(A, v[:n1].copy(), v[n1:].copy())


def bouligand_subdifferential(result: EpsSolveResult, params=None, max_zero_card=12):
    """All Bouligand elements of the plan map, one per admissible subset of ``Omega_0``."""
    params = result.params if params is None else params
    zero = result.partition.zero
    n1, n2 = result.data.n1, result.data.n2
    if len(zero) > max_zero_card:
        raise CapacityError(f"|Omega_0| = {len(zero)} exceeds max_zero_card = {max_zero_card}")
    cells = list(zero)
    out = []
    for k in range(len(cells) + 1):
        for subset in itertools.combinations(cells, k):
            A = IndexSet(subset)
            if has_outer_structure(A, zero, n1, n2) is not None:
                out.append(PlanJacobian.build(result.partition.plus.union(A), n1, n2, params))
    return sorted(out, key=lambda J: J.active_set.members)


def adjoint_apply(J: PlanJacobian, W):
    return J.adjoint(W)


def admissible_jacobian(result: EpsSolveResult, A: IndexSet, params=None) -> PlanJacobian:
    """Bouligand element for ``Omega_+ | A``; ``A`` must admit an outer structure in ``Omega_0``."""
    params = result.params if params is None else params
    n1, n2 = result.data.n1, result.data.n2
    zero = result.partition.zero
    A.check_within(n1, n2)
    if not A.issubset(zero):
        raise DomainError("A must be a subset of the zero-slack cells")
    if has_outer_structure(A, zero, n1, n2) is None:
        raise DomainError(f"{A} has no outer structure with respect to the zero-slack cells")
    return PlanJacobian.build(result.partition.plus.union(A), n1, n2, params)


def composite_subgradient(result: EpsSolveResult, grad_plan, grad_mu1, A=None, params=None):
    """Subgradient ``p + (grad_mu1, 0)`` of ``mu -> J(S(mu), mu1)`` with ``p = J_A^* grad_plan``."""
    J = admissible_jacobian(result, IndexSet() if A is None else A, params)
    p1, p2 = J.adjoint(grad_plan)
    return p1 + np.asarray(grad_mu1, dtype=float), p2


def elements_at(result: EpsSolveResult, params=None, max_zero_card=12):
    """Bouligand elements at a solved point; the ``A = {}`` element if enumeration is too large."""
    if is_differentiable(result):
        return [jacobian_S(result, params)]
    try:
        return bouligand_subdifferential(result, params, max_zero_card)
    except CapacityError:
        return [admissible_jacobian(result, IndexSet(), params)]


def sample_ball(rng, center, delta, num_samples, axes=None):
    """Uniform samples from the closed ball of radius ``delta`` around ``center``.

    With ``axes`` given, only those coordinates are perturbed.
    """
    center = np.asarray(center, dtype=float)
    idx = np.arange(center.size) if axes is None else np.asarray(axes)
    d = idx.size
    out = np.repeat(center[None, :], num_samples, axis=0)
    if num_samples == 0 or d == 0:
        return out
    g = rng.standard_normal((num_samples, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = delta * rng.random(num_samples) ** (1.0 / d)
    out[:, idx] += g * r[:, None]
    return out


def collective_subdifferential_sample(data, delta, num_samples, params, seed=0,
                                      result=None, first_only=False, max_zero_card=12):
    """Bouligand elements gathered at ``data`` and at sampled nearby marginals.

    Parameters
    ----------
    data : ProblemData
        Base marginals ``(mu1, mu2)`` and cost.
    delta : float
        Ball radius in the stacked marginal space.
    num_samples : int
        Number of sampled points; ``0`` keeps only the elements at ``data``.
    first_only : bool
        Perturb ``mu1`` only (the reduced problem keeps ``mu2`` fixed).

    Returns
    -------
    list of PlanJacobian
        Deduplicated by active set, in canonical order.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    if result is None:
        result = solve_dual_eps(data, params)
    found = {J.active_set: J for J in elements_at(result, params, max_zero_card)}
    rng = np.random.default_rng(seed)
    center = np.concatenate([data.mu1, data.mu2])
    axes = np.arange(data.n1) if first_only else None
    for point in sample_ball(rng, center, delta, num_samples, axes):
        r = solve_dual_eps(data.with_marginals(point[: data.n1], point[data.n1:]), params,
                           alpha0=result.duals, max_iter=1000)
        for J in elements_at(r, params, max_zero_card):
            found.setdefault(J.active_set, J)
    return [found[k] for k in sorted(found, key=lambda s: s.members)]

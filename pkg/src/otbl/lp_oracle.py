"""Exact solver for the unregularized transportation (Hitchcock) LP.

The transportation simplex starts from the northwest-corner basis and prices
with MODI potentials. Entering and leaving cells follow Bland's rule in
row-major order, so degenerate instances (zero marginal entries) terminate
without perturbation.
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import DualPotentials, ProblemData
from .errors import CapacityError, ConvergenceError, DomainError, InfeasibleError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LPSolution:
    plan: np.ndarray
    duals: DualPotentials
    value: float
    iterations: int


def _validate(data):
    if not data.is_nonnegative():
        raise DomainError("marginals must be nonnegative for a coupling")
    if not data.is_compatible():
        raise InfeasibleError(
            f"marginal masses differ: {data.mu1.sum():.17g} vs {data.mu2.sum():.17g}"
        )


def _northwest_corner(mu1, mu2):
    n1, n2 = mu1.size, mu2.size
    supply, demand = mu1.astype(float).copy(), mu2.astype(float).copy()
    flow = np.zeros((n1, n2))
    basis = []
    i = j = 0
    while True:
        q = min(supply[i], demand[j])
        flow[i, j] = q
        basis.append((i, j))
        if i == n1 - 1 and j == n2 - 1:
            break
        move_down = supply[i] <= demand[j]
        supply[i] -= q
        demand[j] -= q
        if i == n1 - 1:
            j += 1
        elif j == n2 - 1:
            i += 1
        elif move_down:
            i += 1
        else:
            j += 1
    return flow, basis


def _potentials(cost, basis, n1, n2):
    """Solve ``u_i + v_j = c_ij`` on the basis tree, anchored at ``u_0 = 0``."""
    row_adj = [[] for _ in range(n1)]
    col_adj = [[] for _ in range(n2)]
    for i, j in basis:
        row_adj[i].append(j)
        col_adj[j].append(i)
    u = np.full(n1, np.nan)
    v = np.full(n2, np.nan)
    u[0] = 0.0
    queue = deque([(0, 0)])  # (kind, index); kind 0 = row, 1 = column
    while queue:
        kind, k = queue.popleft()
        if kind == 0:
            for j in row_adj[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    queue.append((1, j))
        else:
            for i in col_adj[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    queue.append((0, i))
    if np.isnan(u).any() or np.isnan(v).any():
        raise RuntimeError("basis is not a spanning tree")
    return u, v


def _tree_path(basis, n1, n2, row, col):
    """Basic cells on the tree path from row node ``row`` to column node ``col``."""
    row_adj = [[] for _ in range(n1)]
    col_adj = [[] for _ in range(n2)]
    for i, j in basis:
        row_adj[i].append(j)
        col_adj[j].append(i)
    start, goal = (0, row), (1, col)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        kind, k = node
        neighbours = [(1, j) for j in row_adj[k]] if kind == 0 else [(0, i) for i in col_adj[k]]
        for nb in neighbours:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        cell = (prev[1], node[1]) if prev[0] == 0 else (node[1], prev[1])
        path.append(cell)
        node = prev
    path.reverse()
    return path


def solve_hitchcock(data: ProblemData, max_iter=None) -> LPSolution:
    """Optimal plan, MODI duals and value of the transportation LP."""
    _validate(data)
    n1, n2 = data.n1, data.n2
    cost = np.asarray(data.cost, dtype=float)
    flow, basis = _northwest_corner(data.mu1, data.mu2)
    in_basis = np.zeros((n1, n2), dtype=np.uint8)
    for cell in basis:
        in_basis[cell] = 1

    price_tol = 1e-12 * (1.0 + np.abs(cost).max())
    flow_tol = 1e-14 * max(1.0, data.mass)
    if max_iter is None:
        max_iter = 1000 + 50 * (n1 * n2) * (n1 + n2)

    iterations = 0
    while True:
        u, v = _potentials(cost, basis, n1, n2)
        i, j = kernels.bland_entering(cost, u, v, in_basis, price_tol)
        if i < 0:
            break
        if iterations >= max_iter:
            raise ConvergenceError("transportation simplex did not terminate", float("nan"), iterations)
        iterations += 1
        path = _tree_path(basis, n1, n2, i, j)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] <= theta + flow_tol)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[i, j] += theta
        flow[leaving] = 0.0
        basis.remove(leaving)
        in_basis[leaving] = 0
        basis.append((i, j))
        in_basis[i, j] = 1

    np.maximum(flow, 0.0, out=flow)
    value = float(np.sum(cost * flow))
    log.debug("transportation simplex: %d pivots, value %.12g", iterations, value)
    return LPSolution(flow, DualPotentials(u, v), value, iterations)


def check_optimality(sol: LPSolution, data: ProblemData, tol=1e-9) -> bool:
    """Primal feasibility, dual feasibility and complementary slackness within ``tol``."""
    plan = np.asarray(sol.plan, dtype=float)
    if plan.shape != data.cost.shape:
        return False
    slack = data.cost - sol.duals.outer()
    scale = 1.0 + abs(float(np.sum(data.cost * plan)))
    return bool(
        plan.min() >= -tol
        and np.abs(plan.sum(axis=1) - data.mu1).max() <= tol
        and np.abs(plan.sum(axis=0) - data.mu2).max() <= tol
        and slack.min() >= -tol
        and abs(float(np.sum(slack * plan))) <= tol * scale
    )


def _is_spanning_tree(cells, n1, n2):
    parent = list(range(n1 + n2))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in cells:
        a, b = find(i), find(n1 + j)
        if a == b:
            return False
        parent[a] = b
    return True


def _tree_flows(cells, rhs, n1):
    """Flows of the basis ``cells`` by eliminating leaves of the spanning tree."""
    remaining = rhs.astype(float).copy()
    incident = {}
    for k, (i, j) in enumerate(cells):
        incident.setdefault(i, set()).add(k)
        incident.setdefault(n1 + j, set()).add(k)
    x = np.zeros(len(cells))
    leaves = [node for node, ks in incident.items() if len(ks) == 1]
    while leaves:
        node = leaves.pop()
        if not incident[node]:
            continue
        (k,) = incident[node]
        i, j = cells[k]
        other = n1 + j if node == i else i
        x[k] = remaining[node]
        remaining[other] -= x[k]
        incident[node].discard(k)
        incident[other].discard(k)
        if len(incident[other]) == 1:
            leaves.append(other)
    return x


def basic_feasible_solutions(data: ProblemData, tol=1e-12):
    """All vertices of the transportation polytope by basis enumeration (small n only)."""
    _validate(data)
    n1, n2 = data.n1, data.n2
    grid = [(i, j) for i in range(n1) for j in range(n2)]
    rhs = np.concatenate([data.mu1, data.mu2])
    seen = {}
    for cells in itertools.combinations(grid, n1 + n2 - 1):
        if not _is_spanning_tree(cells, n1, n2):
            continue
        x = _tree_flows(cells, rhs, n1)
        x[np.abs(x) <= tol * max(1.0, data.mass)] = 0.0
        if x.min() < 0:
            continue
        plan = np.zeros((n1, n2))
        for k, cell in enumerate(cells):
            plan[cell] = x[k]
        seen.setdefault(np.round(plan, 12).tobytes(), plan)
    return list(seen.values())


def enumerate_optimal_faces(data: ProblemData, max_size=16, tol=1e-9):
    """All optimal basic plans, found by vertex enumeration.

    Raises :class:`CapacityError` when ``n1 * n2`` exceeds ``max_size``.
    """
    if data.n1 * data.n2 > max_size:
        raise CapacityError(f"{data.n1}x{data.n2} grid exceeds enumeration bound {max_size}")
    vertices = basic_feasible_solutions(data)
    best = min(float(np.sum(data.cost * p)) for p in vertices)
    cutoff = best + tol * (1.0 + abs(best))
    return [p for p in vertices if float(np.sum(data.cost * p)) <= cutoff]

"""Transportation identification: recover a source marginal and its plan
from partial observations.

The reduced objective is

    f(mu1) = 1/2 |S(mu1, mu2_d) - pi_d|_D^2 + lambda/2 |mu1 - mu1_d|_{D1}^2

over the simplex, where ``S`` is the doubly regularized marginal-to-plan map.
Subgradients keep only the ``mu1`` part of the composite subgradient; this
projection is a heuristic at kinks.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import sens
from .core import DualPotentials, IndexSet, ProblemData, RegParams, pos_part
from .dualeps import solve_dual_eps
from .errors import DomainError, OTBLError
from .lp_oracle import solve_hitchcock
from .trsolver import ObjectiveOracle, TRConfig, run_tr

log = logging.getLogger(__name__)

ORACLE_MAX_NEWTON = 1000


@dataclass(frozen=True)
class ObservationMask:
    """Observed plan cells ``D`` and observed marginal entries ``D1`` (0-based)."""

    plan_mask: IndexSet
    marginal_mask: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginal_mask", tuple(sorted({int(i) for i in self.marginal_mask})))

    @classmethod
    def full(cls, n1, n2):
        return cls(IndexSet.full(n1, n2), tuple(range(n1)))

    def check_within(self, n1, n2):
        self.plan_mask.check_within(n1, n2)
        if any(not 0 <= i < n1 for i in self.marginal_mask):
            raise DomainError("marginal mask leaves the source grid")

    def plan_matrix(self, n1, n2):
        return self.plan_mask.to_mask(n1, n2)

    def marginal_vector(self, n1):
        out = np.zeros(n1, dtype=bool)
        out[list(self.marginal_mask)] = True
        return out


@dataclass(frozen=True)
class TIProblem:
    """Identification problem.

    ``data`` carries the fixed target marginal and cost (its ``mu1`` is the
    marginal observation). ``plan_obs`` and ``marginal_obs`` are full-size
    arrays whose entries outside the masks are ignored.
    """

    data: ProblemData
    mask: ObservationMask
    plan_obs: np.ndarray
    marginal_obs: np.ndarray
    lam: float = 1.0
    _plan_mask: np.ndarray = field(init=False, repr=False)
    _marg_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n1, n2 = self.data.n1, self.data.n2
        self.mask.check_within(n1, n2)
        plan_obs = np.array(self.plan_obs, dtype=float)
        marginal_obs = np.array(self.marginal_obs, dtype=float)
        if plan_obs.shape != (n1, n2) or marginal_obs.shape != (n1,):
            raise DomainError("observations do not match the problem size")
        pm, mm = self.mask.plan_matrix(n1, n2), self.mask.marginal_vector(n1)
        if not (np.isfinite(plan_obs[pm]).all() and np.isfinite(marginal_obs[mm]).all()):
            raise DomainError("observed values must be finite")
        if not self.lam > 0:
            raise DomainError("lambda must be positive")
        object.__setattr__(self, "plan_obs", np.where(pm, plan_obs, 0.0))
        object.__setattr__(self, "marginal_obs", np.where(mm, marginal_obs, 0.0))
        object.__setattr__(self, "_plan_mask", pm)
        object.__setattr__(self, "_marg_mask", mm)

    @property
    def mu2(self):
        return self.data.mu2

    @property
    def cost(self):
        return self.data.cost

    @property
    def mass(self):
        return float(self.data.mu2.sum())


@dataclass(frozen=True)
class ContinuationSchedule:
    levels: tuple

    def __post_init__(self):
        levels = tuple((float(g), float(e)) for g, e in self.levels)
        for g, e in levels:
            if not (g > 0 and e > 0):
                raise DomainError("schedule levels must be positive")
        for (g0, e0), (g1, e1) in zip(levels, levels[1:]):
            if not (g1 < g0 and e1 < e0):
                raise DomainError("schedule must decrease strictly in gamma and epsilon")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def tied(cls, gammas):
        return cls(tuple((g, g) for g in gammas))

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


def ti_objective(plan, mu1, prob: TIProblem):
    """Tracking objective and its gradients ``(J, grad_plan, grad_mu1)``."""
    r_plan = np.where(prob._plan_mask, np.asarray(plan, dtype=float) - prob.plan_obs, 0.0)
    r_mu = np.where(prob._marg_mask, np.asarray(mu1, dtype=float) - prob.marginal_obs, 0.0)
    J = 0.5 * float(np.vdot(r_plan, r_plan)) + 0.5 * prob.lam * float(r_mu @ r_mu)
    return J, r_plan, prob.lam * r_mu


def _solve_at(mu1, prob, params, alpha0=None):
    return solve_dual_eps(prob.data.with_marginals(mu1, prob.mu2), params, alpha0=alpha0,
                          max_iter=ORACLE_MAX_NEWTON)


def reduced_objective(mu1, prob: TIProblem, params: RegParams, alpha0=None):
    result = _solve_at(mu1, prob, params, alpha0)
    return ti_objective(result.plan, mu1, prob)[0]


def reduced_subgradient(mu1, prob: TIProblem, params: RegParams, A=None, result=None):
    """First component of the composite subgradient (heuristic at kinks).

    ``A`` selects the Bouligand element at a kink; the default is the empty
    set, which is admissible everywhere.
    """
    if result is None:
        result = _solve_at(mu1, prob, params)
    _, grad_plan, grad_mu1 = ti_objective(result.plan, mu1, prob)
    g1, _ = sens.composite_subgradient(result, grad_plan, grad_mu1, A, params)
    return g1


class ReducedObjectiveOracle(ObjectiveOracle):
    """Reduced objective with cached solves and warm-started potentials."""

    def __init__(self, prob: TIProblem, params: RegParams, ball_samples=16, seed=0, alpha0=None,
                 cache_size=8):
        self.prob, self.params = prob, params
        self.ball_samples, self.seed = int(ball_samples), int(seed)
        self.last_duals = alpha0
        self._cache = {}
        self._cache_size = cache_size
        self._ball_calls = 0
        self.solves = 0

    def result(self, mu):
        mu = np.asarray(mu, dtype=float)
        key = mu.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        r = _solve_at(mu, self.prob, self.params, self.last_duals)
        self.solves += 1
        self.last_duals = r.duals
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = r
        return r

    def value(self, mu):
        return ti_objective(self.result(mu).plan, mu, self.prob)[0]

    def subgradient(self, mu):
        return reduced_subgradient(mu, self.prob, self.params, result=self.result(mu))

    def bouligand_ball(self, mu, delta):
        """Reduced subgradients from Bouligand elements sampled in the ``delta``-ball.

        Each element is applied to the plan gradient at ``mu``, as in the
        max-type model function.
        """
        r = self.result(mu)
        _, grad_plan, grad_mu1 = ti_objective(r.plan, mu, self.prob)
        seed = [self.seed, self._ball_calls]
        self._ball_calls += 1
        elements = sens.collective_subdifferential_sample(
            r.data, delta, self.ball_samples, self.params, seed=seed, result=r, first_only=True)
        return [J.adjoint(grad_plan)[0] + grad_mu1 for J in elements]


def build_recovery_sequence(pi_star, c_d, gamma):
    """Cost ``c_d - gamma pi*`` for which ``pi*`` is the regularized optimum."""
    return np.asarray(c_d, dtype=float) - gamma * np.asarray(pi_star, dtype=float)


def verify_recovery(pi_star, duals_star: DualPotentials, c_k, gamma, tol=1e-12):
    """Check ``|(1/gamma)(alpha1* (+) alpha2* - c_k)_+ - pi*|_inf <= tol``."""
    plan = pos_part(duals_star.outer() - np.asarray(c_k, dtype=float)) / gamma
    return bool(np.abs(plan - np.asarray(pi_star, dtype=float)).max() <= tol)


class RandomInstance(NamedTuple):
    mu1_star: np.ndarray
    mu2_d: np.ndarray
    cost: np.ndarray
    pi_star: np.ndarray
    duals: DualPotentials


def _sparse_marginal(rng, n, density):
    values = rng.random(n)
    support = rng.random(n) < density
    return values * support


def generate_random_instance(n1, n2, density=0.5, cost_exponent=2.0, seed=0):
    """Random sparse marginals of unit mass, the cost ``|i - j|^p`` and an optimal plan.

    Each entry is nonzero with probability ``density`` and uniform on
    ``[0, 1)`` otherwise; both vectors are then normalized. Draws come from
    ``numpy.random.default_rng([seed, attempt])`` (PCG64); ``attempt`` starts
    at 0 and is incremented whenever a marginal comes out all zero.
    """
    if not 0 < density <= 1:
        raise DomainError("density must lie in (0, 1]")
    attempt = 0
    while True:
        rng = np.random.default_rng([int(seed), attempt])
        mu1 = _sparse_marginal(rng, n1, density)
        mu2 = _sparse_marginal(rng, n2, density)
        if mu1.sum() > 0 and mu2.sum() > 0:
            break
        attempt += 1
    mu1 /= mu1.sum()
    mu2 /= mu2.sum()
    cost = np.abs(np.subtract.outer(np.arange(n1), np.arange(n2))).astype(float) ** cost_exponent
    # renormalization can leave a mass mismatch of a few ulps
    mu2 *= mu1.sum() / mu2.sum()
    sol = solve_hitchcock(ProblemData(mu1, mu2, cost))
    return RandomInstance(mu1, mu2, cost, sol.plan, sol.duals)


def band_mask(n1, n2, bandwidth, marginal_range=None):
    """Plan cells with ``|i - j| <= bandwidth`` and the marginal block ``lo..hi``.

    ``marginal_range`` is 1-based and inclusive, e.g. ``(9, 15)``; ``None``
    observes the whole marginal.
    """
    if bandwidth < 0:
        raise DomainError("bandwidth must be nonnegative")
    lo, hi = (1, n1) if marginal_range is None else marginal_range
    if not (1 <= lo <= hi <= n1):
        raise DomainError(f"marginal range {(lo, hi)} is not within 1..{n1}")
    cells = [(i, j) for i in range(n1) for j in range(n2) if abs(i - j) <= bandwidth]
    return ObservationMask(IndexSet(cells), tuple(range(lo - 1, hi)))


def identification_problem(instance: RandomInstance, mask=None, lam=1.0):
    """Exact-data problem whose observations come from the ground truth."""
    n1, n2 = instance.cost.shape
    mask = ObservationMask.full(n1, n2) if mask is None else mask
    data = ProblemData(instance.mu1_star, instance.mu2_d, instance.cost)
    return TIProblem(data, mask, instance.pi_star, instance.mu1_star, lam)


@dataclass
class LevelResult:
    level: int
    gamma: float
    epsilon: float
    state: object
    plan: np.ndarray
    metrics: dict


def continuation_solve(prob: TIProblem, schedule: ContinuationSchedule, tr_config=None, x0=None,
                       ground_truth=None, warm_start=True):
    """Solve the reduced problem along the schedule, warm-starting each level.

    Parameters
    ----------
    warm_start : bool
        Start each level from the previous level's iterate and duals. With
        ``False`` every level restarts from ``x0`` (uniform by default).
    ground_truth : (mu1_star, pi_star), optional
        Enables the error metrics.

    Returns
    -------
    list of LevelResult
        ``metrics`` has ``J``, ``max_err_mu1``, ``max_err_pi``, ``iters``,
        ``converged`` and ``error`` (message of a failed level, else ``None``).
    """
    cfg = tr_config or TRConfig()
    n1 = prob.data.n1
    start = np.full(n1, prob.mass / n1) if x0 is None else np.asarray(x0, dtype=float)
    x, duals = start, None
    out = []
    for level, (gamma, eps) in enumerate(schedule):
        params = RegParams(gamma, eps)
        oracle = ReducedObjectiveOracle(prob, params, cfg.ball_samples, cfg.seed, alpha0=duals)
        metrics = {"J": math.nan, "max_err_mu1": math.nan, "max_err_pi": math.nan,
                   "iters": 0, "converged": False, "error": None}
        state, plan = None, None
        try:
            state = run_tr(oracle, x, cfg)
            r = oracle.result(state.iterate)
            plan = r.plan
            metrics.update(J=state.f, iters=state.iteration, converged=state.converged)
            if ground_truth is not None:
                mu_star, pi_star = ground_truth
                metrics["max_err_mu1"] = float(np.abs(state.iterate - mu_star).max())
                metrics["max_err_pi"] = float(np.abs(plan - pi_star).max())
            if warm_start:
                x, duals = state.iterate, r.duals
        except OTBLError as exc:
            log.warning("level %d (gamma=%g, eps=%g) failed: %s", level, gamma, eps, exc)
            metrics["error"] = str(exc)
        log.info("level %d gamma=%g eps=%g J=%.4e iters=%d converged=%s", level, gamma, eps,
                 metrics["J"], metrics["iters"], metrics["converged"])
        out.append(LevelResult(level, gamma, eps, state, plan, metrics))
    return out

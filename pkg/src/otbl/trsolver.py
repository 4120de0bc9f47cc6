"""Constrained nonsmooth trust-region method on a scaled standard simplex.

The feasible set is ``{x >= 0, sum(x) = mass}``. Each iteration linearizes the
objective with a Clarke subgradient ``g`` and a BFGS matrix ``H``. It either
solves the usual model problem (radius above ``delta_min``) or a safeguarded
problem whose linear part is the maximum over subgradients collected in a
ball around the iterate.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog, minimize

from . import kernels
from .errors import DomainError

log = logging.getLogger(__name__)

CAUCHY_RTOL = 1e-12


@dataclass(frozen=True)
class TRConfig:
    """Trust-region constants. ``R = None`` means ``sqrt(n)`` for an ``n``-vector."""

    R: float = None
    delta_min: float = 1e-6
    eta1: float = 0.1
    eta2: float = 0.9
    beta1: float = 0.5
    beta2: float = 1.5
    nu: float = 1.0
    delta0: float = 1.0
    tol: float = 1e-5
    max_iter: int = 200
    ball_samples: int = 16
    seed: int = 0

    def __post_init__(self):
        bad = []
        if self.R is not None and not self.R > 0:
            bad.append("R")
        if not self.delta_min > 0:
            bad.append("delta_min")
        if not 0 < self.eta1 < self.eta2 < 1:
            bad.append("eta1/eta2")
        if not 0 < self.beta1 < 1:
            bad.append("beta1")
        if not self.beta2 > 1:
            bad.append("beta2")
        if not 0 < self.nu <= 1:
            bad.append("nu")
        if not self.delta0 > self.delta_min:
            bad.append("delta0")
        if not self.tol > 0:
            bad.append("tol")
        if not (int(self.max_iter) == self.max_iter and self.max_iter > 0):
            bad.append("max_iter")
        if not (int(self.ball_samples) == self.ball_samples and self.ball_samples >= 0):
            bad.append("ball_samples")
        if bad:
            raise DomainError(f"invalid trust-region settings: {', '.join(bad)}")

    def resolved(self, n):
        return self if self.R is not None else replace(self, R=math.sqrt(n))


@dataclass(frozen=True)
class TRRecord:
    iteration: int
    f: float
    theta: float
    psi: float
    radius: float
    rho: float
    accepted: bool
    cauchy_ok: bool = True


@dataclass
class TRState:
    iterate: np.ndarray
    radius: float
    hessian_model: np.ndarray
    last_rho: float = float("nan")
    theta: float = float("nan")
    iteration: int = 0
    history: list = field(default_factory=list)
    f: float = float("nan")
    subgradient: np.ndarray = None
    converged: bool = False


class ObjectiveOracle:
    """Interface used by :func:`run_tr`.

    Subclasses supply ``value`` and ``subgradient``. ``bouligand_ball``
    returns subgradients gathered around ``mu``; the default returns only the
    subgradient at ``mu``, which is exact for smooth objectives.
    """

    def value(self, mu):
        raise NotImplementedError

    def subgradient(self, mu):
        raise NotImplementedError

    def bouligand_ball(self, mu, delta):
        return [self.subgradient(mu)]


class FunctionOracle(ObjectiveOracle):
    """Oracle built from plain callables."""

    def __init__(self, value, subgradient, ball=None):
        self._value, self._sub, self._ball = value, subgradient, ball

    def value(self, mu):
        return float(self._value(mu))

    def subgradient(self, mu):
        return np.asarray(self._sub(mu), dtype=float)

    def bouligand_ball(self, mu, delta):
        if self._ball is None:
            return [self.subgradient(mu)]
        return [np.asarray(g, dtype=float) for g in self._ball(mu, delta)]


def project_simplex(v, mass=1.0):
    """Euclidean projection onto ``{x >= 0, sum(x) = mass}``."""
    if not mass > 0:
        raise DomainError("mass must be positive")
    return kernels.project_simplex(np.asarray(v, dtype=float), float(mass))


def _vertices_inside(mu, R):
    m = mu.sum()
    # squared distance from mu to m e_j
    far = float(np.max(mu @ mu - 2.0 * m * mu + m * m))
    return far <= R * R * (1.0 + 1e-12)


def stationarity_theta(mu, g, R):
    """``theta = -min <g, d>`` over ``mu + d`` in the simplex with ``|d| <= R``.

    Returns ``(theta, d)``. When every vertex lies within ``R`` of ``mu`` the
    minimum is attained at a vertex ``mass e_j`` (lowest index on ties);
    otherwise the ball-constrained problem is solved numerically.
    """
    mu = np.asarray(mu, dtype=float)
    g = np.asarray(g, dtype=float)
    m = float(mu.sum())
    if _vertices_inside(mu, R):
        j = int(np.argmin(g))
        d = -mu.copy()
        d[j] += m
        return max(float(g @ mu) - m * float(g[j]), 0.0), d
    return _theta_ball(mu, g, R)


def _theta_ball(mu, g, R):
    n = mu.size
    cons = [{"type": "eq", "fun": lambda d: d.sum()},
            {"type": "ineq", "fun": lambda d: R * R - d @ d}]
    res = minimize(lambda d: g @ d, np.zeros(n), jac=lambda d: g, method="SLSQP",
                   bounds=[(-x, None) for x in mu], constraints=cons,
                   options={"ftol": 1e-15, "maxiter": 500})
    d = res.x
    return max(-float(g @ d), 0.0), d


def cauchy_bound(measure, delta, R, H, nu):
    """Right-hand side of the (modified) Cauchy decrease condition; ``|H|`` is Frobenius."""
    normH = float(np.linalg.norm(H))
    third = math.inf if normH == 0 else measure / (R * normH)
    return nu / (2.0 * R) * measure * min(R, delta, third)


def _model(g, H, d):
    return float(g @ d) + 0.5 * float(d @ H @ d)


def _scaled_along(direction, slope_value, H, delta):
    """Minimize ``t * slope_value + t^2/2 d'Hd`` over ``0 <= t <= min(1, delta/|d|)``."""
    norm = float(np.linalg.norm(direction))
    if norm == 0:
        return direction * 0.0
    tmax = min(1.0, delta / norm)
    curv = float(direction @ H @ direction)
    t = tmax if curv <= 0 else min(tmax, -slope_value / curv)
    return max(t, 0.0) * direction


def _tangent_dogleg(g, H, delta):
    n = g.size
    gp = g - g.mean()
    ngp = float(np.linalg.norm(gp))
    if ngp == 0:
        return np.zeros(n)
    kappa = float(gp @ H @ gp)
    d_sd = -gp * (ngp ** 2 / kappa) if kappa > 0 else -gp * (delta / ngp)
    K = np.block([[H, np.ones((n, 1))], [np.ones((1, n)), np.zeros((1, 1))]])
    try:
        d_n = np.linalg.solve(K, np.concatenate([-g, [0.0]]))[:n]
        if not np.all(np.isfinite(d_n)) or float(d_n @ H @ d_n) <= 0:
            d_n = None
    except np.linalg.LinAlgError:
        d_n = None
    if d_n is not None and np.linalg.norm(d_n) <= delta:
        return d_n
    if d_n is None or np.linalg.norm(d_sd) >= delta:
        return -gp * (delta / ngp)
    # boundary crossing on the segment from d_sd to d_n
    e = d_n - d_sd
    a, b, c = e @ e, 2 * d_sd @ e, d_sd @ d_sd - delta ** 2
    s = (-b + math.sqrt(max(b * b - 4 * a * c, 0.0))) / (2 * a)
    return d_sd + s * e


def _face_dogleg(g, H, mu, delta):
    """Tangent dogleg restricted to the face of coordinates free to move.

    A zero coordinate stays fixed unless the gradient invites it to grow.
    """
    pos = mu > 0
    if not pos.any():
        return None
    free = pos | (g < g[pos].mean())
    if free.all() or free.sum() < 2:
        return None
    d = np.zeros_like(mu)
    d[free] = _tangent_dogleg(g[free], H[np.ix_(free, free)], delta)
    return d


def _simplex_qp_step(g, H, mu):
    """Minimize ``<g, d> + d'Hd/2`` over ``mu + d`` in the simplex (ball ignored).

    Primal active-set method started from ``d = 0``; the working set holds the
    coordinates fixed at zero. Returns ``None`` if a reduced KKT system is
    singular or the iteration budget runs out.
    """
    n = mu.size
    d = np.zeros(n)
    fixed = mu <= 0
    for _ in range(4 * n + 4):
        free = ~fixed
        r = g + H @ d
        k = int(free.sum())
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H[np.ix_(free, free)]
        K[:k, k] = K[k, :k] = 1.0
        try:
            sol = np.linalg.solve(K, np.concatenate([-r[free], [0.0]]))
        except np.linalg.LinAlgError:
            return None
        p = np.zeros(n)
        p[free] = sol[:k]
        if not np.all(np.isfinite(p)):
            return None
        if np.linalg.norm(p) <= 1e-14 * (1.0 + np.linalg.norm(d)):
            # bound multipliers (g + Hd)_i - lambda on the fixed coordinates
            z = np.where(fixed, r + sol[k], np.inf)
            j = int(np.argmin(z))
            if z[j] >= -1e-14 * (1.0 + np.abs(r).max()):
                return d
            fixed[j] = False
            continue
        x = mu + d
        shrink = free & (p < 0)
        ratios = np.where(shrink, x / np.where(shrink, -p, 1.0), np.inf)
        j = int(np.argmin(ratios))
        step = min(1.0, float(ratios[j]))
        d = d + step * p
        if step < 1.0:
            d[j] = -mu[j]
            fixed[j] = True
    return None


def _into_radius(d, delta):
    norm = float(np.linalg.norm(d))
    return d if norm <= delta else d * (delta / norm)


def _best_combination(g, H, d0, d1):
    """Minimize the model over the segment from ``d0`` to ``d1``."""
    e = d1 - d0
    lin = float(g @ e) + float(d0 @ H @ e)
    curv = float(e @ H @ e)
    if curv > 0:
        lam = min(max(-lin / curv, 0.0), 1.0)
    else:
        lam = 1.0 if lin + 0.5 * curv < 0 else 0.0
    return d0 + lam * e


def solve_tr_subproblem(g, H, mu, delta, R, nu=1.0, theta=None):
    """Inexact solution of the constrained model problem.

    Minimizes the quadratic model over the segments between the Cauchy point
    (along the stationarity direction) and two projected dogleg steps: one
    in the tangent space of the simplex and one in the current face.

    Returns
    -------
    d : ndarray
        Feasible step with ``|d| <= delta``.
    pred : float
        Predicted decrease ``-(<g, d> + d'Hd/2)``.
    cauchy_ok : bool
        Whether the Cauchy decrease condition holds (it always does up to
        rounding; the Cauchy point is used if the combination fails).
    """
    mu = np.asarray(mu, dtype=float)
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    if theta is None:
        theta, d_theta = stationarity_theta(mu, g, R)
    else:
        theta, d_theta = theta
    if theta <= 0:
        return np.zeros_like(mu), 0.0, True
    m = float(mu.sum())
    d_c = _scaled_along(d_theta, float(g @ d_theta), H, delta)
    d_dl = project_simplex(mu + _tangent_dogleg(g, H, delta), m) - mu
    d_dl = _into_radius(d_dl, delta)
    d = _best_combination(g, H, d_c, d_dl)
    candidates = []
    d_face = _face_dogleg(g, H, mu, delta)
    if d_face is not None:
        candidates.append(project_simplex(mu + d_face, m) - mu)
    d_qp = _simplex_qp_step(g, H, mu)
    if d_qp is not None:
        candidates.append(d_qp)
    for cand in candidates:
        alt = _best_combination(g, H, d_c, _into_radius(cand, delta))
        if _model(g, H, alt) < _model(g, H, d):
            d = alt
    bound = cauchy_bound(theta, delta, R, H, nu)
    slack = CAUCHY_RTOL * (1.0 + abs(bound))
    pred = -_model(g, H, d)
    if pred < bound - slack:
        d = d_c
        pred = -_model(g, H, d)
    return d, pred, pred >= bound - slack


def _psi_lp(mu, G):
    n = mu.size
    k = len(G)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([np.asarray(G), -np.ones((k, 1))])
    A_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    bounds = [(-x, None) for x in mu] + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(k), A_eq=A_eq, b_eq=[0.0], bounds=bounds,
                  method="highs")
    return res.x[:n] if res.status == 0 else None


def _psi_ball(mu, G, R):
    n = mu.size
    cons = [{"type": "eq", "fun": lambda x: x[:n].sum()},
            {"type": "ineq", "fun": lambda x: R * R - x[:n] @ x[:n]},
            {"type": "ineq", "fun": lambda x: x[n] - G @ x[:n]}]
    res = minimize(lambda x: x[n], np.zeros(n + 1), jac=lambda x: np.eye(n + 1)[n], method="SLSQP",
                   bounds=[(-x, None) for x in mu] + [(None, None)], constraints=cons,
                   options={"ftol": 1e-15, "maxiter": 500})
    return res.x[:n]


def psi_direction(mu, G_set, R):
    """``(psi, d)`` with ``psi = -min_d max_g <g, d>`` over the feasible set."""
    mu = np.asarray(mu, dtype=float)
    G = np.atleast_2d(np.asarray(G_set, dtype=float))
    m = float(mu.sum())
    candidates = [np.zeros_like(mu)]
    if _vertices_inside(mu, R):
        for j in range(mu.size):
            v = -mu.copy()
            v[j] += m
            candidates.append(v)
        lp = _psi_lp(mu, G)
    else:
        lp = _psi_ball(mu, G, R)
    if lp is not None:
        candidates.append(lp)
    # exact evaluation decides; the LP point only adds candidates
    scores = [float(np.max(G @ d)) for d in candidates]
    best = int(np.argmin(scores))
    return max(-scores[best], 0.0) + 0.0, candidates[best]


def psi_stationarity(mu, delta, G_set, R):
    """Stationarity measure of the max-type model built from ``G_set``.

    ``delta`` only enters through how ``G_set`` was sampled; it is accepted
    for interface symmetry.
    """
    if len(G_set) == 0:
        raise DomainError("G_set must contain at least one subgradient")
    return psi_direction(mu, G_set, R)[0]


def solve_modified_subproblem(mu, delta, G_set, H, R, nu=1.0):
    """Inexact solution of the max-type model problem.

    The step is the best multiple of the ``psi`` direction inside the radius,
    which certifies the modified Cauchy decrease.

    Returns ``(d, pred, cauchy_ok, psi)``.
    """
    mu = np.asarray(mu, dtype=float)
    H = np.asarray(H, dtype=float)
    G = np.atleast_2d(np.asarray(G_set, dtype=float))
    psi, d_psi = psi_direction(mu, G, R)
    if psi <= 0:
        return np.zeros_like(mu), 0.0, True, 0.0
    d = _scaled_along(d_psi, -psi, H, delta)
    pred = -(float(np.max(G @ d)) + 0.5 * float(d @ H @ d))
    bound = cauchy_bound(psi, delta, R, H, nu)
    return d, pred, pred >= bound - CAUCHY_RTOL * (1.0 + abs(bound)), psi


def bfgs_update(H, s, y):
    """BFGS update of ``H``; skipped unless ``<s, y> > 1e-10 |s| |y|``."""
    H = np.asarray(H, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sy = float(s @ y)
    if not sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
        return H.copy()
    Hs = H @ s
    out = H - np.outer(Hs, Hs) / float(s @ Hs) + np.outer(y, y) / sy
    return 0.5 * (out + out.T)


def update_radius(rho, delta, config):
    if rho <= config.eta1:
        return config.beta1 * delta
    if rho <= config.eta2:
        return max(config.delta_min, delta)
    return max(config.delta_min, config.beta2 * delta)


def _renormalize(x, mass):
    x = np.maximum(x, 0.0)
    return x * (mass / x.sum())


def run_tr(oracle: ObjectiveOracle, x0, config=None, callback=None):
    """Run the trust-region method from ``x0`` (a point of the simplex).

    Stops when ``theta <= config.tol`` (``converged`` set) or after
    ``config.max_iter`` iterations. Accepted steps never increase the
    objective.
    """
    x = np.asarray(x0, dtype=float).copy()
    if x.min() < 0:
        raise DomainError("x0 must be nonnegative")
    cfg = (config or TRConfig()).resolved(x.size)
    mass = float(x.sum())
    f = oracle.value(x)
    g = oracle.subgradient(x)
    state = TRState(iterate=x, radius=cfg.delta0, hessian_model=np.eye(x.size), f=f, subgradient=g)
    for k in range(cfg.max_iter + 1):
        theta, d_theta = stationarity_theta(state.iterate, g, cfg.R)
        state.theta, state.iteration = theta, k
        if theta <= cfg.tol:
            state.converged = True
            break
        if k == cfg.max_iter:
            break
        delta, H = state.radius, state.hessian_model
        psi = float("nan")
        if delta >= cfg.delta_min:
            d, pred, ok = solve_tr_subproblem(g, H, state.iterate, delta, cfg.R, cfg.nu,
                                              theta=(theta, d_theta))
            trial = _renormalize(state.iterate + d, mass)
            f_trial = oracle.value(trial)
            rho = (f - f_trial) / pred if pred > 0 else 0.0
        else:
            G_set = [g] + list(oracle.bouligand_ball(state.iterate, delta))
            d, pred, ok, psi = solve_modified_subproblem(state.iterate, delta, G_set, H, cfg.R, cfg.nu)
            if psi <= theta * delta or pred <= 0:
                rho, trial, f_trial = 0.0, None, None
            else:
                trial = _renormalize(state.iterate + d, mass)
                f_trial = oracle.value(trial)
                rho = (f - f_trial) / pred
        if not ok:
            log.warning("Cauchy decrease not certified at iteration %d", k)
        accepted = rho > cfg.eta1
        state.history.append(TRRecord(k, f, theta, psi, delta, rho, accepted, ok))
        log.debug("iter %3d f=%.6e theta=%.3e delta=%.3e rho=%.3f %s", k, f, theta, delta, rho,
                  "accepted" if accepted else "rejected")
        state.radius = update_radius(rho, delta, cfg)
        state.last_rho = rho
        if accepted:
            g_new = oracle.subgradient(trial)
            state.hessian_model = bfgs_update(H, trial - state.iterate, g_new - g)
            state.iterate, f, g = trial, f_trial, g_new
            state.f, state.subgradient = f, g
        if callback is not None:
            callback(state)
    return state

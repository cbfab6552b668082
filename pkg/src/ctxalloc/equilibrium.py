"""Equilibrium computation by discretized projected gradient play, plus certificates.

Each SCBS moves along its own utility gradient and is projected back onto its
budget set, all players simultaneously. The nonsmooth mismatch cost is handled
by its proximal map rather than a subgradient, so the iteration has the Nash
equilibria as exact fixed points instead of chattering around the kink.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .game import (
    GameSpec,
    gradient_flat,
    prox_budget,
    prox_budget_groups,
    utilities_flat,
)
from .network import LinkTable, PowerProfile, Scenario

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    ``step_size=None`` picks a step per link from the local curvature and
    slope of its utility (see :func:`auto_steps`). ``convergence_tol`` is
    measured on the sup-norm profile change in units of ``p_max``.
    """

    step_size: float | None = None
    max_iterations: int = 100_000
    convergence_tol: float = 1e-8
    num_restarts: int = 10
    restart_seed: int = 0
    step_scale: float = 1.0
    record_trace: bool = False

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be positive")
        if self.max_iterations < 1 or self.num_restarts < 1:
            raise ValueError("max_iterations and num_restarts must be >= 1")
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")


@dataclass
class SolveReport:
    profile: PowerProfile
    utilities: np.ndarray
    iterations: int
    converged: bool
    residual: float  # sup-norm of T(u) - u, in units of p_max
    step_size: float
    scheme: str = ""
    trace: list = field(default_factory=list)  # (iteration, delta, residual)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "step_size": self.step_size,
            "utilities": [float(v) for v in self.utilities],
            "profile": self.profile.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "delta", "residual"])
        for it, delta, res in self.trace:
            w.writerow([it, f"{delta:.9g}", f"{res:.9g}"])
        return buf.getvalue()


class _Dynamics:
    """Precomputed layout for the simultaneous prox-gradient map.

    Link ``a`` moves with its own step ``link_steps[a]`` and the prox is taken
    in the matching diagonal metric, so each SCBS solves its own scaled
    proximal problem. The fixed points are the equilibria for any positive
    steps.
    """

    def __init__(self, scenario: Scenario, spec: GameSpec, step: float | None = None,
                 step_scale: float = 1.0, x_ref: np.ndarray | None = None):
        self.sc = scenario
        self.spec = spec
        self.lt: LinkTable = scenario.links
        self.p_max = scenario.p_max
        self.eta = spec.eta_vector(scenario.num_scbs)
        self.step_scale = step_scale
        lt = self.lt
        M = scenario.num_scbs
        dims = np.diff(lt.offsets)
        dmax = int(dims.max())
        self.mask = np.arange(dmax)[None, :] < dims[:, None]
        self.fast = lt.singleton_groups
        self.use_prox = spec.has_cost and spec.smooth_delta is None
        self.t_unit = np.where(self.use_prox & lt.frequent, self.eta[lt.player], 0.0)
        self.UB = np.zeros((M, dmax))
        self.UB[self.mask] = np.where(lt.frequent, lt.ubar, 0.0)
        # proportional-fair curvature moves with the iterate, so its steps are refreshed
        self.adaptive = step is None and spec.scheme == "proportional-fair"
        if step is None:
            x0 = x_ref if x_ref is not None else PowerProfile.uniform(scenario).flat
            self.set_steps(auto_steps(scenario, spec, x0, step_scale))
        else:
            self.set_steps(np.full(lt.size, float(step)))

    def set_steps(self, steps):
        steps = np.asarray(steps, dtype=float)
        if not self.fast:
            # coupled groups are solved with one step per SCBS
            per = np.full(self.sc.num_scbs, np.inf)
            np.minimum.at(per, self.lt.player, steps)
            steps = per[self.lt.player]
        self.link_steps = steps
        self.W = np.ones(self.mask.shape)
        self.W[self.mask] = steps
        self.T = np.zeros(self.mask.shape)
        self.T[self.mask] = steps * self.t_unit

    @property
    def step(self) -> float:
        return float(self.link_steps.min())

    def gradient(self, x):
        return gradient_flat(self.lt, self.spec, x, self.eta, include_cost=not self.use_prox)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.adaptive:
            self.set_steps(auto_steps(self.sc, self.spec, x, self.step_scale))
        v = x + self.link_steps * self.gradient(x)
        if self.fast:
            V = np.full(self.mask.shape, -np.inf)
            V[self.mask] = v
            return prox_budget(V, self.UB, self.T, self.p_max, self.W)[self.mask]
        out = np.empty_like(v)
        lt = self.lt
        for i in range(self.sc.num_scbs):
            a, b = lt.offsets[i], lt.offsets[i + 1]
            groups = lt.group[a:b]
            ubar = {g: lt.group_ubar[g] for g in np.unique(groups)}
            tg = {g: self.link_steps[a] * self.eta[i] * (self.use_prox and lt.group_frequent[g])
                  for g in ubar}
            out[a:b] = prox_budget_groups(v[a:b], groups, ubar, tg, self.p_max)
        return out

    def residual(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.apply(x) - x))) / self.p_max


def auto_steps(scenario: Scenario, spec: GameSpec, x_ref=None, step_scale: float = 1.0) -> np.ndarray:
    """Per-link steps ``step_scale * min(1/r_a, p_max/|g_a|)``.

    ``r_a`` is the absolute row sum of the game Jacobian and ``g_a`` the
    smooth part of the gradient. The first term keeps the scaled Jacobian
    within unit norm, the second keeps a step from moving a link by more than
    one budget (which would drown a budget-sized answer in rounding error).
    For the rate-based schemes both are evaluated at zero power, where the
    rate curvature and slopes peak, so the bound holds on the whole feasible
    set. Proportional-fair curvature blows up near zero power and is
    evaluated at ``x_ref``.
    """
    from .theory import jacobian_flat

    lt = scenario.links
    if spec.scheme == "proportional-fair":
        x = x_ref if x_ref is not None else PowerProfile.uniform(scenario).flat
    else:
        x = np.zeros(lt.size)
    rows = np.abs(jacobian_flat(scenario, spec, x, mode="analytic")).sum(axis=1)
    smooth = replace(spec, scheme="sum-rate") if spec.has_cost else spec
    g = np.abs(gradient_flat(lt, smooth, x, spec.eta_vector(scenario.num_scbs)))
    with np.errstate(divide="ignore"):
        steps = np.minimum(np.where(rows > 0, 1.0 / rows, np.inf),
                           np.where(g > 0, scenario.p_max / g, np.inf))
    steps = np.where(np.isfinite(steps), steps, scenario.p_max)
    return step_scale * steps


def auto_step_size(scenario: Scenario, spec: GameSpec, x_ref=None, step_scale: float = 1.0) -> float:
    """Smallest of the per-link automatic steps."""
    return float(auto_steps(scenario, spec, x_ref, step_scale).min())


STALL_PATIENCE = 50
STALL_FACTOR = 0.999
MIN_DAMPING = 1 / 64


def _clip_feasible(x, p_max, dyn):
    # a convex combination of feasible profiles is feasible up to rounding
    x = np.maximum(x, 0.0)
    tot = np.bincount(dyn.lt.player, weights=x, minlength=dyn.sc.num_scbs)
    scale = np.where(tot > p_max, p_max / np.maximum(tot, np.finfo(float).tiny), 1.0)
    return x * scale[dyn.lt.player]


def _resolve_initial(scenario: Scenario, spec: GameSpec, initial: PowerProfile | None) -> np.ndarray:
    if initial is None:
        initial = PowerProfile.uniform(scenario)
    initial.check_shape(scenario)
    x = initial.flat.astype(float)
    if not initial.is_feasible(scenario.p_max):
        x = np.concatenate([
            _project_row(p, scenario.p_max) for p in initial.powers
        ])
    if spec.scheme == "proportional-fair" and np.any(x <= 0):
        raise ValueError("proportional-fair dynamics need a strictly positive starting profile")
    return x


def _project_row(p, p_max):
    from .game import project_feasible

    return project_feasible(p, p_max)


def step_dynamics(scenario: Scenario, spec: GameSpec, profile: PowerProfile,
                  config: SolverConfig = SolverConfig()) -> PowerProfile:
    """One simultaneous update ``u_i <- prox_i(u_i + step * grad_i J_i)`` for all SCBSs."""
    profile.check_shape(scenario)
    x = profile.flat
    dyn = _Dynamics(scenario, spec, config.step_size, config.step_scale, x)
    return PowerProfile.from_flat(scenario, dyn.apply(x))


def solve_psne(scenario: Scenario, spec: GameSpec, initial_profile: PowerProfile | None = None,
               config: SolverConfig = SolverConfig()) -> SolveReport:
    """Iterate the dynamics until the sup-norm change drops below ``tol * p_max``.

    The returned profile is the last iterate whose one-step change (its
    residual) met the tolerance, so restarting from it stops immediately.
    If the residual stalls while successive steps keep reversing direction
    (the iterates cycle), the update is damped to ``x + theta * (T(x) - x)``;
    this keeps the fixed points and breaks the cycle.
    """
    x = _resolve_initial(scenario, spec, initial_profile)
    dyn = _Dynamics(scenario, spec, config.step_size, config.step_scale, x)
    tol = config.convergence_tol
    trace = []
    converged = False
    res = np.inf
    best, since_best, reversals, theta = np.inf, 0, 0, 1.0
    prev = None
    it = 0
    for it in range(1, config.max_iterations + 1):
        step = dyn.apply(x) - x
        delta = float(np.max(np.abs(step)))
        res = delta / scenario.p_max
        if config.record_trace:
            trace.append((it, delta, res))
        if res <= tol:
            converged = True
            break
        if res < STALL_FACTOR * best:
            best, since_best, reversals = res, 0, 0
        else:
            since_best += 1
            reversals += prev is not None and float(step @ prev) < 0
            if since_best >= STALL_PATIENCE:
                if reversals > STALL_PATIENCE // 2 and theta > MIN_DAMPING:
                    theta = theta / 2
                since_best, reversals = 0, 0
        prev = step
        x = _clip_feasible(x + theta * step, scenario.p_max, dyn) if theta < 1 else x + step
    if not converged:
        logger.warning("no convergence after %d iterations (residual %.3g)", it, res)
    profile = PowerProfile.from_flat(scenario, x)
    return SolveReport(
        profile=profile,
        utilities=utilities_flat(dyn.lt, spec, x, dyn.eta),
        iterations=it,
        converged=converged,
        residual=res,
        step_size=dyn.step,
        scheme=spec.scheme,
        trace=trace,
    )


# -- certificates -----------------------------------------------------------

@dataclass
class VerifyResult:
    is_equilibrium: bool
    residual: float
    residual_ok: bool
    max_improvement: float  # best unilateral gain found by the oracle, over all SCBSs
    oracle: str  # "grid" or "sampled"

    def __bool__(self):
        return self.is_equilibrium


def _grid_points(dim: int, divisions: int) -> np.ndarray:
    """Integer points ``n`` with ``n >= 0``, ``sum(n) <= divisions``, divided by ``divisions``."""
    pts = [c for c in itertools.product(range(divisions + 1), repeat=dim) if sum(c) <= divisions]
    return np.array(pts, dtype=float) / divisions


def _sampled_points(dim: int, count: int, rng) -> np.ndarray:
    # uniform on {u >= 0, sum(u) <= 1}: drop the slack coordinate of a flat Dirichlet
    pts = rng.dirichlet(np.ones(dim + 1), size=count)[:, :dim]
    return np.vstack([np.zeros(dim), np.eye(dim), pts])


def player_utility_batch(scenario: Scenario, spec: GameSpec, x: np.ndarray, i: int,
                         candidates: np.ndarray) -> np.ndarray:
    """Utility of SCBS ``i`` for each row of ``candidates``, opponents held at ``x``."""
    lt = scenario.links
    a, b = lt.offsets[i], lt.offsets[i + 1]
    eta = spec.eta_vector(scenario.num_scbs)[i]
    den = lt.denominators(x)[a:b]
    rest = den - lt.beta[a:b] * x[a:b]  # interference + noise, fixed under own deviations
    link_rate = np.log1p(lt.beta[a:b] * candidates / rest)
    groups = lt.group[a:b]
    labels, inv = np.unique(groups, return_inverse=True)
    onehot = np.zeros((b - a, len(labels)))
    onehot[np.arange(b - a), inv] = 1.0
    rates = link_rate @ onehot
    if spec.scheme == "proportional-fair":
        return np.log(np.maximum(rates, spec.pf_rate_floor)).sum(axis=1)
    val = rates.sum(axis=1)
    if spec.has_cost:
        freq = lt.group_frequent[labels]
        diff = candidates @ onehot - lt.group_ubar[labels]
        c = np.abs(diff) if spec.smooth_delta is None else np.sqrt(diff**2 + spec.smooth_delta**2)
        val = val - eta * (c * freq).sum(axis=1)
    return val


def verify_equilibrium(scenario: Scenario, spec: GameSpec, profile: PowerProfile,
                       tol: float = 1e-7, *, config: SolverConfig = SolverConfig(),
                       improve_tol: float = 1e-4, divisions: int = 20,
                       samples: int = 20000, seed: int = 0) -> VerifyResult:
    """Certify a candidate equilibrium two independent ways.

    (a) the prox-gradient residual (units of ``p_max``) is at most ``tol``;
    (b) for every SCBS a brute-force search over its feasible set finds no
    unilateral deviation gaining more than ``improve_tol``. The search is an
    exhaustive grid (``divisions + 1`` points per axis) up to dimension 4 and
    random sampling beyond that.
    """
    profile.check_shape(scenario)
    x = profile.flat
    dyn = _Dynamics(scenario, spec, config.step_size, config.step_scale, x)
    res = dyn.residual(x)
    rng = np.random.default_rng(seed)
    best_gain = -np.inf
    modes = set()
    current = utilities_flat(dyn.lt, spec, x, dyn.eta)
    for i, d in enumerate(scenario.dims()):
        if d <= 4:
            pts = _grid_points(d, divisions)
            modes.add("grid")
        else:
            pts = _sampled_points(d, samples, rng)
            modes.add("sampled")
        vals = player_utility_batch(scenario, spec, x, i, pts * scenario.p_max)
        best_gain = max(best_gain, float(vals.max() - current[i]))
    return VerifyResult(
        is_equilibrium=bool(res <= tol and best_gain <= improve_tol),
        residual=res,
        residual_ok=bool(res <= tol),
        max_improvement=best_gain,
        oracle="sampled" if "sampled" in modes else "grid",
    )


@dataclass
class ProbeResult:
    unique: bool | None  # None when some restart failed to converge
    max_distance: float  # absolute sup-norm distance between converged profiles
    relative_distance: float  # max_distance / p_max
    reports: list

    def __bool__(self):
        return bool(self.unique)


def random_profile(scenario: Scenario, rng, floor: float = 0.0) -> PowerProfile:
    """Random point of each SCBS's feasible set.

    Uniform when ``floor == 0``; otherwise mixed with the uniform split so every
    entry is at least ``floor * p_max / d``.
    """
    return PowerProfile(tuple(
        scenario.p_max * (floor / d + (1 - floor) * rng.dirichlet(np.ones(d + 1))[:d])
        for d in scenario.dims()
    ))


def uniqueness_probe(scenario: Scenario, spec: GameSpec, config: SolverConfig = SolverConfig(),
                     agree_tol: float = 1e-6) -> ProbeResult:
    """Solve from ``num_restarts`` random starts and compare the limits."""
    rng = np.random.default_rng(config.restart_seed)
    reports = []
    for _ in range(config.num_restarts):
        # proportional-fair starts must be strictly positive
        start = random_profile(scenario, rng, 1e-3 if spec.scheme == "proportional-fair" else 0.0)
        reports.append(solve_psne(scenario, spec, start, config))
    flats = [r.profile.flat for r in reports]
    dist = 0.0
    for a, b in itertools.combinations(flats, 2):
        dist = max(dist, float(np.max(np.abs(a - b))))
    rel = dist / scenario.p_max
    if not all(r.converged for r in reports):
        unique = None
    else:
        unique = rel <= agree_tol
    return ProbeResult(unique=unique, max_distance=dist, relative_distance=rel, reports=reports)

"""Finite-difference oracles for the analytic gradients and second derivatives.

The oracles only evaluate utilities, never the derivative code they check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import SCHEMES, GameSpec, gradient_flat, utilities_flat
from .network import PowerProfile, Scenario, build_scenario
from .theory import jacobian_flat

KINK_CLEARANCE = 1e-3


def random_instance(rng, num_scbs: int | None = None, num_ues: int | None = None,
                    p_max: float = 1.0) -> Scenario:
    """Unit-scale instance (gains and noise of order one) with random frequent users."""
    M = num_scbs or int(rng.integers(1, 4))
    N = num_ues or int(rng.integers(1, 4))
    beta = rng.uniform(0.2, 2.0, size=(M, N))
    noise = rng.uniform(0.2, 1.0, size=N)
    targets = []
    for _ in range(M):
        freq = rng.random(N) < 0.5
        targets.append({j: float(rng.uniform(0, p_max / N)) for j in range(N) if freq[j]})
    return build_scenario(beta, noise, p_max, qos_target=targets)


def interior_point(scenario: Scenario, rng, max_tries: int = 1000) -> np.ndarray:
    """Random strictly positive feasible profile whose frequent totals clear every kink."""
    lt = scenario.links
    for _ in range(max_tries):
        prof = []
        for d in scenario.dims():
            w = rng.dirichlet(np.ones(d + 1))[:d]
            prof.append(scenario.p_max * (0.05 / d + 0.9 * w))
        x = np.concatenate(prof)
        tot = np.bincount(lt.group, weights=x, minlength=len(lt.group_player))
        if np.all(~lt.group_frequent | (np.abs(tot - lt.group_ubar) > KINK_CLEARANCE)):
            return x
    raise RuntimeError("could not find an interior point away from the cost kinks")


def fd_player_gradient(scenario: Scenario, spec: GameSpec, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of each SCBS's utility wrt its own powers."""
    lt = scenario.links
    eta = spec.eta_vector(scenario.num_scbs)
    g = np.empty_like(x)
    for a in range(lt.size):
        i = lt.player[a]
        xp, xm = x.copy(), x.copy()
        xp[a] += h
        xm[a] -= h
        g[a] = (utilities_flat(lt, spec, xp, eta)[i] - utilities_flat(lt, spec, xm, eta)[i]) / (2 * h)
    return g


def fd_player_hessian(scenario: Scenario, spec: GameSpec, x: np.ndarray, h: float | None = None) -> np.ndarray:
    """Second differences ``d^2 J_p(a) / du_a du_b`` from utility values only.

    The default step shrinks with the smallest power, where log-rate
    curvature is steepest.
    """
    lt = scenario.links
    if h is None:
        h = float(np.clip(2e-3 * x.min(), 1e-6, 1e-4))
    eta = spec.eta_vector(scenario.num_scbs)
    L = lt.size

    def J(dx):
        return utilities_flat(lt, spec, x + dx, eta)

    H = np.empty((L, L))
    e = np.eye(L) * h
    base = J(np.zeros(L))
    for a in range(L):
        i = lt.player[a]
        H[a, a] = (J(e[a])[i] - 2 * base[i] + J(-e[a])[i]) / h**2
        for b in range(L):
            if b == a:
                continue
            H[a, b] = (J(e[a] + e[b])[i] - J(e[a] - e[b])[i]
                       - J(-e[a] + e[b])[i] + J(-e[a] - e[b])[i]) / (4 * h**2)
    return H


def relative_error(approx, exact) -> float:
    approx, exact = np.asarray(approx), np.asarray(exact)
    scale = max(np.max(np.abs(exact)), np.max(np.abs(approx)), np.finfo(float).tiny)
    return float(np.max(np.abs(approx - exact)) / scale)


@dataclass
class SelfTestResult:
    points: int
    max_gradient_error: float
    hessian_points: int
    max_hessian_error: float
    gradient_tol: float = 1e-6
    hessian_tol: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.max_gradient_error <= self.gradient_tol and self.max_hessian_error <= self.hessian_tol


def self_test(points: int = 1000, hessian_points: int = 100, seed: int = 0) -> SelfTestResult:
    """Compare analytic derivatives with finite differences on random unit-scale games.

    Gradients and Hessians are checked for all three schemes in turn, always
    away from the mismatch-cost kink.
    """
    rng = np.random.default_rng(seed)
    worst_g = 0.0
    for n in range(points):
        sc = random_instance(rng)
        spec = GameSpec(scheme=SCHEMES[n % 3], eta=float(rng.uniform(0.1, 3.0)))
        x = interior_point(sc, rng)
        eta = spec.eta_vector(sc.num_scbs)
        g = gradient_flat(sc.links, spec, x, eta)
        worst_g = max(worst_g, relative_error(fd_player_gradient(sc, spec, x), g))
    worst_h = 0.0
    for n in range(hessian_points):
        sc = random_instance(rng)
        spec = GameSpec(scheme=SCHEMES[n % 3], eta=float(rng.uniform(0.1, 3.0)))
        x = interior_point(sc, rng)
        worst_h = max(worst_h, relative_error(fd_player_hessian(sc, spec, x),
                                              jacobian_flat(sc, spec, x, "analytic")))
    return SelfTestResult(points, worst_g, hessian_points, worst_h)


def profile_from_flat(scenario: Scenario, x) -> PowerProfile:
    return PowerProfile.from_flat(scenario, np.asarray(x, dtype=float))

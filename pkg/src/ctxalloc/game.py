"""Per-SCBS utilities, their gradients, and the feasible-set projection.

Three schemes share the same rate model:

* ``context-aware``: sum of rates minus ``eta_i`` times the mismatch
  ``|u_ij - ubar_ij|`` over frequent users (occasional users carry no cost).
* ``sum-rate``: sum of rates.
* ``proportional-fair``: sum of ``log(max(R_ij, eps))``.

For a user served on several subcarriers, ``u_ij`` in the mismatch cost is the
total power SCBS ``i`` gives that user.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import LinkTable, PowerProfile, Scenario

SCHEMES = ("context-aware", "sum-rate", "proportional-fair")
GRADIENT_MODES = ("analytic", "paper-literal")


@dataclass(frozen=True)
class GameSpec:
    scheme: str = "context-aware"
    eta: float | tuple = 2.0
    pf_rate_floor: float = 1e-12
    gradient_mode: str = "analytic"
    smooth_delta: float | None = None  # use sqrt((u-ubar)^2 + delta^2) instead of |u-ubar|
    qos_map: str = "identity"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.qos_map != "identity":
            raise ValueError("only the identity QoS map is supported")
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise ValueError("eta must be finite and nonnegative")
        if not self.pf_rate_floor > 0:
            raise ValueError("pf_rate_floor must be positive")
        if self.smooth_delta is not None and not self.smooth_delta > 0:
            raise ValueError("smooth_delta must be positive")

    def eta_vector(self, num_scbs: int) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if eta.size == 1:
            return np.full(num_scbs, eta[0])
        if eta.size != num_scbs:
            raise ValueError(f"eta has {eta.size} entries, expected {num_scbs}")
        return eta

    @property
    def has_cost(self) -> bool:
        return self.scheme == "context-aware"


def cost(u: float, ubar: float) -> float:
    """Mismatch cost |u - ubar| under the identity QoS map."""
    if u < 0 or ubar < 0:
        raise ValueError("powers and targets must be nonnegative")
    return abs(u - ubar)


# -- flat-vector kernels ----------------------------------------------------

def group_power(lt: LinkTable, x: np.ndarray) -> np.ndarray:
    return np.bincount(lt.group, weights=x, minlength=len(lt.group_player))


def _mismatch(lt: LinkTable, spec: GameSpec, x: np.ndarray):
    """Per-group cost value and derivative wrt the group's total power."""
    diff = group_power(lt, x) - lt.group_ubar
    if spec.smooth_delta is None:
        val, slope = np.abs(diff), np.sign(diff)
    else:
        val = np.sqrt(diff**2 + spec.smooth_delta**2)
        slope = diff / val
    mask = lt.group_frequent
    return np.where(mask, val, 0.0), np.where(mask, slope, 0.0)


def utilities_flat(lt: LinkTable, spec: GameSpec, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
    M = len(eta)
    rates = lt.group_rates(x)
    if spec.scheme == "proportional-fair":
        terms = np.log(np.maximum(rates, spec.pf_rate_floor))
    else:
        terms = rates
        if spec.has_cost:
            terms = terms - eta[lt.group_player] * _mismatch(lt, spec, x)[0]
    return np.bincount(lt.group_player, weights=terms, minlength=M)


def rate_gradient_flat(lt: LinkTable, x: np.ndarray, mode: str = "analytic") -> np.ndarray:
    """d R_link / d u_link for every link."""
    den = lt.denominators(x)
    if mode == "analytic":
        return lt.beta / den
    own = lt.beta * x
    return lt.beta * (den - own) / den**2


def gradient_flat(
    lt: LinkTable, spec: GameSpec, x: np.ndarray, eta: np.ndarray, include_cost: bool = True
) -> np.ndarray:
    g = rate_gradient_flat(lt, x, spec.gradient_mode)
    if spec.scheme == "proportional-fair":
        rates = lt.group_rates(x)
        g = g / np.maximum(rates, spec.pf_rate_floor)[lt.group]
    elif spec.has_cost and include_cost:
        slope = _mismatch(lt, spec, x)[1]
        g = g - eta[lt.player] * slope[lt.group]
    return g


# -- public per-player API --------------------------------------------------

def utility(scenario: Scenario, spec: GameSpec, profile: PowerProfile, i: int) -> float:
    """Utility of SCBS ``i`` under the scheme in ``spec``."""
    profile.check_shape(scenario)
    eta = spec.eta_vector(scenario.num_scbs)
    return float(utilities_flat(scenario.links, spec, profile.flat, eta)[i])


def utilities(scenario: Scenario, spec: GameSpec, profile: PowerProfile) -> np.ndarray:
    profile.check_shape(scenario)
    eta = spec.eta_vector(scenario.num_scbs)
    return utilities_flat(scenario.links, spec, profile.flat, eta)


def grad_utility(scenario: Scenario, spec: GameSpec, profile: PowerProfile, i: int) -> np.ndarray:
    """Gradient of SCBS ``i``'s utility wrt its own power vector.

    The mismatch cost contributes the subgradient ``-eta*sign(u - ubar)`` with
    ``sign(0) = 0``.
    """
    profile.check_shape(scenario)
    lt = scenario.links
    eta = spec.eta_vector(scenario.num_scbs)
    g = gradient_flat(lt, spec, profile.flat, eta)
    return g[lt.offsets[i]:lt.offsets[i + 1]]


# -- projection and prox ----------------------------------------------------

def project_feasible(v, p_max: float) -> np.ndarray:
    """Euclidean projection onto ``{u >= 0, sum(u) <= p_max}``."""
    v = np.asarray(v, dtype=float)
    if not p_max > 0:
        raise ValueError("p_max must be positive")
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= p_max:
        return clipped
    # sorted-threshold projection onto the face sum(u) = p_max
    s = np.sort(v)[::-1]
    css = np.cumsum(s) - p_max
    idx = np.arange(1, len(s) + 1)
    rho = np.nonzero(s - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return _enforce_budget(np.maximum(v - theta, 0.0), p_max)


def _enforce_budget(u: np.ndarray, p_max: float) -> np.ndarray:
    # rounding in the threshold can leave the sum a few ulps above the budget
    s = u.sum()
    if s > p_max:
        u = u * (p_max / s)
        excess = u.sum() - p_max
        if excess > 0:
            k = np.argmax(u)
            u[k] = max(u[k] - excess, 0.0)
    return u


def _shrink(x, ubar, t):
    """Soft-threshold ``x`` toward ``ubar`` by ``t``."""
    return np.where(x > ubar + t, x - t, np.where(x < ubar - t, x + t, ubar))


def prox_budget(V: np.ndarray, UB: np.ndarray, T: np.ndarray, p_max: float,
                W: np.ndarray | None = None) -> np.ndarray:
    """Row-wise prox of ``t*|u - ubar|`` plus the budget set, singleton links.

    Solves, independently for every row ``v``,
    ``argmin_u sum_a (u_a - v_a)^2 / (2 w_a) + sum_a (t_a / w_a) |u_a - ubar_a|``
    s.t. ``u >= 0``, ``sum(u) <= p_max``, with ``w = 1`` unless ``W`` is given.
    Padding entries are ``-inf`` in ``V`` and come back 0. With ``T == 0`` and
    unit weights this is exactly :func:`project_feasible`.
    """
    U = np.maximum(_shrink(V, UB, T), 0.0)
    over = U.sum(axis=1) > p_max
    if not np.any(over):
        return U
    V, UB, T = V[over], UB[over], T[over]
    W = np.ones_like(V) if W is None else W[over]
    # total allocation as a function of the budget multiplier lam is
    # piecewise linear and nonincreasing, with kinks at these points
    bp = np.concatenate([np.zeros((len(V), 1)), (V - UB - T) / W, (V - UB + T) / W, (V + T) / W],
                        axis=1)
    bp = np.sort(np.maximum(np.nan_to_num(bp, neginf=0.0), 0.0), axis=1)
    tot = np.maximum(_shrink(V[:, None, :] - W[:, None, :] * bp[:, :, None],
                             UB[:, None, :], T[:, None, :]), 0.0).sum(axis=2)
    k = (tot >= p_max).sum(axis=1) - 1
    rows = np.arange(len(k))
    b0, b1 = bp[rows, k], bp[rows, k + 1]
    s0, s1 = tot[rows, k], tot[rows, k + 1]
    lam = b0 + (s0 - p_max) * (b1 - b0) / (s0 - s1)
    sol = np.maximum(_shrink(V - W * lam[:, None], UB, T), 0.0)
    for r in range(len(sol)):
        sol[r] = _enforce_budget(sol[r], p_max)
    U[over] = sol
    return U


def _group_shrink(w: np.ndarray, ubar: float, t: float) -> np.ndarray:
    """argmin_{u>=0} 0.5||u-w||^2 + t|sum(u) - ubar|."""
    down = np.maximum(w - t, 0.0)
    if down.sum() > ubar:
        return down
    up = np.maximum(w + t, 0.0)
    if up.sum() < ubar:
        return up
    if ubar == 0:
        return np.zeros_like(w)
    s = np.sort(w)[::-1]
    css = np.cumsum(s) - ubar
    idx = np.arange(1, len(s) + 1)
    rho = np.nonzero(s - css / idx > 0)[0][-1]
    return np.maximum(w - css[rho] / (rho + 1), 0.0)


def prox_budget_groups(v, groups, ubar, t, p_max: float, iters: int = 200) -> np.ndarray:
    """Prox for one player whose cost couples several links of the same user.

    ``groups[a]`` is a group label per link; ``ubar[g]``/``t[g]`` are per
    group label (``t == 0`` for costless groups). Solved by bisection on the
    budget multiplier.
    """
    v = np.asarray(v, dtype=float)
    labels = np.unique(groups)
    members = [np.nonzero(groups == g)[0] for g in labels]

    def alloc(lam):
        u = np.empty_like(v)
        for g, idx in zip(labels, members):
            u[idx] = _group_shrink(v[idx] - lam, ubar[g], t[g])
        return u

    u = alloc(0.0)
    if u.sum() <= p_max:
        return u
    lo, hi = 0.0, float(np.max(v) + max(t.values()) + 1.0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if alloc(mid).sum() > p_max:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return _enforce_budget(alloc(hi), p_max)

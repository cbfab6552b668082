"""Sufficient condition for a unique equilibrium, and its numerical certification.

The condition bounds the budget by ``min(xi1, xi2)``, built from extremal noise
levels and effective gains. Uniqueness follows when ``G(u) + G(u)^T`` is
negative definite on the joint feasible set, where ``G`` stacks the second
partials of each SCBS's utility. ``G`` is available in two flavours:

* ``analytic``: the true second derivatives of ``log(1 + SINR)``;
* ``paper-literal``: derived from the first derivative
  ``beta (I + s2) / (I + beta u + s2)`` used in the original uniqueness proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .game import GameSpec, _mismatch
from .network import PowerProfile, Scenario

NEGDEF_MARGIN = 1e-12


@dataclass(frozen=True)
class ExtremalConstants:
    sigma2_min: float
    sigma2_max: float
    beta_min: float
    beta_max: float
    k_max: int


@dataclass
class ConditionReport:
    sigma2_min: float
    sigma2_max: float
    beta_min: float
    beta_max: float
    k_max: int
    num_scbs: int
    xi1: float
    xi2: float
    p_max: float
    p_max_bound: float
    sigma_precondition: bool
    condition_holds: bool
    single_player: bool
    scope: str
    jacobian_mode: str = "paper-literal"
    negdef_samples: int = 0
    negdef_failures: int = 0
    negdef_max_eigenvalue: float = float("nan")
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in self.__dict__.items()}

    def table(self) -> str:
        rows = [
            ("sigma2_min", self.sigma2_min),
            ("sigma2_max", self.sigma2_max),
            ("beta_min", self.beta_min),
            ("beta_max", self.beta_max),
            ("K_max", self.k_max),
            ("M", self.num_scbs),
            ("xi1", self.xi1),
            ("xi2", self.xi2),
            ("p_max bound", self.p_max_bound),
            ("p_max", self.p_max),
            ("sigma2_max < 1", self.sigma_precondition),
        ]
        if self.negdef_samples:
            rows += [
                (f"negdef samples ({self.jacobian_mode})", self.negdef_samples),
                ("negdef failures", self.negdef_failures),
                ("max eigenvalue of G+G^T", self.negdef_max_eigenvalue),
            ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {_fmt(val)}" for name, val in rows]
        lines += [f"note: {n}" for n in self.notes]
        lines.append("condition holds" if self.condition_holds else "condition does not hold")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(v)
    return f"{v:.6g}"


def extremal_constants(scenario: Scenario, scope: str = "assigned") -> ExtremalConstants:
    """Extremal noise levels and effective gains, plus ``K_max``.

    ``scope="assigned"`` ranges over the (SCBS, user, subcarrier) triples that
    appear in the subcarrier maps; ``scope="all"`` over every triple.
    """
    lt = scenario.links
    if scope == "assigned":
        beta = lt.beta
        noise = lt.noise[np.unique(lt.slot)]
    elif scope == "all":
        beta = np.abs(scenario.channel_gain) ** 2 * (
            scenario.distances[:, :, None] ** (-scenario.path_loss_exponent)
        )
        noise = scenario.noise_var
    else:
        raise ValueError("scope must be 'assigned' or 'all'")
    k_max = int(np.bincount(lt.group).max())
    return ExtremalConstants(
        sigma2_min=float(noise.min()),
        sigma2_max=float(noise.max()),
        beta_min=float(beta.min()),
        beta_max=float(beta.max()),
        k_max=k_max,
    )


def xi_bounds(constants: ExtremalConstants, num_scbs: int) -> tuple[float, float]:
    """Budget bounds ``xi1``, ``xi2``. A single player gets ``(inf, inf)``."""
    c = constants
    M = num_scbs
    if M < 2:
        return math.inf, math.inf
    xi1 = c.beta_min * c.sigma2_min**3 / ((M - 1) * c.k_max * c.beta_max**3)
    xi2 = (1.0 - c.sigma2_max) / (M * c.beta_max)
    return xi1, xi2


def check_pmax_condition(scenario: Scenario, scope: str = "assigned") -> ConditionReport:
    c = extremal_constants(scenario, scope)
    M = scenario.num_scbs
    xi1, xi2 = xi_bounds(c, M)
    bound = min(xi1, xi2)
    pre = c.sigma2_max < 1
    notes = []
    if M < 2:
        notes.append("single player: condition vacuous")
    if not pre:
        notes.append("sigma2_max >= 1: normalize the noise to make the bound meaningful")
    return ConditionReport(
        sigma2_min=c.sigma2_min, sigma2_max=c.sigma2_max,
        beta_min=c.beta_min, beta_max=c.beta_max, k_max=c.k_max,
        num_scbs=M, xi1=xi1, xi2=xi2, p_max=scenario.p_max, p_max_bound=bound,
        sigma_precondition=pre,
        condition_holds=bool(pre and scenario.p_max < bound),
        single_player=M < 2, scope=scope, notes=notes,
    )


def suggest_pmax(scenario: Scenario, safety_fraction: float = 0.9, scope: str = "assigned") -> float:
    """A budget that satisfies the condition with room ``safety_fraction``."""
    if not 0 < safety_fraction < 1:
        raise ValueError("safety_fraction must lie strictly between 0 and 1")
    c = extremal_constants(scenario, scope)
    if c.sigma2_max >= 1:
        raise ValueError(
            f"sigma2_max = {c.sigma2_max:.3g} >= 1 makes the bound vacuous; "
            "use normalized noise (sigma2_max < 1)"
        )
    bound = min(xi_bounds(c, scenario.num_scbs))
    if not math.isfinite(bound):
        raise ValueError("single player: the condition puts no limit on p_max")
    return safety_fraction * bound


# -- second-derivative matrix ----------------------------------------------

def jacobian_flat(scenario: Scenario, spec: GameSpec, x: np.ndarray, mode: str = "analytic") -> np.ndarray:
    """Matrix of ``d^2 J_p(a) / du_a du_b`` over all links ``a``, ``b``."""
    lt = scenario.links
    den = lt.denominators(x)
    same = lt.slot[:, None] == lt.slot[None, :]
    bb = lt.beta[:, None] * lt.beta[None, :]
    d2 = den[:, None] ** 2
    if mode == "paper-literal":
        if spec.scheme == "proportional-fair":
            raise ValueError("paper-literal derivatives exist only for the rate-based schemes")
        own = lt.beta * x
        H = np.where(same, lt.beta[:, None] * bb * x[:, None] / d2, 0.0)
        np.fill_diagonal(H, -lt.beta**2 * (den - own) / den**2)
        return H
    if mode != "analytic":
        raise ValueError("mode must be 'analytic' or 'paper-literal'")
    H = np.where(same, -bb / d2, 0.0)
    if spec.scheme == "proportional-fair":
        rates = lt.group_rates(x)
        r = rates[lt.group]
        floored = r < spec.pf_rate_floor
        r_eff = np.maximum(r, spec.pf_rate_floor)
        own = lt.beta * x
        # dR_g(a)/du_b: own-group links give their rate slope, interferers in
        # the slot of any link of g(a) lower that link's rate
        dR_link = np.where(same, -bb * x[:, None] / (den[:, None] * (den - own)[:, None]), 0.0)
        np.fill_diagonal(dR_link, lt.beta / den)
        G = len(lt.group_player)
        onehot = np.zeros((G, lt.size))
        onehot[lt.group, np.arange(lt.size)] = 1.0
        dR_group = (onehot @ dR_link)[lt.group]  # row a: d R_g(a) / du_b
        slope = lt.beta / den
        H = H / r_eff[:, None] - np.where(
            floored[:, None], 0.0, slope[:, None] * dR_group / r_eff[:, None] ** 2
        )
    elif spec.has_cost and spec.smooth_delta is not None:
        eta = spec.eta_vector(scenario.num_scbs)
        diff = np.bincount(lt.group, weights=x, minlength=len(lt.group_player)) - lt.group_ubar
        curv = spec.smooth_delta**2 / (diff**2 + spec.smooth_delta**2) ** 1.5
        curv = np.where(lt.group_frequent, curv, 0.0)
        same_group = lt.group[:, None] == lt.group[None, :]
        H = H - np.where(same_group, (eta[lt.player] * curv[lt.group])[:, None], 0.0)
    return H


def jacobian_G(scenario: Scenario, spec: GameSpec, profile: PowerProfile, mode: str = "paper-literal") -> np.ndarray:
    """Stacked second partials of all utilities at ``profile``.

    Rows and columns follow the players' link order. The piecewise-linear
    mismatch cost contributes nothing away from its kink.
    """
    profile.check_shape(scenario)
    return jacobian_flat(scenario, spec, profile.flat, mode)


@dataclass
class NegDefResult:
    is_negdef: bool
    max_eigenvalue: float

    def __iter__(self):
        return iter((self.is_negdef, self.max_eigenvalue))

    def __bool__(self):
        return self.is_negdef


def negdef_check(G, margin: float = NEGDEF_MARGIN) -> NegDefResult:
    """Is ``G + G^T`` negative definite, i.e. its top eigenvalue below ``-margin``?"""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("negdef_check needs a square matrix")
    S = G + G.T
    top = float(np.linalg.eigvalsh(S)[-1])
    return NegDefResult(is_negdef=top < -margin, max_eigenvalue=top)


def scaled_negdef_check(G, margin: float = NEGDEF_MARGIN) -> NegDefResult:
    """Scale-free variant: test ``D^-1/2 (G + G^T) D^-1/2`` with ``D = |diag|``.

    The congruence preserves inertia (Sylvester), so the verdict is the same
    as for ``G + G^T`` in exact arithmetic, but it does not depend on the
    power units the gains and noise happen to be expressed in.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("scaled_negdef_check needs a square matrix")
    S = G + G.T
    d = np.abs(np.diag(S))
    if np.any(d == 0):
        return NegDefResult(False, float(np.linalg.eigvalsh(S)[-1]))
    s = 1.0 / np.sqrt(d)
    top = float(np.linalg.eigvalsh(S * s[:, None] * s[None, :])[-1])
    return NegDefResult(is_negdef=top < -margin, max_eigenvalue=top)


def diag_dominance_margin(scenario: Scenario, spec: GameSpec, profile: PowerProfile,
                          mode: str = "paper-literal") -> np.ndarray:
    """Row margins ``2|G_aa| - sum_{b != a} |G_ab + G_ba|``; all positive => negative definite."""
    G = jacobian_G(scenario, spec, profile, mode)
    S = G + G.T
    off = np.abs(S).sum(axis=1) - np.abs(np.diag(S))
    return 2 * np.abs(np.diag(G)) - off


@dataclass
class NegDefSampling:
    samples: int
    failures: int
    max_eigenvalue: float  # largest top eigenvalue of G+G^T seen
    scaled_max_eigenvalue: float  # same for the diagonally scaled matrix
    scaled_failures: int


def sample_negdef(scenario: Scenario, spec: GameSpec, num_samples: int = 100, seed: int = 0,
                  mode: str = "paper-literal", margin: float = NEGDEF_MARGIN) -> NegDefSampling:
    """Check ``G + G^T`` at uniformly sampled feasible profiles (evidence, not proof)."""
    from .equilibrium import random_profile

    rng = np.random.default_rng(seed)
    fails = scaled_fails = 0
    worst = worst_scaled = -np.inf
    for _ in range(num_samples):
        G = jacobian_G(scenario, spec, random_profile(scenario, rng), mode)
        raw = negdef_check(G, margin)
        scaled = scaled_negdef_check(G, margin)
        fails += not raw.is_negdef
        scaled_fails += not scaled.is_negdef
        worst = max(worst, raw.max_eigenvalue)
        worst_scaled = max(worst_scaled, scaled.max_eigenvalue)
    return NegDefSampling(num_samples, fails, worst, worst_scaled, scaled_fails)


def certify(scenario: Scenario, spec: GameSpec | None = None, num_samples: int = 100, seed: int = 0,
            mode: str = "paper-literal", scope: str = "assigned") -> ConditionReport:
    """Condition report plus sampled negative-definiteness evidence."""
    spec = spec or GameSpec()
    rep = check_pmax_condition(scenario, scope)
    if num_samples > 0:
        s = sample_negdef(scenario, spec, num_samples, seed, mode)
        rep.jacobian_mode = mode
        rep.negdef_samples = s.samples
        rep.negdef_failures = s.failures
        rep.negdef_max_eigenvalue = s.max_eigenvalue
        if s.failures and not s.scaled_failures:
            rep.notes.append(
                "raw eigenvalues are within the absolute margin of zero only because of the "
                "power units; the diagonally scaled matrix is negative definite at every sample"
            )
    return rep

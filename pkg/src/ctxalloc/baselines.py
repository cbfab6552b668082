"""Sum-rate and proportional-fair comparison schemes.

Both are played as noncooperative games with the same dynamics and solver
settings as the context-aware game, so differences come from the utilities
alone. Every result is also scored with the context-aware utility.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import SolveReport, SolverConfig, solve_psne
from .game import GameSpec, utilities
from .network import PowerProfile, Scenario


@dataclass
class BaselineResult:
    scheme: str
    report: SolveReport
    comparison_utilities: np.ndarray  # context-aware utility per SCBS at the equilibrium

    @property
    def mean_comparison_utility(self) -> float:
        return float(np.mean(self.comparison_utilities))


def solve_scheme(scenario: Scenario, scheme: str, eta: float = 2.0,
                 config: SolverConfig = SolverConfig(),
                 initial_profile: PowerProfile | None = None,
                 rate_floor: float = 1e-12) -> BaselineResult:
    """Solve the game for ``scheme`` and score it with the context-aware utility."""
    spec = GameSpec(scheme=scheme, eta=eta, pf_rate_floor=rate_floor)
    if scheme == "proportional-fair" and initial_profile is not None:
        if any(np.any(p <= 0) for p in initial_profile.powers):
            raise ValueError("proportional-fair needs a strictly positive starting profile")
    report = solve_psne(scenario, spec, initial_profile, config)
    scoring = GameSpec(scheme="context-aware", eta=eta)
    return BaselineResult(scheme, report, utilities(scenario, scoring, report.profile))


def solve_sumrate(scenario: Scenario, config: SolverConfig = SolverConfig(), eta: float = 2.0,
                  initial_profile: PowerProfile | None = None) -> BaselineResult:
    return solve_scheme(scenario, "sum-rate", eta, config, initial_profile)


def solve_pf(scenario: Scenario, config: SolverConfig = SolverConfig(), eta: float = 2.0,
             initial_profile: PowerProfile | None = None, rate_floor: float = 1e-12) -> BaselineResult:
    return solve_scheme(scenario, "proportional-fair", eta, config, initial_profile, rate_floor)


def solve_context_aware(scenario: Scenario, config: SolverConfig = SolverConfig(), eta: float = 2.0,
                        initial_profile: PowerProfile | None = None) -> BaselineResult:
    return solve_scheme(scenario, "context-aware", eta, config, initial_profile)

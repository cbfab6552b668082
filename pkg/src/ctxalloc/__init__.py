"""Context-aware downlink power allocation games for two-tier small cell networks."""
from .network import (
    DegenerateGeometryError,
    PowerProfile,
    Scenario,
    ScenarioError,
    build_scenario,
    effective_gain,
    rate,
    sinr,
)
from .game import GameSpec, cost, grad_utility, project_feasible, utilities, utility
from .equilibrium import (
    SolveReport,
    SolverConfig,
    solve_psne,
    step_dynamics,
    uniqueness_probe,
    verify_equilibrium,
)
from .theory import (
    ConditionReport,
    check_pmax_condition,
    diag_dominance_margin,
    extremal_constants,
    jacobian_G,
    negdef_check,
    suggest_pmax,
    xi_bounds,
)

__version__ = "0.1.0"

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctxalloc import (
    GameSpec,
    PowerProfile,
    SolverConfig,
    build_scenario,
    solve_psne,
    step_dynamics,
    uniqueness_probe,
    verify_equilibrium,
)
from ctxalloc.equilibrium import auto_steps, random_profile
from ctxalloc.theory import suggest_pmax
from conftest import random_game
from oracles import single_user_rate_optimum

seeds = st.integers(0, 2**32 - 1)


def bounded_instance(rng, M=3, N=3, frequent_prob=0.5):
    """Unit-scale game with the budget set by the uniqueness bound."""
    sc = random_game(rng, M=M, N=N, frequent_prob=frequent_prob)
    p = suggest_pmax(sc, 0.9)
    targets = [{j: float(rng.uniform(0, p / N)) for j in t} for t in sc.qos_target]
    return sc.replace(p_max=p, qos_target=targets)


def test_step_examples():
    sc = build_scenario([[1.0]], [1.0], p_max=1.0)
    out = step_dynamics(sc, GameSpec(), PowerProfile.zeros(sc), SolverConfig(step_size=0.1))
    assert out.powers[0][0] == pytest.approx(0.1)
    # no gradient anywhere: a zero-gain link stays put
    sc0 = build_scenario([[0.0]], [1.0], p_max=1.0)
    prof = PowerProfile(([0.3],))
    assert step_dynamics(sc0, GameSpec(scheme="sum-rate"), prof, SolverConfig(step_size=0.1)).powers[0][0] == 0.3


@given(seeds, st.sampled_from(["context-aware", "sum-rate", "proportional-fair"]))
def test_step_feasible(seed, scheme):
    rng = np.random.default_rng(seed)
    sc = random_game(rng, M=3, N=3)
    prof = random_profile(sc, rng, 1e-3)
    for step in (None, float(rng.uniform(0.01, 10))):
        out = step_dynamics(sc, GameSpec(scheme=scheme), prof, SolverConfig(step_size=step))
        assert out.is_feasible(sc.p_max, rtol=1e-12)


def test_single_link_full_budget():
    sc = build_scenario([[1.0]], [1.0], p_max=1.0)
    rep = solve_psne(sc, GameSpec(scheme="sum-rate"))
    assert rep.converged
    assert rep.profile.powers[0][0] == pytest.approx(1.0, abs=1e-12)


def test_kink_solution():
    sc = build_scenario([[1.0]], [1.0], p_max=1.0, qos_target=[{0: 0.5}])
    rep = solve_psne(sc, GameSpec(eta=2.0))
    assert rep.converged
    assert rep.profile.powers[0][0] == pytest.approx(0.5, abs=1e-12)
    # small eta: the rate slope wins past the target
    rep = solve_psne(sc, GameSpec(eta=0.2))
    assert rep.profile.powers[0][0] == pytest.approx(
        single_user_rate_optimum(1.0, 1.0, 1.0, ubar=0.5, eta=0.2), abs=1e-5)


def test_restart_from_solution():
    rng = np.random.default_rng(4)
    sc = bounded_instance(rng)
    rep = solve_psne(sc, GameSpec())
    again = solve_psne(sc, GameSpec(), rep.profile)
    assert again.iterations <= 1 and again.converged


def test_residual_reported_honestly():
    rng = np.random.default_rng(5)
    sc = random_game(rng, M=3, N=3)
    rep = solve_psne(sc, GameSpec(), config=SolverConfig(max_iterations=1))
    assert rep.converged == (rep.residual <= 1e-8)
    assert rep.residual >= 0


@given(seeds)
def test_solutions_verify(seed):
    rng = np.random.default_rng(seed)
    sc = bounded_instance(rng, M=2, N=2)
    spec = GameSpec(eta=float(rng.uniform(0.5, 3)))
    cfg = SolverConfig()
    rep = solve_psne(sc, spec, config=cfg)
    assert rep.converged
    v = verify_equilibrium(sc, spec, rep.profile, tol=10 * cfg.convergence_tol)
    assert v.is_equilibrium and v.oracle == "grid"


def test_verify_rejects_zero_profile():
    sc = build_scenario([[1.0]], [1.0], p_max=1.0)
    v = verify_equilibrium(sc, GameSpec(scheme="sum-rate"), PowerProfile.zeros(sc))
    assert not v.is_equilibrium
    assert v.max_improvement > 0.5


def test_verify_rejects_perturbation():
    rng = np.random.default_rng(8)
    sc = bounded_instance(rng, M=2, N=3)
    spec = GameSpec()
    rep = solve_psne(sc, spec)
    x = rep.profile.flat.copy()
    a = int(np.argmax(x))
    x[a] -= 0.1 * sc.p_max
    v = verify_equilibrium(sc, spec, PowerProfile.from_flat(sc, x))
    assert v.residual > 1e-7 and not v.is_equilibrium


def test_verify_uses_sampling_in_high_dimension():
    rng = np.random.default_rng(2)
    sc = random_game(rng, M=2, N=6)
    rep = solve_psne(sc, GameSpec())
    v = verify_equilibrium(sc, GameSpec(), rep.profile, samples=2000)
    assert v.oracle == "sampled"


def test_uniqueness_probe():
    rng = np.random.default_rng(11)
    sc = bounded_instance(rng)
    probe = uniqueness_probe(sc, GameSpec())
    assert probe.unique is True
    assert probe.relative_distance <= 1e-6
    single = build_scenario([[1.0, 0.5]], [1.0, 1.0], p_max=1.0)
    assert uniqueness_probe(single, GameSpec(scheme="sum-rate")).unique is True


def test_probe_records_huge_budget():
    rng = np.random.default_rng(12)
    sc = random_game(rng, M=3, N=3).with_p_max(1e3)
    probe = uniqueness_probe(sc, GameSpec(), SolverConfig(num_restarts=3))
    assert probe.unique in (True, False, None)
    assert len(probe.reports) == 3


def test_probe_indeterminate_on_nonconvergence():
    rng = np.random.default_rng(13)
    sc = bounded_instance(rng)
    probe = uniqueness_probe(sc, GameSpec(), SolverConfig(num_restarts=3, max_iterations=1))
    assert probe.unique is None


def test_determinism():
    rng = np.random.default_rng(14)
    sc = bounded_instance(rng)
    a = solve_psne(sc, GameSpec(scheme="proportional-fair"))
    b = solve_psne(sc, GameSpec(scheme="proportional-fair"))
    assert a.to_json() == b.to_json()


def test_convergence_rate_on_bounded_instances():
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        sc = bounded_instance(rng, M=int(rng.integers(2, 5)), N=int(rng.integers(1, 5)))
        ok += solve_psne(sc, GameSpec(eta=float(rng.uniform(0.5, 3)))).converged
    assert ok >= 99


def test_auto_steps_bound_scaled_jacobian():
    from ctxalloc.theory import jacobian_flat

    rng = np.random.default_rng(15)
    for _ in range(20):
        sc = random_game(rng, M=3, N=3)
        spec = GameSpec(scheme="sum-rate")
        d = auto_steps(sc, spec)
        x = random_profile(sc, rng).flat
        H = jacobian_flat(sc, spec, x)
        assert np.max(np.abs(d[:, None] * H).sum(axis=1)) <= 1 + 1e-12


def test_trace_csv():
    sc = build_scenario([[1.0]], [1.0], p_max=1.0, qos_target=[{0: 0.5}])
    rep = solve_psne(sc, GameSpec(), config=SolverConfig(record_trace=True))
    lines = rep.trace_csv().splitlines()
    assert lines[0] == "iteration,delta,residual"
    assert len(lines) == rep.iterations + 1


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(step_size=0.0)
    with pytest.raises(ValueError):
        SolverConfig(convergence_tol=-1)


def test_pf_rejects_zero_start():
    sc = build_scenario([[1.0, 1.0]], [1.0, 1.0], p_max=1.0)
    with pytest.raises(ValueError):
        solve_psne(sc, GameSpec(scheme="proportional-fair"), PowerProfile(([0.0, 0.5],)))


def test_infeasible_start_is_projected():
    sc = build_scenario([[1.0, 1.0]], [1.0, 1.0], p_max=1.0)
    rep = solve_psne(sc, GameSpec(scheme="sum-rate"), PowerProfile(([3.0, 3.0],)))
    assert rep.converged and rep.profile.is_feasible(1.0, rtol=1e-12)


def test_multi_subcarrier_solve():
    # one user served on two subcarriers by each of two SCBSs
    beta = np.array([[[1.0, 0.5]], [[0.4, 1.2]]])
    sc = build_scenario(beta, np.full((1, 2), 0.5), p_max=0.05,
                        subcarrier_map=[[(0, 0), (1, 0)], [(0, 0), (1, 0)]],
                        qos_target=[{0: 0.02}, {}])
    spec = GameSpec(eta=3.0)
    rep = solve_psne(sc, spec)
    assert rep.converged
    assert rep.profile.powers[0].sum() == pytest.approx(0.02, abs=1e-9)
    assert verify_equilibrium(sc, spec, rep.profile).is_equilibrium

import numpy as np
import pytest

from ctxalloc import check_pmax_condition
from ctxalloc.experiments import (
    ExperimentPlan,
    SweepPoint,
    fig1_plan,
    fig2_plan,
    gen_scenario,
    run_point,
    sweep_eta,
    sweep_frequent,
)


def small(**kw):
    base = dict(num_scbs=3, n_frequent=2, n_occasional=2, runs=4)
    base.update(kw)
    return ExperimentPlan(**base)


def test_gen_scenario_layout():
    plan = ExperimentPlan()
    sc = gen_scenario(plan, SweepPoint(6, 5, 2.0), 0)
    assert (sc.num_scbs, sc.num_ues, sc.num_subcarriers) == (5, 11, 11)
    assert np.all((sc.positions_scbs >= 0) & (sc.positions_scbs <= 500))
    assert np.all((sc.positions_ues >= 0) & (sc.positions_ues <= 500))
    for i in range(5):
        assert sc.served_users(i) == list(range(11))
        assert sc.frequent_users(i) == list(range(6))
        assert all(0 <= u <= sc.p_max / 11 for u in sc.qos_target[i].values())
        assert [k for k, j in sc.subcarrier_map[i]] == [j for k, j in sc.subcarrier_map[i]]
    rep = check_pmax_condition(sc)
    assert rep.condition_holds and rep.sigma2_max == 0.5
    assert sc.p_max == pytest.approx(0.9 * rep.p_max_bound)


def test_gen_scenario_deterministic():
    plan = ExperimentPlan()
    a = gen_scenario(plan, SweepPoint(3, 5, 2.0), 7)
    b = gen_scenario(plan, SweepPoint(3, 5, 2.0), 7)
    assert a.to_json() == b.to_json()
    assert gen_scenario(plan, SweepPoint(3, 5, 2.0), 8).to_json() != a.to_json()
    # eta does not shape the scenario
    assert gen_scenario(plan, SweepPoint(3, 5, 9.0), 7).to_json() == a.to_json()


def test_fixed_budget_and_physical_noise():
    sc = gen_scenario(small(p_max_mode="fixed", p_max_value=3.0))
    assert sc.p_max == 3.0
    phys = gen_scenario(small(noise_mode="physical", p_max_mode="fixed", p_max_value=0.1))
    assert phys.noise_var.max() == pytest.approx(1e-14)


def test_single_run_mean():
    plan = small(runs=1)
    pr = run_point(plan)
    for s, st in pr.stats.items():
        assert st.mean == pr.samples[s][0] and st.stderr == 0.0 and st.runs == 1


def test_zero_eta_point():
    pr = run_point(small(eta=0.0))
    assert pr.stats["context-aware"].mean == pr.stats["sum-rate"].mean


def test_counts_paired():
    pr = run_point(small())
    counts = {(st.runs, st.converged_runs) for st in pr.stats.values()}
    assert len(counts) == 1
    assert all(len(v) == pr.stats["sum-rate"].converged_runs for v in pr.samples.values())


def test_empty_sweep_rejected():
    with pytest.raises(ValueError):
        sweep_frequent(fig1_plan(sweep_values=()))


def test_plans():
    p1, p2 = fig1_plan(), fig2_plan()
    assert [p.n_frequent for p in p1.points()] == list(range(1, 11))
    assert {(p.n_occasional, p.eta) for p in p1.points()} == {(5, 2.0)}
    assert [p.eta for p in p2.points()] == [float(v) for v in range(1, 31)]
    assert {(p.n_frequent, p.n_occasional) for p in p2.points()} == {(6, 2)}
    assert p1.runs >= 200 and p1.area_side == 500 and p1.alpha == 3


def test_sweep_csv_and_determinism():
    plan = fig2_plan(num_scbs=3, runs=3, sweep_values=(0.5, 1.0, 4.0))
    a = sweep_eta(plan).to_csv()
    assert a == sweep_eta(plan).to_csv()
    lines = a.splitlines()
    assert lines[0] == "sweep_var,value,scheme,mean_utility,stderr,runs,converged_runs"
    assert len(lines) == 1 + 3 * 3
    assert lines[1].startswith("eta,0.5,context-aware,")


def test_parallel_matches_serial():
    plan = fig1_plan(num_scbs=3, runs=4, sweep_values=(1, 2))
    assert sweep_frequent(plan).to_csv() == sweep_frequent(plan.__class__(**{**plan.__dict__, "workers": 2})).to_csv()


def test_eta_sweep_matches_run_point():
    plan = fig2_plan(num_scbs=3, runs=3, sweep_values=(1.0, 3.0))
    res = sweep_eta(plan)
    for pr in res.points:
        single = run_point(plan, pr.point)
        for s in pr.stats:
            assert single.stats[s].mean == pr.stats[s].mean


def test_plan_validation():
    with pytest.raises(ValueError):
        ExperimentPlan(runs=0)
    with pytest.raises(ValueError):
        ExperimentPlan(noise_value=1.5)
    with pytest.raises(ValueError):
        ExperimentPlan(sweep="alpha")

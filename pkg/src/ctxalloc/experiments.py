"""Seeded Monte Carlo comparisons of the three allocation schemes.

Scenarios follow the worst-case interference layout: every SCBS serves every
user, user ``j`` on subcarrier ``j``, with SCBSs and UEs dropped uniformly in a
square. Users ``0 .. n_frequent-1`` are frequent for every SCBS.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import solve_scheme
from .equilibrium import SolverConfig
from .game import SCHEMES, GameSpec, utilities_flat
from .network import Scenario
from .theory import suggest_pmax

logger = logging.getLogger(__name__)

NOISE_DBM = -110.0
SWEEP_DEFAULTS = {"frequent": (1, 10), "eta": (1, 30)}


class ConvergenceFailure(RuntimeError):
    """Too many runs at a sweep point failed to converge."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SweepPoint:
    n_frequent: int
    n_occasional: int
    eta: float


@dataclass(frozen=True)
class ExperimentPlan:
    area_side: float = 500.0
    alpha: float = 3.0
    noise_mode: str = "normalized"  # or "physical"
    noise_value: float | None = None  # normalized sigma^2 (default 0.5) or dBm (default -110)
    num_scbs: int = 5
    n_frequent: int = 6
    n_occasional: int = 5
    num_subcarriers: int | None = None  # defaults to the number of users
    eta: float = 2.0
    runs: int = 200
    base_seed: int = 0
    p_max_mode: str = "suggest"  # or "fixed"
    p_max_value: float = 0.9  # safety fraction, or the budget itself when fixed
    fading: str = "rayleigh"  # or "constant"
    sweep: str | None = None  # "frequent" or "eta"
    sweep_values: tuple = ()
    solver: SolverConfig = field(default_factory=SolverConfig)
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.noise_mode not in ("normalized", "physical"):
            raise ValueError("noise_mode must be 'normalized' or 'physical'")
        if self.p_max_mode not in ("suggest", "fixed"):
            raise ValueError("p_max_mode must be 'suggest' or 'fixed'")
        if self.fading not in ("rayleigh", "constant"):
            raise ValueError("fading must be 'rayleigh' or 'constant'")
        if self.sweep not in (None, "frequent", "eta"):
            raise ValueError("sweep must be 'frequent' or 'eta'")
        if self.num_scbs < 1 or self.n_frequent < 0 or self.n_occasional < 0:
            raise ValueError("counts must be nonnegative (and at least one SCBS)")
        if self.noise_mode == "normalized" and not 0 < self.sigma2 < 1:
            raise ValueError("normalized noise must lie in (0, 1)")

    @property
    def sigma2(self) -> float:
        if self.noise_mode == "normalized":
            return 0.5 if self.noise_value is None else float(self.noise_value)
        return dbm_to_watts(NOISE_DBM if self.noise_value is None else self.noise_value)

    @property
    def power_reference(self) -> float:
        """Watts per scenario power unit."""
        if self.noise_mode == "normalized":
            return dbm_to_watts(NOISE_DBM) / self.sigma2
        return 1.0

    def base_point(self) -> SweepPoint:
        return SweepPoint(self.n_frequent, self.n_occasional, self.eta)

    def points(self) -> list[SweepPoint]:
        if self.sweep is None:
            raise ValueError("plan has no sweep variable")
        if len(self.sweep_values) == 0:
            raise ValueError("sweep range is empty")
        base = self.base_point()
        if self.sweep == "frequent":
            return [replace(base, n_frequent=int(v)) for v in self.sweep_values]
        return [replace(base, eta=float(v)) for v in self.sweep_values]


def fig1_plan(**overrides) -> ExperimentPlan:
    """Utility vs number of frequent users: M=5, 5 occasional, eta=2."""
    kw = dict(num_scbs=5, n_occasional=5, eta=2.0, sweep="frequent",
              sweep_values=tuple(range(1, 11)))
    kw.update(overrides)
    return ExperimentPlan(**kw)


def fig2_plan(**overrides) -> ExperimentPlan:
    """Utility vs tradeoff constant: M=5, 6 frequent, 2 occasional."""
    kw = dict(num_scbs=5, n_frequent=6, n_occasional=2, sweep="eta",
              sweep_values=tuple(float(v) for v in range(1, 31)))
    kw.update(overrides)
    return ExperimentPlan(**kw)


def scenario_seed(plan: ExperimentPlan, point: SweepPoint, run_index: int) -> np.random.SeedSequence:
    # eta does not shape the scenario, so it is left out of the key: every eta
    # value sees the same draws (common random numbers)
    return np.random.SeedSequence(
        [plan.base_seed, plan.num_scbs, point.n_frequent, point.n_occasional, run_index]
    )


def gen_scenario(plan: ExperimentPlan, point: SweepPoint | None = None, run_index: int = 0) -> Scenario:
    point = point or plan.base_point()
    ss = scenario_seed(plan, point, run_index)
    rng = np.random.default_rng(ss)
    M = plan.num_scbs
    N = point.n_frequent + point.n_occasional
    if N < 1:
        raise ValueError("scenario needs at least one user")
    K = plan.num_subcarriers or N
    if K < N:
        raise ValueError("num_subcarriers must be >= number of users")
    pos_bs = rng.uniform(0.0, plan.area_side, size=(M, 2))
    pos_ue = rng.uniform(0.0, plan.area_side, size=(N, 2))
    if plan.fading == "rayleigh":
        h = np.sqrt(rng.exponential(1.0, size=(M, N, K)))
    else:
        h = np.ones((M, N, K))
    noise = np.full((N, K), plan.sigma2)
    links = [[(j, j) for j in range(N)] for _ in range(M)]
    sc = Scenario(
        positions_scbs=pos_bs,
        positions_ues=pos_ue,
        path_loss_exponent=plan.alpha,
        channel_gain=h,
        noise_var=noise,
        subcarrier_map=links,
        qos_target=[{} for _ in range(M)],
        p_max=1.0,
        rng_seed=int(ss.generate_state(1, dtype=np.uint64)[0]),
    )
    if plan.p_max_mode == "suggest":
        p_max = suggest_pmax(sc, plan.p_max_value)
    else:
        p_max = plan.p_max_value
    ubar = rng.uniform(0.0, p_max / N, size=(M, point.n_frequent))
    targets = [{j: float(ubar[i, j]) for j in range(point.n_frequent)} for i in range(M)]
    return sc.replace(p_max=p_max, qos_target=targets)


# -- Monte Carlo ------------------------------------------------------------

@dataclass
class RunOutcome:
    """Per-SCBS average context-aware utility of each scheme's equilibrium, one run."""

    run_index: int
    values: dict  # scheme -> mean utility per SCBS (context-aware utility)
    converged: dict  # scheme -> bool


def _run_single(args) -> list[RunOutcome]:
    """One scenario, every eta in ``etas``. Baselines do not depend on eta, so
    they are solved once and re-scored per eta."""
    plan, point, etas, run_index = args
    sc = gen_scenario(plan, point, run_index)
    lt = sc.links
    scoring = {}
    base = {}
    for scheme in ("sum-rate", "proportional-fair"):
        base[scheme] = solve_scheme(sc, scheme, eta=0.0, config=plan.solver).report
    out = []
    for eta in etas:
        ca = solve_scheme(sc, "context-aware", eta=eta, config=plan.solver).report
        reports = {"context-aware": ca, **base}
        eta_vec = np.full(sc.num_scbs, float(eta))
        spec = scoring.setdefault(eta, GameSpec(scheme="context-aware", eta=float(eta)))
        values = {s: float(np.mean(utilities_flat(lt, spec, r.profile.flat, eta_vec)))
                  for s, r in reports.items()}
        out.append(RunOutcome(run_index, values, {s: r.converged for s, r in reports.items()}))
    return out


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class SchemeStats:
    mean: float
    stderr: float
    runs: int
    converged_runs: int


@dataclass
class PointResult:
    point: SweepPoint
    stats: dict  # scheme -> SchemeStats
    samples: dict  # scheme -> per-run values (converged runs only, paired)

    def advantage(self, scheme: str, over: str) -> tuple[float, float]:
        """Mean and standard error of the paired difference ``scheme - over``."""
        d = np.asarray(self.samples[scheme]) - np.asarray(self.samples[over])
        return _mean_stderr(d)


def _mean_stderr(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(np.mean(v)), se


def _aggregate(point: SweepPoint, outcomes: list[RunOutcome], runs: int) -> PointResult:
    ok = [o for o in outcomes if all(o.converged.values())]
    failed = runs - len(ok)
    if failed > runs / 2:
        raise ConvergenceFailure(f"{failed}/{runs} runs failed to converge at {point}")
    if failed:
        logger.warning("%d/%d runs excluded at %s (non-convergence)", failed, runs, point)
    stats, samples = {}, {}
    for s in SCHEMES:
        vals = [o.values[s] for o in ok]
        m, se = _mean_stderr(vals)
        stats[s] = SchemeStats(m, se, runs, len(ok))
        samples[s] = vals
    return PointResult(point, stats, samples)


def run_point(plan: ExperimentPlan, point: SweepPoint | None = None) -> PointResult:
    point = point or plan.base_point()
    jobs = [(plan, point, (point.eta,), r) for r in range(plan.runs)]
    outcomes = [o[0] for o in _map(_run_single, jobs, plan.workers)]
    return _aggregate(point, outcomes, plan.runs)


@dataclass
class SweepResult:
    sweep_var: str
    points: list  # PointResult per sweep value, in order

    def values(self) -> list:
        key = "n_frequent" if self.sweep_var == "frequent" else "eta"
        return [getattr(p.point, key) for p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sweep_var", "value", "scheme", "mean_utility", "stderr", "runs", "converged_runs"])
        for value, pr in zip(self.values(), self.points):
            for s in SCHEMES:
                st = pr.stats[s]
                w.writerow([self.sweep_var, f"{value:.9g}", s, f"{st.mean:.9g}",
                            f"{st.stderr:.9g}", st.runs, st.converged_runs])
        return buf.getvalue()


def sweep_frequent(plan: ExperimentPlan) -> SweepResult:
    plan = plan if plan.sweep == "frequent" else replace(plan, sweep="frequent")
    return SweepResult("frequent", [run_point(plan, p) for p in plan.points()])


def sweep_eta(plan: ExperimentPlan) -> SweepResult:
    """All eta values share each run's scenario and baseline solves."""
    plan = plan if plan.sweep == "eta" else replace(plan, sweep="eta")
    points = plan.points()
    etas = tuple(p.eta for p in points)
    base = plan.base_point()
    jobs = [(plan, base, etas, r) for r in range(plan.runs)]
    per_run = _map(_run_single, jobs, plan.workers)
    results = []
    for k, p in enumerate(points):
        results.append(_aggregate(p, [outs[k] for outs in per_run], plan.runs))
    return SweepResult("eta", results)


PLOT_SCRIPT = '''\
"""Plot a sweep CSV: mean utility per SCBS with one-standard-error bars."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1]
out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"
series = defaultdict(lambda: ([], [], []))
var = None
with open(path) as fh:
    for row in csv.DictReader(fh):
        var = row["sweep_var"]
        xs, ys, es = series[row["scheme"]]
        xs.append(float(row["value"]))
        ys.append(float(row["mean_utility"]))
        es.append(float(row["stderr"]))
for scheme, (xs, ys, es) in series.items():
    plt.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=scheme)
plt.xlabel("number of frequent users" if var == "frequent" else "tradeoff constant eta")
plt.ylabel("average utility per SCBS")
plt.legend()
plt.grid(alpha=0.3)
plt.savefig(out, dpi=150, bbox_inches="tight")
'''

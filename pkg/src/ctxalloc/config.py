"""Run configuration: a flat JSON document of named settings.

Every key is optional. Unknown keys and invalid values raise
:class:`ConfigError` naming the key. Defaults:

=============  ================  ===============================================
key            default           meaning
=============  ================  ===============================================
m              5                 number of SCBSs
n_frequent     null -> 6         frequent users (swept by ``sweep-frequent``)
n_occasional   null -> 5 / 2     occasional users (2 for ``sweep-eta``)
k              null -> N         subcarriers, must be >= number of users
area_m         500               side of the square deployment area, meters
alpha          3                 path-loss exponent
noise_mode     "normalized"      "normalized" or "physical"
noise_value    null              normalized sigma^2 (0.5) or noise in dBm (-110)
p_max_mode     "suggest"         "suggest" (fraction of the bound) or "fixed"
p_max_value    0.9               safety fraction, or the budget when fixed
eta            2                 tradeoff constant, > 0
scheme         "context-aware"   also "sum-rate", "proportional-fair"
step_size      null              null picks per-link steps automatically
max_iters      100000            iteration cap per solve
tol            1e-8              convergence tolerance (units of p_max)
restarts       10                restarts for the uniqueness probe
runs           200               Monte Carlo runs per sweep point
seed           0                 base seed
sweep          null              "frequent" or "eta"
sweep_range    null              [start, stop] or [start, stop, step], inclusive
=============  ================  ===============================================
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .equilibrium import SolverConfig
from .experiments import SWEEP_DEFAULTS, ExperimentPlan
from .game import SCHEMES


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    m: int = 5
    n_frequent: int | None = None
    n_occasional: int | None = None
    k: int | None = None
    area_m: float = 500.0
    alpha: float = 3.0
    noise_mode: str = "normalized"
    noise_value: float | None = None
    p_max_mode: str = "suggest"
    p_max_value: float = 0.9
    eta: float = 2.0
    scheme: str = "context-aware"
    step_size: float | None = None
    max_iters: int = 100_000
    tol: float = 1e-8
    restarts: int = 10
    runs: int = 200
    seed: int = 0
    sweep: str | None = None
    sweep_range: tuple | None = None

    # -- conversions --------------------------------------------------------
    def solver(self) -> SolverConfig:
        return SolverConfig(
            step_size=self.step_size,
            max_iterations=self.max_iters,
            convergence_tol=self.tol,
            num_restarts=self.restarts,
            restart_seed=self.seed,
        )

    def plan(self, sweep: str | None = None, workers: int = 1) -> ExperimentPlan:
        sweep = sweep or self.sweep
        n_occ = self.n_occasional
        if n_occ is None:
            n_occ = 2 if sweep == "eta" else 5
        values = ()
        if sweep is not None:
            own = self.sweep_range is not None and self.sweep in (None, sweep)
            rng = self.sweep_range if own else SWEEP_DEFAULTS[sweep]
            values = sweep_values(rng)
            if sweep == "frequent":
                if any(v < 0 or not float(v).is_integer() for v in values):
                    raise ConfigError("sweep_range", "frequent-user counts must be nonnegative integers")
                values = tuple(int(v) for v in values)
            elif any(v <= 0 for v in values):
                raise ConfigError("sweep_range", "eta values must be > 0")
        return ExperimentPlan(
            area_side=self.area_m,
            alpha=self.alpha,
            noise_mode=self.noise_mode,
            noise_value=self.noise_value,
            num_scbs=self.m,
            n_frequent=6 if self.n_frequent is None else self.n_frequent,
            n_occasional=n_occ,
            num_subcarriers=self.k,
            eta=self.eta,
            runs=self.runs,
            base_seed=self.seed,
            p_max_mode=self.p_max_mode,
            p_max_value=self.p_max_value,
            sweep=sweep,
            sweep_values=values,
            solver=self.solver(),
            workers=workers,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["sweep_range"] is not None:
            d["sweep_range"] = list(d["sweep_range"])
        return d


def sweep_values(rng) -> tuple:
    start, stop = rng[0], rng[1]
    step = rng[2] if len(rng) > 2 else 1
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(float(v) for v in start + step * np.arange(count))


_INT = {"m", "n_frequent", "n_occasional", "k", "max_iters", "restarts", "runs", "seed"}
_FLOAT = {"area_m", "alpha", "noise_value", "p_max_value", "eta", "step_size", "tol"}
_NULLABLE = {"n_frequent", "n_occasional", "k", "noise_value", "step_size", "sweep", "sweep_range"}
_CHOICES = {
    "noise_mode": ("normalized", "physical"),
    "p_max_mode": ("suggest", "fixed"),
    "scheme": SCHEMES,
    "sweep": ("frequent", "eta"),
}


def _check_type(key, value):
    if value is None:
        if key not in _NULLABLE:
            raise ConfigError(key, "may not be null")
        return None
    if key in _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if key in _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return float(value)
    if key in _CHOICES:
        if value not in _CHOICES[key]:
            raise ConfigError(key, f"expected one of {list(_CHOICES[key])}, got {value!r}")
        return value
    if key == "sweep_range":
        if (not isinstance(value, (list, tuple)) or len(value) not in (2, 3)
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ConfigError(key, "expected [start, stop] or [start, stop, step]")
        return tuple(value)
    raise ConfigError(key, "unknown key")


def _check_constraints(c: RunConfig):
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(key, msg)

    need(c.m >= 1, "m", "must be >= 1")
    need(c.n_frequent is None or c.n_frequent >= 0, "n_frequent", "must be >= 0")
    need(c.n_occasional is None or c.n_occasional >= 0, "n_occasional", "must be >= 0")
    need(c.k is None or c.k >= 1, "k", "must be >= 1")
    need(c.area_m > 0, "area_m", "must be > 0")
    need(c.alpha > 0, "alpha", "must be > 0")
    if c.noise_mode == "normalized" and c.noise_value is not None:
        need(0 < c.noise_value < 1, "noise_value", "normalized noise must lie in (0, 1)")
    if c.p_max_mode == "suggest":
        need(0 < c.p_max_value < 1, "p_max_value", "safety fraction must lie in (0, 1)")
    else:
        need(c.p_max_value > 0, "p_max_value", "budget must be > 0")
    need(c.eta > 0, "eta", "must be > 0")
    need(c.step_size is None or c.step_size > 0, "step_size", "must be > 0")
    need(c.max_iters >= 1, "max_iters", "must be >= 1")
    need(c.tol > 0, "tol", "must be > 0")
    need(c.restarts >= 1, "restarts", "must be >= 1")
    need(c.runs >= 1, "runs", "must be >= 1")
    need(c.seed >= 0, "seed", "must be >= 0")
    if c.sweep_range is not None:
        start, stop = c.sweep_range[0], c.sweep_range[1]
        step = c.sweep_range[2] if len(c.sweep_range) > 2 else 1
        need(step > 0, "sweep_range", "step must be > 0")
        need(start <= stop, "sweep_range", "range is empty")
        if c.sweep == "frequent":
            need(start >= 0 and all(float(v).is_integer() for v in c.sweep_range),
                 "sweep_range", "frequent-user counts must be nonnegative integers")
        if c.sweep == "eta":
            need(start > 0, "sweep_range", "eta values must be > 0")


def parse_config(document: str | dict | None) -> RunConfig:
    """Validate a JSON document (or an already-decoded dict) into a :class:`RunConfig`."""
    if document is None:
        data = {}
    elif isinstance(document, dict):
        data = document
    else:
        text = document.strip()
        try:
            data = json.loads(text) if text else {}
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError("<document>", "expected a JSON object")
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(key, "unknown key")
        values[key] = _check_type(key, value)
    cfg = RunConfig(**values)
    _check_constraints(cfg)
    return cfg


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"

"""Command-line front end.

Exit codes: 0 success, 1 failed self-test, 2 configuration error,
3 I/O error (missing or unreadable files), 4 solver non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .baselines import solve_scheme
from .config import ConfigError, RunConfig, parse_config
from .equilibrium import uniqueness_probe, verify_equilibrium
from .experiments import PLOT_SCRIPT, ConvergenceFailure, gen_scenario, sweep_eta, sweep_frequent
from .game import SCHEMES, GameSpec
from .network import Scenario, ScenarioError
from .theory import certify
from .validation import self_test

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_NONCONVERGED = 0, 1, 2, 3, 4


class IOFailure(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror}") from None


def _load_config(path: str | None) -> RunConfig:
    return parse_config(_read(path) if path else None)


def _load_scenario(path: str) -> Scenario:
    text = _read(path)
    try:
        return Scenario.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise IOFailure(f"{path} is not a valid scenario file: {exc}") from None


def cmd_gen(args) -> int:
    cfg = _load_config(args.config)
    sc = gen_scenario(cfg.plan(), run_index=args.run_index)
    _write(args.output, sc.to_json() + "\n")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    sc = _load_scenario(args.scenario)
    scheme = args.scheme or cfg.scheme
    solver = cfg.solver()
    if args.trace:
        from dataclasses import replace

        solver = replace(solver, record_trace=True)
    res = solve_scheme(sc, scheme, eta=cfg.eta, config=solver)
    rep = res.report
    if args.output:
        d = rep.to_dict()
        d["comparison_utilities"] = [float(v) for v in res.comparison_utilities]
        _write(args.output, json.dumps(d, indent=1, sort_keys=True) + "\n")
    if args.trace:
        _write(args.trace, rep.trace_csv())
    print(f"scheme {scheme}: converged={rep.converged} iterations={rep.iterations} "
          f"residual={rep.residual:.3g}")
    print("utilities: " + " ".join(f"{v:.6g}" for v in rep.utilities))
    if args.verify:
        v = verify_equilibrium(sc, GameSpec(scheme=scheme, eta=cfg.eta), rep.profile,
                               tol=10 * cfg.tol, config=solver)
        print(f"verified={v.is_equilibrium} (oracle {v.oracle}, best unilateral gain "
              f"{v.max_improvement:.3g})")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_check(args) -> int:
    cfg = _load_config(args.config)
    sc = _load_scenario(args.scenario)
    rep = certify(sc, GameSpec(eta=cfg.eta), num_samples=args.samples, seed=cfg.seed,
                  mode=args.mode, scope=args.scope)
    print(rep.table())
    if args.json:
        _write(args.json, json.dumps(rep.to_dict(), indent=1, sort_keys=True) + "\n")
    if args.probe:
        probe = uniqueness_probe(sc, GameSpec(scheme=cfg.scheme, eta=cfg.eta), cfg.solver())
        verdict = {True: "unique", False: "multiple limits", None: "indeterminate"}[probe.unique]
        print(f"uniqueness probe ({cfg.restarts} restarts): {verdict}, "
              f"max distance {probe.relative_distance:.3g} p_max")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    sc = _load_scenario(args.scenario)
    print(f"{'scheme':<18} {'converged':>9} {'iters':>6} {'utility/SCBS':>14} {'sum-rate':>12}")
    ok = True
    for scheme in SCHEMES:
        res = solve_scheme(sc, scheme, eta=cfg.eta, config=cfg.solver())
        rates = sc.links.group_rates(res.report.profile.flat).sum() / sc.num_scbs
        ok &= res.report.converged
        print(f"{scheme:<18} {str(res.report.converged):>9} {res.report.iterations:>6} "
              f"{res.mean_comparison_utility:>14.6g} {rates:>12.6g}")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _sweep(args, which: str) -> int:
    cfg = _load_config(args.config)
    plan = cfg.plan(sweep=which, workers=args.workers)
    try:
        result = sweep_frequent(plan) if which == "frequent" else sweep_eta(plan)
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    _write(args.output, result.to_csv())
    if args.plot_script:
        _write(args.plot_script, PLOT_SCRIPT)
    return EXIT_OK


def cmd_validate(args) -> int:
    res = self_test(points=args.points, hessian_points=args.hessian_points, seed=args.seed)
    print(f"gradient: {res.points} points, max relative error {res.max_gradient_error:.3g} "
          f"(tolerance {res.gradient_tol:g})")
    print(f"hessian: {res.hessian_points} points, max relative error {res.max_hessian_error:.3g} "
          f"(tolerance {res.hessian_tol:g})")
    print("self-test passed" if res.passed else "self-test FAILED")
    return EXIT_OK if res.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxalloc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", help="JSON run configuration")
        return sp

    sp = with_config(sub.add_parser("gen", help="generate a scenario file"))
    sp.add_argument("--run-index", type=int, default=0)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_gen)

    sp = with_config(sub.add_parser("solve", help="solve one scheme on a scenario"))
    sp.add_argument("scenario")
    sp.add_argument("--scheme", choices=SCHEMES)
    sp.add_argument("-o", "--output", help="write the SolveReport as JSON")
    sp.add_argument("--trace", help="write the iteration trace as CSV")
    sp.add_argument("--verify", action="store_true", help="run the equilibrium oracle too")
    sp.set_defaults(func=cmd_solve)

    sp = with_config(sub.add_parser("check", help="evaluate the uniqueness condition"))
    sp.add_argument("scenario")
    sp.add_argument("--samples", type=int, default=100, help="sampled profiles for G+G^T")
    sp.add_argument("--mode", choices=("paper-literal", "analytic"), default="paper-literal")
    sp.add_argument("--scope", choices=("assigned", "all"), default="assigned")
    sp.add_argument("--json", help="also write the report as JSON")
    sp.add_argument("--probe", action="store_true", help="run the multi-start uniqueness probe")
    sp.set_defaults(func=cmd_check)

    sp = with_config(sub.add_parser("compare", help="solve all three schemes on a scenario"))
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_compare)

    for name, which in (("sweep-frequent", "frequent"), ("sweep-eta", "eta")):
        sp = with_config(sub.add_parser(name, help=f"Monte Carlo sweep over {which}"))
        sp.add_argument("-o", "--output", help="CSV path (default stdout)")
        sp.add_argument("--plot-script", help="also write a matplotlib script for the CSV")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        sp.set_defaults(func=lambda a, w=which: _sweep(a, w))

    sp = sub.add_parser("validate", help="finite-difference self-test of the derivatives")
    sp.add_argument("--points", type=int, default=1000)
    sp.add_argument("--hessian-points", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_validate)
    return p


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()

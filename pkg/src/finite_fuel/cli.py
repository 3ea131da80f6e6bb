"""Command-line front end: ``fuel <subcommand> --config PATH``.

Exit status is 0 when every requested verdict passes, 2 on a configuration or
model error and 3 when a verdict fails.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

from .base_capacity import default_offset_grid, quadratic_offset_c
from .config import ConfigError, ScenarioConfig, load_config
from .dp import (build_lattice, dp_solve, fuel_levels_on, make_fuel_grid, oracle_gap)
from .errors import FuelError
from .estimate import MonteCarlo
from .functionals import kkt_report, realized_value
from .io import write_json, write_metadata
from .paths import make_grid, write_csv
from .scenarios import realize

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3
COMMANDS = ("simulate", "verify-kkt", "solve-dp", "calibrate-c", "compare")


def _setup(cfg: ScenarioConfig) -> dict:
    s = cfg.scenario
    return {"scenario": s.tag, "seed": cfg.seed, "n_paths": cfg.n_paths, "perturb": cfg.perturb,
            "monitoring": cfg.rule.monitoring, "delta": s.delta, "y": list(s.y),
            "alphas": list(s.alphas), "t_max": s.grid.t_max, "n_steps": s.grid.n_steps}


class _Run:
    def __init__(self, cfg: ScenarioConfig, threads):
        self.cfg = cfg
        self.threads = threads
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def json(self, name: str, obj) -> None:
        if "json" in self.cfg.formats:
            write_json(self.out / name, obj)
            self.files.append(name)

    def csv(self, name: str, nodes, values) -> None:
        if "csv" in self.cfg.formats:
            write_csv(self.out / name, nodes, values)
            self.files.append(name)


def _simulate(run: _Run):
    cfg = run.cfg
    real = realize(cfg.scenario, cfg.rule, cfg.n_paths, cfg.seed, run.threads)
    plan = real.plan
    nodes = plan.grid.nodes
    if plan.n_firms == 1:
        run.csv("policy.csv", nodes, plan.values[0])
    else:
        run.csv("policy.csv", nodes, plan.aggregate())
        for i in range(plan.n_firms):
            run.csv(f"policy_firm{i}.csv", nodes, plan.values[i])
    report = realized_value(real)
    run.json("profit.json", {
        **_setup(cfg),
        "objective": "cost" if cfg.scenario.orientation < 0 else "profit",
        **report.to_dict(),
    })
    return real


def cmd_simulate(run: _Run) -> int:
    _simulate(run)
    return EXIT_OK


def cmd_verify_kkt(run: _Run) -> int:
    real = _simulate(run)
    report = kkt_report(real, settings=run.cfg.kkt)
    run.json("kkt.json", {**_setup(run.cfg), **report.to_dict()})
    for name, ok in sorted(report.verdicts.items()):
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if report.verdict else EXIT_FAILED


def _dp_scenario(cfg: ScenarioConfig):
    s = cfg.scenario
    if cfg.dp.n_steps is None:
        return s
    return s.with_grid(make_grid(s.grid.t_max, cfg.dp.n_steps))


def cmd_solve_dp(run: _Run) -> int:
    cfg = run.cfg
    scn = _dp_scenario(cfg)
    lat = build_lattice(scn.shock, scn.grid)
    theta = fuel_levels_on(scn.fuel, scn.grid)
    fg = make_fuel_grid(scn.y, float(theta.max()), cfg.dp.fuel_levels)
    sol = dp_solve(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta,
                   budget_bytes=cfg.dp.budget_mib << 20)
    run.json("dp.json", {"scenario": scn.tag, "value": sol.value, "orientation": sol.orientation,
                         "first_levels": list(sol.first_levels()), "n_steps": scn.grid.n_steps,
                         "t_max": scn.grid.t_max, "fuel_levels": cfg.dp.fuel_levels,
                         "fuel_step": fg.step})
    if cfg.dp.policy_csv and "csv" in cfg.formats:
        sol.to_csv(run.out / "dp_policy.csv")
        run.files.append("dp_policy.csv")
    print(f"dp value: {sol.value!r}")
    return EXIT_OK


def cmd_calibrate_c(run: _Run) -> int:
    cfg = run.cfg
    cal, tol = cfg.calibrate, cfg.kkt.tolerance
    rows, ok = [], True
    for delta in cal.deltas:
        mc = MonteCarlo(cal.n_paths, default_offset_grid(delta), cfg.seed, run.threads)
        est = quadratic_offset_c(delta, mc, sigma=cal.sigma)
        target = cal.sigma / math.sqrt(2.0 * delta)
        passed = abs(est.mean - target) <= tol * est.std_error + est.tail_bound
        ok &= passed
        rows.append({"delta": delta, **est.to_dict(), "closed_form": target,
                     "error": est.mean - target, "pass": passed})
        print(f"delta={delta:g}: c={est.mean:.6f} +/- {est.std_error:.6f} "
              f"(closed form {target:.6f}) {'pass' if passed else 'FAIL'}")
    run.json("calibrate.json", {"sigma": cal.sigma, "seed": cfg.seed, "tolerance": tol,
                                "results": rows, "verdict": ok})
    return EXIT_OK if ok else EXIT_FAILED


def cmd_compare(run: _Run) -> int:
    cfg = run.cfg
    scn = _dp_scenario(cfg)
    gap = oracle_gap(scn, fuel_levels=cfg.dp.fuel_levels, n_paths=cfg.n_paths, seed=cfg.seed,
                     rel_tol=cfg.dp.rel_tol, tolerance=cfg.kkt.tolerance,
                     budget_bytes=cfg.dp.budget_mib << 20, threads=run.threads)
    run.json("oracle_gap.json", {"scenario": scn.tag, "n_steps": scn.grid.n_steps,
                                 "t_max": scn.grid.t_max, "fuel_levels": cfg.dp.fuel_levels,
                                 **gap.to_dict()})
    print(f"dp {gap.dp_value:.6f} vs policy {gap.policy_value.mean:.6f} "
          f"+/- {gap.policy_value.std_error:.6f}: {'pass' if gap.passed else 'FAIL'}")
    return EXIT_OK if gap.passed else EXIT_FAILED


HANDLERS = {"simulate": cmd_simulate, "verify-kkt": cmd_verify_kkt, "solve-dp": cmd_solve_dp,
            "calibrate-c": cmd_calibrate_c, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuel", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario config (JSON)")
        s.add_argument("--seed", type=int, help="master seed (overrides mc.seed)")
        s.add_argument("--threads", type=int,
                       help="worker cap (default: FUEL_DEFAULT_THREADS or 1)")
        s.add_argument("--out", help="output directory (overrides outputs.directory)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        cfg = load_config(args.config).with_overrides(args.seed, args.out, args.threads)
        run = _Run(cfg, args.threads)
        status = HANDLERS[args.command](run)
    except FuelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_metadata(run.out, args.command, args.config, started, run.files)
    return status


if __name__ == "__main__":
    sys.exit(main())

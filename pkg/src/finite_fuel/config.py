"""Strict JSON scenario configs.

Unknown keys are errors, every parameter is checked against its domain before
any simulation starts, and error messages name the offending field and, when
it can be found, the line of the config file it sits on.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace

from .errors import FuelError, InvalidArgument
from .functionals import KktSettings
from .nested import NestedBudget
from .paths import (AffineDeterministic, ArithmeticBrownian, Constant, GeometricBrownian,
                    RunningMaxGeometric, make_grid)
from .scenarios import OPTIMAL, PERTURBATIONS, TAGS, PolicyRule, Scenario

from .base_capacity import cobb_douglas_k


class ConfigError(InvalidArgument):
    def __init__(self, field_path: str, message: str, line: int | None = None,
                 source: str | None = None):
        self.field_path = field_path
        self.line = line
        self.source = source
        anchor = f"{source or '<config>'}:{line}: " if line else f"{source or '<config>'}: "
        super().__init__(f"{anchor}{field_path}: {message}" if field_path else f"{anchor}{message}")


_SCHEMA = {
    "": {"scenario", "shock", "fuel", "discount", "firms", "grid", "mc", "plan", "dp", "calibrate",
         "outputs", "units", "c"},
    "shock": {"x0", "mu", "sigma", "w0"},
    "fuel": {"kind", "theta0", "rate", "mu", "sigma"},
    "discount": {"delta"},
    "firms[]": {"alpha", "y"},
    "grid": {"t_max", "n_steps"},
    "mc": {"n_paths", "inner_paths", "seed", "tolerance", "inner_horizon"},
    "plan": {"perturb", "monitoring"},
    "dp": {"n_steps", "fuel_levels", "rel_tol", "policy_csv", "budget_mib"},
    "calibrate": {"deltas", "n_paths", "sigma"},
    "outputs": {"directory", "formats"},
}
PERTURB_NAMES = ("none",) + tuple(PERTURBATIONS)


@dataclass(frozen=True)
class DpConfig:
    n_steps: int | None = None
    fuel_levels: int = 101
    rel_tol: float = 0.01
    policy_csv: bool = False
    budget_mib: int = 1024


@dataclass(frozen=True)
class CalibrateConfig:
    deltas: tuple = (0.5, 1.0, 2.0)
    n_paths: int = 100_000
    sigma: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    rule: PolicyRule
    perturb: str
    n_paths: int
    seed: int
    kkt: KktSettings
    dp: DpConfig
    calibrate: CalibrateConfig
    out_dir: str
    formats: tuple
    raw: dict = field(repr=False, default_factory=dict)

    def with_overrides(self, seed: int | None = None, out_dir: str | None = None,
                       threads: int | None = None) -> "ScenarioConfig":
        cfg = self
        if seed is not None:
            if seed < 0:
                raise ConfigError("--seed", "must be nonnegative")
            cfg = replace(cfg, seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=out_dir)
        if threads is not None:
            cfg = replace(cfg, kkt=replace(cfg.kkt, threads=threads))
        return cfg


class _Reader:
    def __init__(self, text: str, source: str | None):
        self.text = text
        self.source = source

    def line_of(self, key: str) -> int | None:
        if not key:
            return None
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def fail(self, path: str, message: str):
        key = re.split(r"[.\[\]]", path.rstrip("]"))[-1] if path else ""
        key = key if not key.isdigit() else path.split(".")[-1].split("[")[0]
        raise ConfigError(path, message, self.line_of(key), self.source)

    def section(self, data, name: str, schema_key: str) -> dict:
        if not isinstance(data, dict):
            self.fail(name, "must be a JSON object")
        extra = sorted(set(data) - _SCHEMA[schema_key])
        if extra:
            raise ConfigError(f"{name + '.' if name else ''}{extra[0]}",
                              f"unknown key (allowed: {', '.join(sorted(_SCHEMA[schema_key]))})",
                              self.line_of(extra[0]), self.source)
        return data

    def number(self, d: dict, path: str, key: str, default=None, *, low=None, high=None,
               low_open=False, high_open=False, integer=False):
        full = f"{path}.{key}" if path else key
        if key not in d:
            if default is None:
                self.fail(full, "is required")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(full, f"must be a finite number, got {v!r}")
        if integer and int(v) != v:
            self.fail(full, f"must be an integer, got {v!r}")
        bad_low = low is not None and (v <= low if low_open else v < low)
        bad_high = high is not None and (v >= high if high_open else v > high)
        if bad_low or bad_high:
            lo = "-inf" if low is None else repr(low)
            hi = "inf" if high is None else repr(high)
            interval = f"{'(' if low_open or low is None else '['}{lo}, {hi}{')' if high_open or high is None else ']'}"
            self.fail(full, f"must lie in the interval {interval}, got {v!r}")
        return int(v) if integer else float(v)


def parse_config(text: str, source: str | None = None) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno,
                          source) from None
    r = _Reader(text, source)
    try:
        return _build(r, data)
    except ConfigError:
        raise
    except FuelError as exc:
        raise ConfigError("", str(exc), None, source) from None


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("", f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))


def _build(r: _Reader, data) -> ScenarioConfig:
    top = r.section(data, "", "")
    tag = top.get("scenario")
    if tag not in TAGS:
        r.fail("scenario", f"must be one of {', '.join(TAGS)}, got {tag!r}")
    units = top.get("units", "absolute")
    if units not in ("absolute", "k"):
        r.fail("units", f"must be 'absolute' or 'k', got {units!r}")

    delta = r.number(r.section(top.get("discount", {}), "discount", "discount"), "discount",
                     "delta", low=0, low_open=True)

    sh = r.section(top.get("shock", {}), "shock", "shock")
    if tag == "quadratic":
        if "x0" in sh or "mu" in sh:
            r.fail("shock.x0" if "x0" in sh else "shock.mu",
                   "quadratic tracking uses a driftless Brownian shock (keys w0, sigma)")
        shock = ArithmeticBrownian(r.number(sh, "shock", "w0", 0.0),
                                   r.number(sh, "shock", "sigma", 1.0, low=0, low_open=True))
    else:
        if "w0" in sh:
            r.fail("shock.w0", "geometric shocks take x0, mu, sigma")
        shock = GeometricBrownian(r.number(sh, "shock", "x0", 1.0, low=0, low_open=True),
                                  r.number(sh, "shock", "mu", 0.0),
                                  r.number(sh, "shock", "sigma", low=0, low_open=True))

    firms_raw = top.get("firms")
    if not isinstance(firms_raw, list) or not firms_raw:
        r.fail("firms", "must be a nonempty list of firm objects")
    alphas, ys = [], []
    for i, f in enumerate(firms_raw):
        p = f"firms[{i}]"
        f = r.section(f, p, "firms[]")
        if tag == "quadratic":
            if "alpha" in f:
                r.fail(f"{p}.alpha", "quadratic tracking has no alpha")
        else:
            alphas.append(r.number(f, p, "alpha", low=0, high=1, low_open=True, high_open=True))
        ys.append(r.number(f, p, "y", low=0))

    ks = []
    if tag != "quadratic":
        try:
            ks = [cobb_douglas_k(a, shock.b, shock.sigma, delta) for a in alphas]
        except FuelError as exc:
            r.fail("firms", str(exc))
    scale = 1.0
    if units == "k":
        if tag == "quadratic":
            r.fail("units", "'k' units need Cobb-Douglas firms")
        scale = sum(ks)
        ys = [y * k for y, k in zip(ys, ks)]

    fu = r.section(top.get("fuel", {}), "fuel", "fuel")
    kind = fu.get("kind", "constant")
    theta0 = scale * r.number(fu, "fuel", "theta0", low=0, low_open=True)
    if kind == "constant":
        fuel = Constant(theta0)
    elif kind == "affine":
        fuel = AffineDeterministic(theta0, scale * r.number(fu, "fuel", "rate", low=0))
    elif kind == "running-max":
        fuel = RunningMaxGeometric(theta0, r.number(fu, "fuel", "mu", 0.0),
                                   r.number(fu, "fuel", "sigma", low=0, low_open=True))
    else:
        r.fail("fuel.kind", f"must be constant, affine or running-max, got {kind!r}")

    gr = r.section(top.get("grid", {}), "grid", "grid")
    grid = make_grid(r.number(gr, "grid", "t_max", 12.0 / delta, low=0, low_open=True),
                     r.number(gr, "grid", "n_steps", 240, low=1, integer=True))

    c = None
    if "c" in top:
        if tag != "quadratic":
            r.fail("c", "only the quadratic scenario takes an offset")
        c = r.number(top, "", "c", low=0, low_open=True)

    try:
        scn = Scenario(tag, shock, fuel, delta, tuple(ys), grid, tuple(alphas), c)
    except FuelError as exc:
        field_name = "firms" if "initial" in str(exc) or "alpha" in str(exc) else "scenario"
        r.fail(field_name, str(exc))

    mc = r.section(top.get("mc", {}), "mc", "mc")
    n_paths = r.number(mc, "mc", "n_paths", 4096, low=2, integer=True)
    inner = r.number(mc, "mc", "inner_paths", 512, low=2, integer=True)
    seed = r.number(mc, "mc", "seed", 0, low=0, integer=True)
    tol = r.number(mc, "mc", "tolerance", 3.0, low=0, low_open=True)
    horizon = r.number(mc, "mc", "inner_horizon", 12.0, low=0, low_open=True)

    pl = r.section(top.get("plan", {}), "plan", "plan")
    perturb = pl.get("perturb", "none")
    if perturb not in PERTURB_NAMES:
        r.fail("plan.perturb", f"must be one of {', '.join(PERTURB_NAMES)}, got {perturb!r}")
    monitoring = pl.get("monitoring", "continuous")
    if monitoring not in ("continuous", "nodes"):
        r.fail("plan.monitoring", f"must be continuous or nodes, got {monitoring!r}")
    rule = OPTIMAL if perturb == "none" else PERTURBATIONS[perturb]
    rule = replace(rule, monitoring=monitoring)

    dp_raw = r.section(top.get("dp", {}), "dp", "dp")
    policy_csv = dp_raw.get("policy_csv", False)
    if not isinstance(policy_csv, bool):
        r.fail("dp.policy_csv", "must be true or false")
    dp = DpConfig(
        n_steps=(r.number(dp_raw, "dp", "n_steps", low=1, integer=True)
                 if "n_steps" in dp_raw else None),
        fuel_levels=r.number(dp_raw, "dp", "fuel_levels", 101, low=2, integer=True),
        rel_tol=r.number(dp_raw, "dp", "rel_tol", 0.01, low=0),
        policy_csv=policy_csv,
        budget_mib=r.number(dp_raw, "dp", "budget_mib", 1024, low=1, integer=True))

    ca = r.section(top.get("calibrate", {}), "calibrate", "calibrate")
    deltas = ca.get("deltas", [0.5, 1.0, 2.0])
    if not isinstance(deltas, list) or not deltas:
        r.fail("calibrate.deltas", "must be a nonempty list of positive numbers")
    checked = tuple(r.number({"d": d}, "calibrate.deltas", "d", low=0, low_open=True)
                    for d in deltas)
    cal = CalibrateConfig(checked, r.number(ca, "calibrate", "n_paths", 100_000, low=2,
                                            integer=True),
                          r.number(ca, "calibrate", "sigma", 1.0, low=0, low_open=True))

    out = r.section(top.get("outputs", {}), "outputs", "outputs")
    out_dir = out.get("directory", "fuel-out")
    if not isinstance(out_dir, str) or not out_dir:
        r.fail("outputs.directory", "must be a nonempty string")
    formats = out.get("formats", ["json", "csv"])
    if not isinstance(formats, list) or any(f not in ("json", "csv") for f in formats):
        r.fail("outputs.formats", "must be a list drawn from json, csv")

    kkt = KktSettings(tolerance=tol, inner=NestedBudget(inner_paths=inner, horizon=horizon))
    return ScenarioConfig(scn, rule, perturb, n_paths, seed, kkt, dp, cal, out_dir,
                          tuple(formats), data)

"""Scenario descriptions, policy rules and simulated realizations.

A scenario bundles the shock, fuel, profit family, discount rate and initial
capacities of one of the four closed-form cases. A policy rule turns the
scenario's base capacities into a plan: the optimal running supremum, or one
of the built-in perturbations used to show that the optimality checks bite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .base_capacity import ScaledShock, ShiftedBrownian, cobb_douglas_k
from .errors import InfeasibleInitialization, InvalidArgument, UnsupportedModel
from .paths import (AffineDeterministic, ArithmeticBrownian, Constant, FuelModel,
                    GeometricBrownian, PathEnsemble, ShockModel, TimeGrid, is_deterministic,
                    make_grid, simulate_fuel, simulate_shock)
from .policy import AllocationWeights, InvestmentPlan, allocation_weights, firm_caps
from .profit import CobbDouglas, QuadraticTracking, check_integrable

TAGS = ("bank-general", "quadratic", "cobb-single", "cobb-nfirm")


@dataclass(frozen=True)
class Scenario:
    """One closed-form case.

    ``alphas`` holds one Cobb-Douglas exponent per firm and is empty for
    quadratic tracking. ``c`` overrides the tracking offset (default: the exact
    value ``sigma / sqrt(2 delta)``).
    """

    tag: str
    shock: ShockModel
    fuel: FuelModel
    delta: float
    y: tuple
    grid: TimeGrid
    alphas: tuple = ()
    c: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        self.validate()

    def validate(self) -> None:
        if self.tag not in TAGS:
            raise InvalidArgument(f"scenario tag must be one of {TAGS}, got {self.tag!r}")
        if not self.delta > 0:
            raise InvalidArgument(f"delta must be positive, got {self.delta}")
        n = len(self.y)
        if n == 0:
            raise InvalidArgument("at least one firm is required")
        if self.tag == "quadratic":
            if not isinstance(self.shock, ArithmeticBrownian):
                raise InvalidArgument("quadratic scenario needs an arithmetic Brownian shock")
            if not isinstance(self.fuel, Constant):
                raise InvalidArgument("quadratic scenario needs constant fuel")
            if n != 1 or self.alphas:
                raise InvalidArgument("quadratic scenario has one firm and no alpha")
            if self.y[0] < 0:
                raise InvalidArgument("initial capacity must be nonnegative")
            if self.c is not None and not self.c > 0:
                raise InvalidArgument(f"c must be positive, got {self.c}")
            if not self.shock.sigma > 0:
                raise InvalidArgument("quadratic scenario needs positive sigma")
        else:
            if not isinstance(self.shock, GeometricBrownian):
                raise InvalidArgument(f"{self.tag} needs a geometric Brownian shock")
            if not self.shock.sigma > 0:
                raise InvalidArgument("sigma must be positive for the closed-form base capacity")
            if len(self.alphas) != n:
                raise InvalidArgument("one alpha per firm is required")
            for a in self.alphas:
                if not 0.0 < a < 1.0:
                    raise InvalidArgument(f"alpha must lie in (0, 1), got {a}")
                check_integrable(a, self.shock.mu, self.shock.sigma, self.delta)
            if any(not v > 0 for v in self.y):
                raise InvalidArgument("initial capacities must be positive for Cobb-Douglas profit")
            if self.tag == "cobb-single" and not isinstance(self.fuel, Constant):
                raise InvalidArgument("cobb-single needs constant fuel")
            if self.tag != "cobb-nfirm" and n != 1:
                raise InvalidArgument(f"{self.tag} has a single firm")
            if self.tag == "cobb-nfirm" and n < 2:
                raise InvalidArgument("cobb-nfirm needs at least two firms")
        if math.fsum(self.y) >= self.fuel.theta0:
            raise InfeasibleInitialization(
                f"initial capacities sum to {math.fsum(self.y)!r}, not below theta0={self.fuel.theta0!r}")
        if n > 1:
            for yi, b in zip(self.y, self.weights.beta):
                if yi > b * self.fuel.theta0:
                    raise InfeasibleInitialization(
                        f"initial capacity {yi!r} exceeds its fuel share {b!r} * theta0")

    @property
    def n_firms(self) -> int:
        return len(self.y)

    @property
    def orientation(self) -> int:
        return -1 if self.tag == "quadratic" else 1

    @property
    def profits(self) -> tuple:
        if self.tag == "quadratic":
            return (QuadraticTracking(),)
        return tuple(CobbDouglas(a) for a in self.alphas)

    @property
    def ks(self) -> tuple:
        b, s = self.shock.b, self.shock.sigma
        return tuple(cobb_douglas_k(a, b, s, self.delta) for a in self.alphas)

    @property
    def offset(self) -> float:
        if self.c is not None:
            return self.c
        return self.shock.sigma / math.sqrt(2.0 * self.delta)

    @property
    def base_specs(self) -> tuple:
        if self.tag == "quadratic":
            return (ShiftedBrownian(self.offset),)
        return tuple(ScaledShock(k) for k in self.ks)

    @property
    def weights(self) -> AllocationWeights:
        if self.tag == "quadratic":
            return AllocationWeights((1.0,))
        return allocation_weights(self.ks)

    @property
    def moment_denominators(self) -> tuple:
        return tuple(check_integrable(a, self.shock.mu, self.shock.sigma, self.delta)
                     for a in self.alphas)

    def with_grid(self, grid: TimeGrid) -> "Scenario":
        return replace(self, grid=grid)

    def require_markov(self) -> None:
        if not is_deterministic(self.fuel):
            raise UnsupportedModel(
                "conditional expectations need a Markov state; stochastic running-max fuel "
                "would require the fuel driver in the state")


@dataclass(frozen=True)
class PolicyRule:
    """How a plan is derived from the scenario's base capacities.

    ``l_scale`` inflates the investment trigger (``l_scale * k X`` for
    Cobb-Douglas, ``W - c + (l_scale - 1) c`` for tracking). ``shift`` adds
    ``shift * theta0`` of capacity to firm ``shift_firm`` from node 1 on, taken
    out of the other firms' shares so the constraint still holds. ``frozen``
    keeps every firm at its initial level.
    """

    l_scale: float = 1.0
    shift: float = 0.0
    shift_firm: int = 0
    frozen: bool = False
    monitoring: str = "continuous"

    def __post_init__(self):
        if not self.l_scale > 0:
            raise InvalidArgument("l_scale must be positive")
        if not self.shift >= 0:
            raise InvalidArgument("shift must be nonnegative")
        if self.monitoring not in ("continuous", "nodes"):
            raise InvalidArgument(f"unknown monitoring {self.monitoring!r}")

    @property
    def is_optimal(self) -> bool:
        return self.l_scale == 1.0 and self.shift == 0.0 and not self.frozen


OPTIMAL = PolicyRule()
PERTURBATIONS = {
    "early-overinvestment": PolicyRule(shift=0.1),
    "overshoot": PolicyRule(l_scale=1.5),
    "frozen": PolicyRule(frozen=True),
}


def default_scenario(tag: str, grid: TimeGrid | None = None) -> Scenario:
    """Desk-scale defaults for each tag (horizon 12/delta, step 0.05/delta)."""
    grid = grid or make_grid(12.0, 240)
    if tag == "cobb-single":
        shock = GeometricBrownian(1.0, 0.0, 0.3)
        k = cobb_douglas_k(0.5, shock.b, shock.sigma, 1.0)
        return Scenario(tag, shock, Constant(2 * k), 1.0, (0.25 * k,), grid, (0.5,))
    if tag == "bank-general":
        shock = GeometricBrownian(1.0, 0.02, 0.3)
        k = cobb_douglas_k(0.5, shock.b, shock.sigma, 1.0)
        return Scenario(tag, shock, AffineDeterministic(1.5 * k, 0.1 * k), 1.0,
                        (0.25 * k,), grid, (0.5,))
    if tag == "cobb-nfirm":
        shock = GeometricBrownian(1.0, 0.0, 0.3)
        alphas = (0.3, 0.7)
        ks = [cobb_douglas_k(a, shock.b, shock.sigma, 1.0) for a in alphas]
        total = sum(ks)
        y = tuple(0.25 * k for k in ks)
        return Scenario(tag, shock, AffineDeterministic(1.5 * total, 0.1 * total), 1.0, y,
                        grid, alphas)
    if tag == "quadratic":
        return Scenario(tag, ArithmeticBrownian(0.0, 1.0), Constant(1.0), 1.0, (0.0,), grid)
    raise InvalidArgument(f"scenario tag must be one of {TAGS}, got {tag!r}")


# ------------------------------------------------------------------ plan building


def base_levels(scn: Scenario, shock_vals: np.ndarray, l_scale: float = 1.0) -> np.ndarray:
    """Base capacities ``(firm, row, node)`` for shock values (or interval maxima)."""
    if scn.tag == "quadratic":
        c = scn.offset
        return (shock_vals - c + (l_scale - 1.0) * c)[None]
    return np.stack([l_scale * k * shock_vals for k in scn.ks])


def running_levels(cand: np.ndarray, pre: np.ndarray) -> np.ndarray:
    """Left-continuous running supremum: node 0 holds ``pre``, node j+1 folds in ``cand[..., j]``."""
    body = np.maximum(np.maximum.accumulate(cand, axis=-1), pre[..., None])
    return np.concatenate([pre[..., None], body], axis=-1)


def shadow_levels(scn: Scenario, rule: PolicyRule, shock_vals, shock_imax, theta_rows, pre):
    """Unperturbed-rule levels and their right limits at the first node.

    Returns ``(levels, post0)``: ``levels[f, r, j]`` is the left limit at node
    ``j`` and ``post0[f, r]`` the level just after the first node.
    """
    caps = np.stack(firm_caps(scn.weights, theta_rows))
    l = base_levels(scn, shock_vals, rule.l_scale)
    if rule.monitoring == "continuous":
        if shock_imax is None:
            raise InvalidArgument("continuous monitoring needs bridge maxima")
        cand = np.minimum(base_levels(scn, shock_imax, rule.l_scale), caps[..., 1:])
    else:
        cand = np.minimum(l[..., :-1], caps[..., :-1])
    levels = running_levels(cand, pre)
    post0 = np.maximum(pre, np.minimum(l[..., 0], caps[..., 0]))
    return levels, post0


def apply_rule(scn: Scenario, rule: PolicyRule, shadow: np.ndarray, theta_rows: np.ndarray,
               first_node: int) -> np.ndarray:
    """Map shadow levels to the rule's plan; ``first_node`` is the global index of column 0."""
    if rule.frozen:
        y = np.asarray(scn.y)[:, None, None]
        return np.broadcast_to(y, shadow.shape).copy()
    if rule.shift == 0.0:
        return shadow
    out = shadow.copy()
    active = (first_node + np.arange(shadow.shape[-1])) >= 1
    s = rule.shift * scn.fuel.theta0
    f0 = rule.shift_firm
    if scn.n_firms == 1:
        out[0] = np.where(active, np.minimum(theta_rows, shadow[0] + s), shadow[0])
        return out
    beta = scn.weights.beta
    rest = 1.0 - beta[f0]
    caps = firm_caps(scn.weights, theta_rows)
    for i in range(scn.n_firms):
        if i == f0:
            out[i] = np.where(active, shadow[i] + s, shadow[i])
        else:
            reduced = caps[i] - s * beta[i] / rest
            out[i] = np.where(active, np.minimum(shadow[i], reduced), shadow[i])
    return out


def check_rule(scn: Scenario, rule: PolicyRule) -> None:
    if not 0 <= rule.shift_firm < scn.n_firms:
        raise InvalidArgument("shift_firm out of range")
    if rule.shift and scn.n_firms > 1:
        beta = scn.weights.beta
        s = rule.shift * scn.fuel.theta0
        rest = 1.0 - beta[rule.shift_firm]
        for i, (yi, b) in enumerate(zip(scn.y, beta)):
            if i != rule.shift_firm and yi > b * scn.fuel.theta0 - s * b / rest:
                raise InfeasibleInitialization("shift leaves another firm below its initial level")


def build_plan(scn: Scenario, rule: PolicyRule, shock: PathEnsemble, theta: PathEnsemble):
    """Plan and shadow levels on full paths from node 0."""
    check_rule(scn, rule)
    pre = np.broadcast_to(np.asarray(scn.y)[:, None], (scn.n_firms, shock.n_paths)).copy()
    shadow, post0 = shadow_levels(scn, rule, shock.values, shock.interval_max, theta.values, pre)
    plan = apply_rule(scn, rule, shadow, theta.values, 0)
    return plan, shadow, post0


@dataclass(frozen=True, eq=False)
class Realization:
    """Simulated shock, fuel, base capacities and the rule's plan."""

    scenario: Scenario
    rule: PolicyRule
    shock: PathEnsemble
    theta: PathEnsemble
    plan: InvestmentPlan
    shadow: np.ndarray = field(repr=False)
    post0: np.ndarray = field(repr=False)

    @property
    def base(self) -> list:
        """Unperturbed base capacities per firm as ensembles."""
        out = []
        for i in range(self.scenario.n_firms):
            im = None
            if self.shock.interval_max is not None:
                im = base_levels(self.scenario, self.shock.interval_max)[i]
            out.append(PathEnsemble(self.shock.grid, base_levels(self.scenario, self.shock.values)[i],
                                    self.shock.master_seed, im))
        return out

    @property
    def base_aggregate(self) -> PathEnsemble:
        return PathEnsemble(self.shock.grid,
                            base_levels(self.scenario, self.shock.values).sum(axis=0),
                            self.shock.master_seed)

    def plan_post(self) -> np.ndarray:
        """Plan levels used in dt-integrals: node 0 carries the level just after time 0."""
        lv = self.plan.values.copy()
        if not self.rule.frozen:
            post = apply_rule(self.scenario, self.rule, self.post0[..., None],
                              self.theta.values[:, :1], 0)[..., 0]
            lv[..., 0] = post
        return lv


def realize(scn: Scenario, rule: PolicyRule = OPTIMAL, n_paths: int = 4096, seed: int = 0,
            threads: int | None = None) -> Realization:
    bridge = rule.monitoring == "continuous"
    shock = simulate_shock(scn.shock, scn.grid, n_paths, seed, bridge=bridge, threads=threads)
    theta = simulate_fuel(scn.fuel, scn.grid, n_paths, seed, threads=threads)
    plan, shadow, post0 = build_plan(scn, rule, shock, theta)
    return Realization(scn, rule, shock, theta, InvestmentPlan(scn.grid, scn.y, plan),
                       shadow, post0)


def with_rule(real: Realization, rule: PolicyRule) -> Realization:
    """Same paths, different rule (common random numbers)."""
    if rule.monitoring == "continuous" and real.shock.interval_max is None:
        raise InvalidArgument("continuous rule needs a realization simulated with bridge maxima")
    plan, shadow, post0 = build_plan(real.scenario, rule, real.shock, real.theta)
    return Realization(real.scenario, rule, real.shock, real.theta,
                       InvestmentPlan(real.scenario.grid, real.scenario.y, plan), shadow, post0)


def theta_at(fuel: FuelModel, t: np.ndarray) -> np.ndarray:
    """Deterministic fuel level at arbitrary times."""
    if isinstance(fuel, Constant):
        return np.full(np.shape(t), float(fuel.theta0))
    if isinstance(fuel, AffineDeterministic):
        return fuel.at(t)
    raise UnsupportedModel("fuel is not deterministic")

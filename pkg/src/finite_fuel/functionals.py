"""Profit and cost functionals, gradients, Snell envelopes and the KKT checks.

Two quadrature conventions live here. ``net_profit`` and ``tracking_cost``
are the literal left-Riemann sums over node values. ``realized_value`` and
everything built on it (gradients, the KKT conditions, dominance checks) use
the trapezoid rule on the plan's right limits with bridge-monitored plans,
which removes the first-order discretization bias of node monitoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, UnsupportedModel
from .estimate import Estimate
from .integrands import (binding_slack, gradient_integrand, horizon_tails, investment_price,
                         multiplier_density, right_limit, trapezoid, trapezoid_from_each_node)
from .nested import (NestedBudget, continuation, inner_paths, node_clock, rebuild, stream_for,
                     unique_states)
from .paths import GeometricBrownian, PathEnsemble
from .policy import NEVER, InvestmentPlan, hitting_times
from .profit import CobbDouglas, check_integrable, profit_value
from .scenarios import OPTIMAL, PolicyRule, Realization, Scenario

# nested stream kinds
SUPERGRADIENT_KIND = 0
SNELL_KIND = 1
TAU_KIND = 2
HITTING_KIND = 3


# ------------------------------------------------------------------ functionals


@dataclass(frozen=True)
class ProfitReport:
    """Per-firm estimates and their sum (the planner's objective)."""

    firms: tuple
    total: Estimate

    def to_dict(self) -> dict:
        return {"firms": [e.to_dict() for e in self.firms], "total": self.total.to_dict()}


def _same_layout(plan: InvestmentPlan, ens: PathEnsemble):
    if ens.grid != plan.grid or ens.n_paths != plan.n_paths:
        raise InvalidArgument("plan and shock must share grid and path count")


def net_profit(plan: InvestmentPlan, shock: PathEnsemble, profit, delta: float, *,
               shock_model: GeometricBrownian | None = None,
               add_tail: bool = False) -> ProfitReport:
    """Discounted operating profit net of investment cost, left-Riemann on the nodes.

    Per path: ``sum_k e^(-delta t_k) R(X_k, nu_k) dt - sum_k e^(-delta t_k)(nu_{k+1} - nu_k)``.
    With ``shock_model`` the frozen-plan value beyond the horizon is reported
    as ``tail_bound`` (and added to the mean when ``add_tail``).
    """
    single = not isinstance(profit, (tuple, list))
    profits = (profit,) * plan.n_firms if single else tuple(profit)
    if len(profits) != plan.n_firms:
        raise InvalidArgument("need one profit model per firm")
    if any(not isinstance(p, CobbDouglas) for p in profits):
        raise InvalidArgument("net profit needs a maximization (Cobb-Douglas) profit model")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    if add_tail and shock_model is None:
        raise InvalidArgument("add_tail needs the shock model for the analytic tail")
    _same_layout(plan, shock)
    grid = plan.grid
    disc = np.exp(-delta * grid.nodes)
    x = shock.values
    firms, totals, tail_total = [], 0.0, 0.0
    for p, v in zip(profits, plan.values):
        rev = (disc[:-1] * profit_value(p, x[:, :-1], v[:, :-1])).sum(axis=1) * grid.dt
        cost = (disc[:-1] * np.diff(v, axis=1)).sum(axis=1)
        tail = np.zeros(plan.n_paths)
        if shock_model is not None:
            d = check_integrable(p.alpha, shock_model.mu, shock_model.sigma, delta)
            tail = disc[-1] * profit_value(p, x[:, -1], v[:, -1]) / d
        sample = rev - cost + (tail if add_tail else 0.0)
        firms.append(Estimate.from_samples(sample, float(tail.mean())))
        totals = totals + sample
        tail_total += float(tail.mean())
    return ProfitReport(tuple(firms), Estimate.from_samples(totals, tail_total))


def tracking_cost(plan: InvestmentPlan, w: PathEnsemble, delta: float, *, sigma: float = 1.0,
                  add_tail: bool = False) -> Estimate:
    """Left-Riemann estimate of ``E int delta e^(-delta s)(W - nu)^2 / 2 ds``.

    ``tail_bound`` is the frozen-plan cost beyond the horizon,
    ``e^(-delta T)[(W_T - nu_T)^2 / 2 + sigma^2 / (2 delta)]``.
    """
    if plan.n_firms != 1:
        raise InvalidArgument("tracking cost is a single-firm functional")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    _same_layout(plan, w)
    grid = plan.grid
    disc = np.exp(-delta * grid.nodes)
    gap = w.values - plan.values[0]
    run = (delta * disc[:-1] * 0.5 * gap[:, :-1] ** 2).sum(axis=1) * grid.dt
    tail = disc[-1] * (0.5 * gap[:, -1] ** 2 + sigma ** 2 / (2.0 * delta))
    return Estimate.from_samples(run + (tail if add_tail else 0.0), float(tail.mean()))


def _midpoint_discounts(scn: Scenario) -> np.ndarray:
    t = scn.grid.nodes
    return np.exp(-scn.delta * (t[:-1] + 0.5 * scn.grid.dt))


def realized_samples(real: Realization) -> tuple[np.ndarray, np.ndarray]:
    """Per firm and path value of the plan in the natural orientation, with its tail.

    Cobb-Douglas: trapezoid revenue minus investment cost (the jump at time 0
    at unit price, later increments at their interval midpoints) plus the
    frozen-plan tail. Quadratic: trapezoid tracking cost plus its tail.
    """
    scn = real.scenario
    dt = scn.grid.dt
    disc = np.exp(-scn.delta * scn.grid.nodes)
    x = real.shock.values
    lv = real.plan_post()
    if scn.tag == "quadratic":
        gap = x - lv[0]
        run = trapezoid(scn.delta * disc * 0.5 * gap ** 2, dt)
        tail = disc[-1] * (0.5 * gap[:, -1] ** 2 + scn.shock.sigma ** 2 / (2.0 * scn.delta))
        return (run + tail)[None], tail
    mid = _midpoint_discounts(scn)
    out, tails = [], 0.0
    for i, (p, d) in enumerate(zip(scn.profits, scn.moment_denominators)):
        rev = trapezoid(disc * profit_value(p, x, lv[i]), dt)
        cost = (lv[i][:, 0] - scn.y[i]) + (np.diff(lv[i], axis=1) * mid).sum(axis=1)
        tail = disc[-1] * profit_value(p, x[:, -1], lv[i][:, -1]) / d
        out.append(rev - cost + tail)
        tails = tails + tail
    return np.stack(out), tails


def realized_value(real: Realization) -> ProfitReport:
    firms, tail = realized_samples(real)
    ests = tuple(Estimate.from_samples(f) for f in firms)
    return ProfitReport(ests, Estimate.from_samples(firms.sum(axis=0), float(np.mean(tail))))


def value_gradient(real: Realization) -> np.ndarray:
    """Exact gradient of the pathwise objective (maximization form) in the plan levels.

    Entry ``[f, p, j]`` is the derivative with respect to the level held right
    after node ``j``; the objective is concave in these levels, so
    ``J(mu) - J(nu) <= <grad, mu - nu>`` holds path by path.
    """
    scn = real.scenario
    dt = scn.grid.dt
    disc = np.exp(-scn.delta * scn.grid.nodes)
    w = np.full(disc.shape, dt)
    w[0] = w[-1] = 0.5 * dt
    x = real.shock.values
    lv = real.plan_post()
    if scn.tag == "quadratic":
        d = w * scn.delta * disc * (lv[0] - x)
        d[:, -1] += disc[-1] * (lv[0][:, -1] - x[:, -1])
        return -d[None]
    mid = _midpoint_discounts(scn)
    price = np.empty_like(disc)
    price[0] = 1.0 - mid[0]
    price[1:-1] = mid[:-1] - mid[1:]
    price[-1] = mid[-1]
    grads = []
    for i, (a, d) in enumerate(zip(scn.alphas, scn.moment_denominators)):
        g = w * disc * (x / lv[i]) ** a
        g[:, -1] += disc[-1] * (x[:, -1] / lv[i][:, -1]) ** a / d
        grads.append(g - price)
    return np.stack(grads)


def _objective(real: Realization) -> np.ndarray:
    firms, _ = realized_samples(real)
    return real.scenario.orientation * firms.sum(axis=0)


def directional_derivative(real: Realization, other: Realization) -> Estimate:
    """``<grad J(nu), mu - nu>`` on common paths (maximization form)."""
    _check_common(real, other)
    diff = other.plan_post() - real.plan_post()
    return Estimate.from_samples((value_gradient(real) * diff).sum(axis=(0, 2)))


def concavity_gap(real: Realization, other: Realization) -> Estimate:
    """``J(mu) - J(nu) - <grad J(nu), mu - nu>``; nonpositive path by path."""
    _check_common(real, other)
    diff = other.plan_post() - real.plan_post()
    lin = (value_gradient(real) * diff).sum(axis=(0, 2))
    return Estimate.from_samples(_objective(other) - _objective(real) - lin)


def value_difference(real: Realization, other: Realization) -> Estimate:
    """Paired ``J(nu) - J(mu)`` in maximization form."""
    _check_common(real, other)
    return Estimate.from_samples(_objective(real) - _objective(other))


def _check_common(a: Realization, b: Realization):
    if a.scenario != b.scenario or a.shock is not b.shock and not (
            np.array_equal(a.shock.values, b.shock.values)):
        raise InvalidArgument("comparisons need the same scenario and common paths")


# ------------------------------------------------------------------ multiplier


@dataclass(frozen=True, eq=False)
class MultiplierDensity:
    """Per path and node density of the Lagrange multiplier (natural sign).

    Nonnegative on its support for maximization, nonpositive for the tracking
    problem; zero off the support.
    """

    values: np.ndarray
    support: np.ndarray
    orientation: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        s = np.asarray(self.support, dtype=bool)
        if v.shape != s.shape:
            raise InvalidArgument("density and support mask must share a shape")
        if np.any(v[~s] != 0):
            raise InvalidArgument("density must vanish off its support")
        v.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "support", s)

    @property
    def sign_consistent(self) -> bool:
        """Orientation-signed density is strictly positive wherever it is supported."""
        return bool(np.all(self.orientation * self.values[self.support] > 0))


def lagrange_density(scn: Scenario, shock: PathEnsemble, theta: PathEnsemble,
                     base: Sequence[PathEnsemble] | None = None) -> MultiplierDensity:
    """Closed-form multiplier density on the nodes.

    The support is ``sum_i l_i > theta(.+)``; ``base`` supplies the base
    capacities (default: the scenario's own, from the shock).
    """
    if not shock.same_layout(theta):
        raise InvalidArgument("shock and fuel must share grid and path count")
    disc = np.exp(-scn.delta * shock.grid.nodes)
    plus = right_limit(theta.values)
    support = None
    if base is not None:
        for b in base:
            if not b.same_layout(theta):
                raise InvalidArgument("base capacities must share grid and path count")
        support = sum(b.values for b in base) > plus
    vals, on = multiplier_density(scn, shock.values, theta.values, plus, disc, support)
    return MultiplierDensity(vals, on, scn.orientation)


# ------------------------------------------------------------------ Markov-state estimates


@dataclass(frozen=True)
class MarkovState:
    """Shock value and every firm's plan level just after ``t``."""

    x: float
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in np.atleast_1d(self.levels)))


def supergradient(scn: Scenario, t: float, state: MarkovState, *, firm: int = 0,
                  rule: PolicyRule = OPTIMAL, budget: NestedBudget = NestedBudget(),
                  seed: int = 0, threads=None) -> Estimate:
    """Nested estimate of the plan's gradient at ``t`` in the natural orientation.

    Cobb-Douglas: ``E[int_t e^(-delta s) R_y(X, nu) ds | state] - e^(-delta t)``.
    Quadratic: ``E[int_t delta e^(-delta s)(nu - W) ds | state]``.
    """
    scn.require_markov()
    if len(state.levels) != scn.n_firms or not 0 <= firm < scn.n_firms:
        raise InvalidArgument("state needs one level per firm and a valid firm index")
    node = scn.grid.index_of(t)
    c = continuation(scn, rule, node, np.array([state.x]), np.array(state.levels)[:, None],
                     budget=budget, seed=seed, stream=stream_for(SUPERGRADIENT_KIND, node),
                     threads=threads)
    return Estimate.from_samples(c.gradient[firm, 0], float(c.tail_bound[0]))


def _first_crossing(crossed: np.ndarray, t0: float, dt: float, delta: float) -> np.ndarray:
    """Discount at the first crossing, placed at the middle of its interval (0 if never)."""
    hit = crossed.any(axis=1)
    j = crossed.argmax(axis=1)
    return np.where(hit, np.exp(-delta * (t0 + (j + 0.5) * dt)), 0.0)


def snell_at_optimum(scn: Scenario, t: float, state: MarkovState, *,
                     budget: NestedBudget = NestedBudget(), seed: int = 0,
                     threads=None) -> Estimate:
    """Snell envelope of the optimal plan's gradient via the hitting-time representations.

    ``quadratic``: ``E[e^(-delta rho)(theta0 - W(rho))]``; ``cobb-single``:
    ``theta0^-alpha / D E[e^(-delta rho) X(rho)^alpha] - E[e^(-delta rho)]``;
    ``bank-general``: ``E[int_rho e^(-delta s)(R_y(X, nu*) - delta) ds]``, with
    ``rho`` the first time the base capacity exceeds the fuel's right limit.
    Inside the stopping region the first two are evaluated exactly.
    """
    if scn.tag == "cobb-nfirm":
        raise UnsupportedModel("no hitting-time Snell representation for the N-firm case")
    scn.require_markov()
    node = scn.grid.index_of(t)
    dt = scn.grid.dt
    t0 = node * dt
    unit = inner_paths(scn, budget, seed, stream_for(SNELL_KIND, node), threads)
    horizon = unit.grid.t_max
    theta0 = scn.fuel.theta0
    if scn.tag in ("quadratic", "cobb-single"):
        if scn.tag == "quadratic":
            level = theta0 + scn.offset
            stopped = math.exp(-scn.delta * t0) * (theta0 - state.x)
            at_level = theta0 - level
            crossed = state.x + unit.interval_max > level
        else:
            k, a, d = scn.ks[0], scn.alphas[0], scn.moment_denominators[0]
            level = theta0 / k
            stopped = math.exp(-scn.delta * t0) * ((state.x / theta0) ** a / d - 1.0)
            at_level = k ** -a / d - 1.0
            crossed = state.x * unit.interval_max > level
        if state.x > level:
            return Estimate(stopped, 0.0, unit.n_paths)
        samples = at_level * _first_crossing(crossed, t0, dt, scn.delta)
        return Estimate.from_samples(samples, math.exp(-scn.delta * (t0 + horizon)) * abs(at_level))
    # bank-general
    disc, theta, plus = node_clock(scn, node, unit)
    x, plan = rebuild(scn, OPTIMAL, node, np.array([state.x]), np.array(state.levels)[:, None],
                      unit)
    a, d, k = scn.alphas[0], scn.moment_denominators[0], scn.ks[0]
    g = disc * ((x / plan[0]) ** a - scn.delta)
    from_node = trapezoid_from_each_node(g, dt)
    tail = disc[-1] * ((x[:, -1] / plan[0][:, -1]) ** a / d - 1.0)
    inside = k * x > plus
    hit = inside.any(axis=1)
    j = inside.argmax(axis=1)
    rows = np.arange(x.shape[0])
    samples = np.where(hit, from_node[rows, j] + tail, 0.0)
    bound = float(np.mean(np.abs(tail))) + float(disc[-1])
    return Estimate.from_samples(samples, bound)


# ------------------------------------------------------------------ KKT report


@dataclass(frozen=True)
class KktSettings:
    """Tolerances and budgets for ``kkt_report``.

    ``taus`` are deterministic grid times for the first condition (default:
    0, a quarter and half of the horizon); the scenario's hitting time from 0
    is added when ``hitting`` is set. ``floor`` scales the absolute bound
    ``floor * |J|`` that equality conditions must also meet.
    """

    tolerance: float = 3.0
    inner: NestedBudget = field(default_factory=NestedBudget)
    taus: tuple | None = None
    hitting: bool = True
    floor: float = 1e-2
    threads: int | None = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidArgument("tolerance must be positive")
        if not self.floor >= 0:
            raise InvalidArgument("floor must be nonnegative")


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    estimate: Estimate
    passed: bool
    kind: str                # "inequality", "equality" or "exact"
    tau: float | str | None = None
    firm: int | None = None
    detail: tuple = ()       # extra (key, value) diagnostics

    def to_dict(self, tolerance: float) -> dict:
        out = {"name": self.name, "kind": self.kind, "estimate": self.estimate.mean,
               "std_error": self.estimate.std_error, "tail_bound": self.estimate.tail_bound,
               "n_paths": self.estimate.n_paths, "tolerance": tolerance, "pass": self.passed}
        if self.tau is not None:
            out["tau"] = self.tau
        if self.firm is not None:
            out["firm"] = self.firm
        out.update(dict(self.detail))
        return out


@dataclass(frozen=True)
class KktReport:
    scenario: str
    rule: PolicyRule
    orientation: int
    tolerance: float
    value: Estimate
    checks: tuple

    @property
    def verdicts(self) -> dict:
        out = {}
        for c in self.checks:
            out[c.name] = out.get(c.name, True) and c.passed
        return out

    @property
    def verdict(self) -> bool:
        return all(c.passed for c in self.checks)

    def condition(self, name: str) -> list:
        return [c for c in self.checks if c.name == name]

    def to_dict(self) -> dict:
        r = self.rule
        return {
            "scenario": self.scenario,
            "orientation": self.orientation,
            "plan_rule": {"l_scale": r.l_scale, "shift": r.shift, "shift_firm": r.shift_firm,
                          "frozen": r.frozen, "monitoring": r.monitoring},
            "value": self.value.to_dict(),
            "conditions": [c.to_dict(self.tolerance) for c in self.checks],
            "verdicts": self.verdicts,
            "verdict": self.verdict,
        }


def _inequality(est: Estimate, tol: float) -> bool:
    return est.mean <= tol * est.std_error


def _equality(est: Estimate, tol: float, floor: float) -> bool:
    return abs(est.mean) <= tol * est.std_error and abs(est.mean) <= floor


def nested_gap(real: Realization, nodes: np.ndarray, kind: int, settings: KktSettings):
    """First-condition gap ``grad J - E[int dlambda]`` (maximization form) at per-path nodes.

    ``nodes[p]`` is the stopping node of path ``p`` (``NEVER`` contributes 0).
    States at one node share inner draws; the standard error adds the outer
    variance of the per-path conditional estimates and the inner variance of
    the count-weighted state average.
    """
    scn = real.scenario
    n, f = real.plan.n_paths, scn.n_firms
    per_path = np.zeros((f, n))
    inner_var = np.zeros(f)
    tail = 0.0
    z_max = -math.inf
    seed = real.shock.master_seed
    for k in np.unique(nodes[nodes != NEVER]):
        idx = np.flatnonzero(nodes == k)
        start, pre, inv, counts = unique_states(real.shock.values[idx, k], real.shadow[:, idx, k])
        c = continuation(scn, real.rule, int(k), start, pre, budget=settings.inner, seed=seed,
                         stream=stream_for(kind, int(k)), threads=settings.threads)
        gap = scn.orientation * (c.gradient - c.multiplier[None])
        m = gap.shape[2]
        mean_s = gap.mean(axis=2)
        per_path[:, idx] = mean_s[:, inv]
        pooled = ((counts / n)[None, :, None] * gap).sum(axis=1)
        inner_var += pooled.var(axis=1, ddof=1) / m
        se_s = gap.std(axis=2, ddof=1) / math.sqrt(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se_s > 0, mean_s / se_s, 0.0)
        z_max = max(z_max, float(z.max()))
        tail += float((counts * c.tail_bound).sum()) / n
    out = []
    for i in range(f):
        se = math.sqrt(per_path[i].var(ddof=1) / n + inner_var[i]) if n > 1 else 0.0
        out.append(Estimate(float(per_path[i].mean()), se, n, tail))
    return out, z_max


def pathwise_phi(real: Realization, density: MultiplierDensity):
    """``grad J(t_k) - Lambda(t_k)`` along each outer path (natural orientation).

    The conditional expectations are replaced by the realized integrals from
    each node on (their optional projection is the quantity of interest when
    paired with the plan's increments). Returns ``(phi[f, p, k], tail_bound[p])``.
    """
    scn = real.scenario
    disc = np.exp(-scn.delta * scn.grid.nodes)
    x = real.shock.values
    lv = real.plan_post()
    g = gradient_integrand(scn, x, lv, disc)
    tail_g, tail_b = horizon_tails(scn, x[:, -1], lv[..., -1], real.theta.values[:, -1], disc[-1])
    phi = (trapezoid_from_each_node(g - density.values[None], scn.grid.dt)
           + tail_g[..., None] - investment_price(scn, disc))
    return phi, tail_b


def kkt_report(real: Realization, density: MultiplierDensity | None = None,
               settings: KktSettings = KktSettings()) -> KktReport:
    """Monte Carlo check of the three generalized Kuhn-Tucker conditions.

    1. at each sampled stopping time, ``grad J - E[int dlambda | F_tau] <= 0``
       (maximization form; inequality verdict);
    2. ``E int (grad J - Lambda) dnu = 0`` per firm (equality verdict);
    3. ``E int (theta - sum nu) dlambda = 0`` plus exact support containment.
    """
    scn = real.scenario
    scn.require_markov()
    tol = settings.tolerance
    if density is None:
        density = lagrange_density(scn, real.shock, real.theta)
    value = realized_value(real).total
    floor = settings.floor * abs(value.mean)
    checks = []

    grid = scn.grid
    taus = settings.taus if settings.taus is not None else (0.0, grid.t_max / 4, grid.t_max / 2)
    n = real.plan.n_paths
    for tau in taus:
        k = grid.index_of(tau)
        ests, z = nested_gap(real, np.full(n, k), TAU_KIND, settings)
        for i, e in enumerate(ests):
            checks.append(ConditionCheck("condition1", e, _inequality(e, tol), "inequality",
                                         float(grid.nodes[k]), i, (("max_state_z", z),)))
    if settings.hitting:
        h = hitting_times(real.base_aggregate, real.theta)
        nodes = np.where(h.censored, NEVER, h.rho)
        ests, z = nested_gap(real, nodes, HITTING_KIND, settings)
        hits = int(np.count_nonzero(nodes != NEVER))
        for i, e in enumerate(ests):
            checks.append(ConditionCheck("condition1", e, _inequality(e, tol), "inequality",
                                         "hitting", i, (("max_state_z", z), ("hits", hits))))

    phi, tail_b = pathwise_phi(real, density)
    lv = real.plan_post()
    y = np.asarray(scn.y)[:, None]
    steps = np.concatenate([lv[..., :1] - y[..., None], np.diff(lv, axis=-1)], axis=-1)
    for i in range(scn.n_firms):
        sample = scn.orientation * (phi[i] * steps[i]).sum(axis=1)
        tail = float(np.mean(tail_b * (lv[i][:, -1] - scn.y[i])))
        e = Estimate.from_samples(sample, tail)
        checks.append(ConditionCheck("condition2", e, _equality(e, tol, floor), "equality",
                                     firm=i))

    slack = binding_slack(real.theta.values, lv.sum(axis=0))
    sample = scn.orientation * (slack[:, :-1] * density.values[:, :-1]).sum(axis=1) * grid.dt
    e = Estimate.from_samples(sample)
    checks.append(ConditionCheck("condition3", e, _equality(e, tol, floor), "equality"))
    loose = (density.values != 0) & (slack != 0)
    bad = int(np.count_nonzero(loose))
    checks.append(ConditionCheck("support", Estimate(float(bad), 0.0, n), bad == 0, "exact",
                                 detail=(("violations", bad),)))
    return KktReport(scn.tag, real.rule, scn.orientation, tol, value, tuple(checks))


"""Brute-force dynamic programming on a recombining lattice.

The discrete problem matches the left-Riemann functional: at step ``k`` the
firm collects ``e^(-delta t_k) R(X_k, nu_k) dt``, then raises its level to
``nu_{k+1} <= theta(t_{k+1})`` paying ``e^(-delta t_k)`` per unit. The value
after the last node is the frozen-plan analytic tail. Levels live on a
uniform fuel grid, so controls are multiples of its step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binom

from .errors import BudgetExceeded, InvalidArgument, UnstableDiscretization
from .estimate import Estimate
from .paths import (AffineDeterministic, ArithmeticBrownian, Constant, GeometricBrownian,
                    TimeGrid)
from .profit import CobbDouglas, QuadraticTracking, check_integrable, profit_value
from .scenarios import PolicyRule, Scenario, realize

DEFAULT_BUDGET = 1 << 30


@dataclass(frozen=True, eq=False)
class Lattice:
    """Recombining binomial tree; node ``i`` of step ``k`` has taken ``i`` down moves."""

    grid: TimeGrid
    model: GeometricBrownian | ArithmeticBrownian
    up: float
    down: float
    p: float

    @property
    def geometric(self) -> bool:
        return isinstance(self.model, GeometricBrownian)

    def values(self, k: int) -> np.ndarray:
        i = np.arange(k + 1)
        if self.geometric:
            return self.model.x0 * np.exp((k - i) * math.log(self.up) + i * math.log(self.down))
        return self.model.w0 + (k - i) * self.up + i * self.down

    def n_nodes(self, k: int) -> int:
        return k + 1

    def expect(self, nxt: np.ndarray) -> np.ndarray:
        """One-step conditional expectation of step-(k+1) values, node axis first."""
        return self.p * nxt[:-1] + (1.0 - self.p) * nxt[1:]

    def mean(self, k: int) -> float:
        """Exact lattice expectation of the shock at step ``k``."""
        return float(binom.pmf(np.arange(k + 1), k, 1.0 - self.p) @ self.values(k))


def build_lattice(model, grid: TimeGrid) -> Lattice:
    """Moment-matched lattice: ``p u + (1 - p) d = e^(mu dt)`` for GBM, ``+-sigma sqrt(dt)`` for BM."""
    dt = grid.dt
    if isinstance(model, GeometricBrownian):
        growth = math.exp(model.mu * dt)
        if model.sigma == 0:
            return Lattice(grid, model, growth, growth, 0.5)
        u = math.exp(model.sigma * math.sqrt(dt))
        d = 1.0 / u
        p = (growth - d) / (u - d)
        if not 0.0 < p < 1.0:
            raise UnstableDiscretization(
                f"lattice probability {p!r} outside (0, 1); reduce the time step below "
                f"the drift/volatility threshold")
        return Lattice(grid, model, u, d, p)
    if isinstance(model, ArithmeticBrownian):
        step = model.sigma * math.sqrt(dt)
        return Lattice(grid, model, step, -step, 0.5)
    raise InvalidArgument(f"unsupported shock model {model!r}")


@dataclass(frozen=True, eq=False)
class FuelGrid:
    """Per-firm uniform levels ``y_i + j * step`` for ``j < m``; ``step`` spans ``[sum y, theta_max]``."""

    y: tuple
    step: float
    m: int

    def levels(self, firm: int) -> np.ndarray:
        return self.y[firm] + self.step * np.arange(self.m)

    @property
    def n_firms(self) -> int:
        return len(self.y)

    def floor_index(self, firm: int, level: np.ndarray) -> np.ndarray:
        """Largest grid index whose level does not exceed ``level``."""
        lv = self.levels(firm)
        idx = np.searchsorted(lv, level, side="right") - 1
        return np.clip(idx, 0, self.m - 1)


def make_fuel_grid(y: Sequence[float], theta_max: float, m: int) -> FuelGrid:
    y = tuple(float(v) for v in y)
    if not 1 <= len(y) <= 2:
        raise InvalidArgument("the lattice oracle handles one or two firms")
    if int(m) < 2:
        raise InvalidArgument("need at least two fuel levels")
    if any(v < 0 for v in y) or not math.fsum(y) < theta_max:
        raise InvalidArgument("need 0 <= y and sum(y) < theta_max")
    return FuelGrid(y, (theta_max - math.fsum(y)) / (int(m) - 1), int(m))


def fuel_levels_on(fuel, grid: TimeGrid) -> np.ndarray:
    if isinstance(fuel, AffineDeterministic):
        return fuel.at(grid.nodes)
    if isinstance(fuel, Constant):
        return np.full(grid.n_steps + 1, float(fuel.theta0))
    raise InvalidArgument("the lattice oracle needs deterministic fuel")


# ------------------------------------------------------------------ rewards


def _profits(profits, n):
    if isinstance(profits, (CobbDouglas, QuadraticTracking)):
        profits = (profits,) * n
    profits = tuple(profits)
    if len(profits) != n:
        raise InvalidArgument("need one profit model per firm")
    if any(isinstance(p, QuadraticTracking) for p in profits) and n != 1:
        raise InvalidArgument("quadratic tracking is single-firm")
    return profits


def _firm_reward(lat: Lattice, profit, x: np.ndarray, lv: np.ndarray, k: int, delta: float,
                 terminal: bool) -> np.ndarray:
    """``(nodes, levels)`` reward in maximization form."""
    disc = math.exp(-delta * lat.grid.nodes[k])
    dt = lat.grid.dt
    if isinstance(profit, QuadraticTracking):
        gap2 = 0.5 * (x[:, None] - lv[None, :]) ** 2
        if terminal:
            return -disc * (gap2 + lat.model.sigma ** 2 / (2.0 * delta))
        return -disc * delta * gap2 * dt
    r = profit_value(profit, x[:, None], lv[None, :])
    if terminal:
        d = check_integrable(profit.alpha, lat.model.mu, lat.model.sigma, delta)
        return disc * r / d
    return disc * r * dt


def _reward(lat, profits, fg: FuelGrid, k, delta, terminal):
    x = lat.values(k)
    parts = [_firm_reward(lat, p, x, fg.levels(i), k, delta, terminal)
             for i, p in enumerate(profits)]
    if len(parts) == 1:
        return parts[0]
    return parts[0][:, :, None] + parts[1][:, None, :]


def _price(profits, delta, t) -> float:
    return 0.0 if isinstance(profits[0], QuadraticTracking) else math.exp(-delta * t)


def _level_sum(fg: FuelGrid) -> np.ndarray:
    if fg.n_firms == 1:
        return fg.levels(0)
    return fg.levels(0)[:, None] + fg.levels(1)[None, :]


def _suffix_argmax(g: np.ndarray, axis: int):
    """Max over ``j' >= j`` along ``axis`` and the smallest maximizing ``j'``."""
    r = np.flip(g, axis=axis)
    run = np.maximum.accumulate(r, axis=axis)
    shape = [1] * g.ndim
    shape[axis] = g.shape[axis]
    pos = np.arange(g.shape[axis]).reshape(shape)
    # a strict new maximum in reversed order moves the argmax to a smaller j'
    prev = np.concatenate([np.full_like(np.take(run, [0], axis=axis), -np.inf),
                           np.delete(run, -1, axis=axis)], axis=axis)
    mark = np.where(r >= prev, pos, 0)
    arg = np.maximum.accumulate(mark, axis=axis)
    n = g.shape[axis]
    return np.flip(run, axis=axis), n - 1 - np.flip(arg, axis=axis)


# ------------------------------------------------------------------ solver


@dataclass(frozen=True, eq=False)
class DpSolution:
    """Value at the root and, per step, the chosen target level indices.

    ``policy[k][f]`` has shape ``(k + 1,) + (m,) * n_firms`` and holds firm
    ``f``'s level index for ``nu_{k+1}`` from each (node, current levels).
    """

    value: float
    policy: tuple
    lattice: Lattice
    fuel_grid: FuelGrid
    orientation: int

    def first_levels(self) -> tuple:
        """Levels chosen at time 0 from the initial state."""
        idx = (0,) + (0,) * self.fuel_grid.n_firms
        return tuple(float(self.fuel_grid.levels(f)[self.policy[0][f][idx]])
                     for f in range(self.fuel_grid.n_firms))

    def to_csv(self, path) -> None:
        """Rows ``step, node, level_i..., increment_i...`` over every state."""
        fg = self.fuel_grid
        n = fg.n_firms
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "node"] + [f"level_{i}" for i in range(n)]
                       + [f"increment_{i}" for i in range(n)])
            for k, targets in enumerate(self.policy):
                for idx in np.ndindex(targets[0].shape):
                    cur = [fg.levels(i)[idx[1 + i]] for i in range(n)]
                    new = [fg.levels(i)[targets[i][idx]] for i in range(n)]
                    w.writerow([k, idx[0]] + [repr(float(c)) for c in cur]
                               + [repr(float(b - a)) for a, b in zip(cur, new)])


def required_bytes(n_steps: int, m: int, n_firms: int) -> int:
    states = (n_steps + 1) * (n_steps + 2) // 2 * m ** n_firms
    work = 6 * (n_steps + 1) * m ** n_firms * 8
    return states * n_firms * 2 + work


def dp_solve(lattice: Lattice, fuel, profits, y: Sequence[float], fuel_grid: FuelGrid,
             delta: float, *, budget_bytes: int = DEFAULT_BUDGET) -> DpSolution:
    """Backward induction over (step, node, quantized levels)."""
    n_firms = fuel_grid.n_firms
    if len(y) != n_firms or tuple(float(v) for v in y) != fuel_grid.y:
        raise InvalidArgument("fuel grid must start at the initial capacities")
    if not delta > 0:
        raise InvalidArgument("delta must be positive")
    profits = _profits(profits, n_firms)
    grid = lattice.grid
    need = required_bytes(grid.n_steps, fuel_grid.m, n_firms)
    if need > budget_bytes:
        raise BudgetExceeded(need, budget_bytes)
    theta = fuel_levels_on(fuel, grid)
    if not math.fsum(y) <= theta[0]:
        raise InvalidArgument("initial capacities exceed the fuel")
    total = _level_sum(fuel_grid)
    index_dtype = np.int16 if fuel_grid.m < 2 ** 15 else np.int32

    value = _reward(lattice, profits, fuel_grid, grid.n_steps, delta, terminal=True)
    policy = [None] * grid.n_steps
    for k in range(grid.n_steps - 1, -1, -1):
        price = _price(profits, delta, grid.nodes[k])
        g = lattice.expect(value) - price * total[None]
        g = np.where(total[None] <= theta[k + 1], g, -np.inf)
        if n_firms == 1:
            best, a0 = _suffix_argmax(g, axis=1)
            targets = (a0.astype(index_dtype),)
        else:
            inner, a2 = _suffix_argmax(g, axis=2)
            best, a1 = _suffix_argmax(inner, axis=1)
            a2_at = np.take_along_axis(a2, a1, axis=1)
            targets = (a1.astype(index_dtype), a2_at.astype(index_dtype))
        value = _reward(lattice, profits, fuel_grid, k, delta, terminal=False) + best \
            + price * total[None]
        policy[k] = targets
    root = float(value[(0,) + (0,) * n_firms])
    orientation = -1 if isinstance(profits[0], QuadraticTracking) else 1
    return DpSolution(orientation * root, tuple(policy), lattice, fuel_grid, orientation)


def evaluate_policy_on_lattice(lattice: Lattice, fuel, profits, y: Sequence[float],
                               fuel_grid: FuelGrid, delta: float,
                               targets: Callable[[int, np.ndarray, tuple], tuple]) -> float:
    """Exact lattice expectation of a quantized feedback policy (natural orientation).

    ``targets(k, x, current)`` receives the step, the node values broadcast
    against the level-index arrays ``current`` and returns the new level
    indices per firm; they must not decrease and must respect the fuel.
    """
    n_firms = fuel_grid.n_firms
    profits = _profits(profits, n_firms)
    grid = lattice.grid
    theta = fuel_levels_on(fuel, grid)
    total = _level_sum(fuel_grid)
    value = _reward(lattice, profits, fuel_grid, grid.n_steps, delta, terminal=True)
    for k in range(grid.n_steps - 1, -1, -1):
        shape = (k + 1,) + (fuel_grid.m,) * n_firms
        cur = tuple(np.broadcast_to(
            np.arange(fuel_grid.m).reshape((1,) + tuple(-1 if a == f else 1
                                                          for a in range(n_firms))), shape)
            for f in range(n_firms))
        x = lattice.values(k).reshape((-1,) + (1,) * n_firms)
        new = tuple(np.asarray(t) for t in targets(k, x, cur))
        if any(np.any(a < c) for a, c in zip(new, cur)):
            raise InvalidArgument("policy decreases a level")
        cont = lattice.expect(value)
        nodes = np.arange(k + 1).reshape((-1,) + (1,) * n_firms)
        chosen = cont[(np.broadcast_to(nodes, shape),) + new]
        new_total = total[new] if n_firms > 1 else total[new[0]]
        reachable = total[None] <= theta[k]
        if np.any((new_total > theta[k + 1]) & np.broadcast_to(reachable, shape)):
            raise InvalidArgument("policy breaches the fuel constraint")
        price = _price(profits, delta, grid.nodes[k])
        value = (_reward(lattice, profits, fuel_grid, k, delta, terminal=False) + chosen
                 - price * (new_total - total[None]))
    orientation = -1 if isinstance(profits[0], QuadraticTracking) else 1
    return orientation * float(value[(0,) + (0,) * n_firms])


def closed_form_targets(scn: Scenario, fuel_grid: FuelGrid, rule: PolicyRule = PolicyRule(
        monitoring="nodes")):
    """Node-monitored closed-form policy floored onto the fuel grid."""
    theta = fuel_levels_on(scn.fuel, scn.grid)
    beta = scn.weights.beta

    def targets(k, x, current):
        if rule.frozen:
            return current
        out = list(current)
        for f in range(scn.n_firms):
            if scn.tag == "quadratic":
                level = x - scn.offset + (rule.l_scale - 1.0) * scn.offset
            else:
                level = rule.l_scale * scn.ks[f] * x
            want = np.minimum(level, beta[f] * theta[k])
            if scn.n_firms > 1:
                # states off the policy's path may hold more than a share; the
                # remaining fuel then bounds the other firm
                others = sum(fuel_grid.levels(o)[out[o]] for o in range(scn.n_firms) if o != f)
                want = np.minimum(want, theta[k] - others)
            idx = fuel_grid.floor_index(f, want)
            out[f] = np.maximum(current[f], np.broadcast_to(idx, current[f].shape))
        return tuple(out)

    return targets


# ------------------------------------------------------------------ comparison


@dataclass(frozen=True)
class OracleGap:
    dp_value: float
    policy_value: Estimate
    lattice_policy_value: float
    gap: float
    passed: bool
    rel_tol: float
    tolerance: float

    def to_dict(self) -> dict:
        return {"dp_value": self.dp_value, "policy_value": self.policy_value.to_dict(),
                "lattice_policy_value": self.lattice_policy_value, "gap": self.gap,
                "gap_std_error": self.policy_value.std_error, "rel_tol": self.rel_tol,
                "tolerance": self.tolerance, "pass": self.passed}


def oracle_gap(scn: Scenario, *, fuel_levels: int = 101, n_paths: int = 4096, seed: int = 0,
               rel_tol: float = 0.01, tolerance: float = 3.0,
               rule: PolicyRule = PolicyRule(monitoring="nodes"),
               budget_bytes: int = DEFAULT_BUDGET, threads=None) -> OracleGap:
    """DP value versus the Monte Carlo value of a node-monitored policy on the same grid.

    ``gap`` is in maximization form (DP minus policy for profit, policy minus
    DP for cost). Passes iff ``-tol SE <= gap <= max(rel_tol |dp|, tol SE)``.
    """
    from .functionals import net_profit, tracking_cost

    if rule.monitoring != "nodes":
        raise InvalidArgument("the lattice comparison uses node-monitored plans")
    lat = build_lattice(scn.shock, scn.grid)
    theta = fuel_levels_on(scn.fuel, scn.grid)
    fg = make_fuel_grid(scn.y, float(theta.max()), fuel_levels)
    sol = dp_solve(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta, budget_bytes=budget_bytes)
    lattice_value = evaluate_policy_on_lattice(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta,
                                               closed_form_targets(scn, fg, rule))
    real = realize(scn, rule, n_paths, seed, threads)
    if scn.tag == "quadratic":
        est = tracking_cost(real.plan, real.shock, scn.delta, sigma=scn.shock.sigma,
                            add_tail=True)
    else:
        est = net_profit(real.plan, real.shock, scn.profits, scn.delta, shock_model=scn.shock,
                         add_tail=True).total
    o = sol.orientation
    gap = o * (sol.value - est.mean)
    se = est.std_error
    passed = -tolerance * se <= gap <= max(rel_tol * abs(sol.value), tolerance * se)
    return OracleGap(sol.value, est, lattice_value, gap, bool(passed), rel_tol, tolerance)

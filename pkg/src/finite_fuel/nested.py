"""Nested Monte Carlo continuations from a Markov state.

A state at grid node ``k`` is the shock value and every firm's pre-jump
(left-limit) level of the unperturbed running supremum. With deterministic fuel
this triple fixes the conditional law of the rest of the plan, so the plan can
be rebuilt on fresh inner paths. All states that start at the same node share
the same inner draws (common random numbers), which keeps the conditional
estimates comparable and lets duplicated states be evaluated once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .integrands import (gradient_integrand, horizon_tails, investment_price, multiplier_density,
                         trapezoid)
from .paths import ArithmeticBrownian, GeometricBrownian, make_grid, simulate_shock
from .scenarios import PolicyRule, Scenario, apply_rule, shadow_levels, theta_at

CONTINUATION_STREAM = 3


@dataclass(frozen=True)
class NestedBudget:
    """Inner simulation budget.

    ``horizon`` is the inner simulation length in units of ``1/delta``; the
    remainder is closed with frozen-plan analytic tails whose size is reported.
    ``chunk_rows`` caps the (state x inner path) rows held in memory at once.
    """

    inner_paths: int = 512
    horizon: float = 12.0
    chunk_rows: int = 8192

    def __post_init__(self):
        if int(self.inner_paths) < 2:
            raise InvalidArgument("need at least two inner paths for a standard error")
        if not self.horizon > 0:
            raise InvalidArgument("horizon must be positive")
        if int(self.chunk_rows) < 1:
            raise InvalidArgument("chunk_rows must be positive")


@dataclass(frozen=True, eq=False)
class Continuation:
    """Per (state, inner path) integrals in the scenario's natural orientation.

    ``gradient[f, s, m]`` is the discounted marginal-value integral for firm
    ``f`` minus the unit investment price at the start node; ``multiplier[s, m]``
    is the integral of the multiplier density from the start node on;
    ``tail_bound[s]`` bounds what the inner horizon leaves out.
    """

    gradient: np.ndarray
    multiplier: np.ndarray
    tail_bound: np.ndarray


def unit_model(scn: Scenario):
    """The scenario's shock started at 1 (GBM) or 0 (ABM), so states can rescale or shift it."""
    if isinstance(scn.shock, GeometricBrownian):
        return GeometricBrownian(1.0, scn.shock.mu, scn.shock.sigma)
    if isinstance(scn.shock, ArithmeticBrownian):
        return ArithmeticBrownian(0.0, scn.shock.sigma)
    raise InvalidArgument(f"unsupported shock model {scn.shock!r}")


def inner_paths(scn: Scenario, budget: NestedBudget, seed: int, stream: tuple, threads=None):
    """Inner unit paths on the scenario's step, with bridge maxima."""
    dt = scn.grid.dt
    n = max(1, int(round(budget.horizon / scn.delta / dt)))
    grid = make_grid(n * dt, n)
    return simulate_shock(unit_model(scn), grid, int(budget.inner_paths), seed, bridge=True,
                          threads=threads, stream=stream)


def _place(scn: Scenario, start: np.ndarray, unit: np.ndarray) -> np.ndarray:
    """Rows ``state x inner`` of the shock started at each state value."""
    if isinstance(scn.shock, GeometricBrownian):
        return (start[:, None, None] * unit[None]).reshape(-1, unit.shape[-1])
    return (start[:, None, None] + unit[None]).reshape(-1, unit.shape[-1])


def node_clock(scn: Scenario, node: int, unit):
    """Discount factors, fuel and fuel right limits on the inner grid started at ``node``."""
    t = node * scn.grid.dt + unit.grid.nodes
    return (np.exp(-scn.delta * t), theta_at(scn.fuel, t), theta_at(scn.fuel, t + scn.grid.dt))


def rebuild(scn: Scenario, rule: PolicyRule, node: int, start: np.ndarray, pre: np.ndarray, unit):
    """Shock rows and the rule's plan on every (state, inner path) pair.

    Column 0 of the plan holds the level just after the start node, so the
    result can go straight into dt-integrals.
    """
    m = unit.n_paths
    theta_rows = node_clock(scn, node, unit)[1][None]
    x = _place(scn, start, unit.values)
    imax = _place(scn, start, unit.interval_max)
    p = np.repeat(pre, m, axis=1)
    shadow, post0 = shadow_levels(scn, rule, x, imax, theta_rows, p)
    plan = apply_rule(scn, rule, shadow, theta_rows, node)
    lead = apply_rule(scn, rule, post0[..., None], theta_rows[..., :1], node)[..., 0]
    plan = plan.copy() if plan is shadow else plan
    plan[..., 0] = lead
    return x, plan


def continuation(scn: Scenario, rule: PolicyRule, node: int, start: np.ndarray, pre: np.ndarray,
                 *, budget: NestedBudget = NestedBudget(), seed: int = 0,
                 stream: tuple = (CONTINUATION_STREAM,), threads=None) -> Continuation:
    """Conditional integrals for states at global node ``node``.

    ``start[s]`` is the shock value and ``pre[f, s]`` the unperturbed pre-jump
    level of firm ``f``. The rule's plan is rebuilt on every inner path.
    """
    scn.require_markov()
    start = np.asarray(start, dtype=float).ravel()
    pre = np.asarray(pre, dtype=float).reshape(scn.n_firms, -1)
    if pre.shape[1] != start.size:
        raise InvalidArgument("one pre-jump level per firm and state is required")
    unit = inner_paths(scn, budget, seed, tuple(stream), threads)
    m, n_cols = unit.n_paths, unit.grid.n_steps + 1
    disc, theta, theta_plus = node_clock(scn, node, unit)
    theta_rows = theta[None]
    price = investment_price(scn, disc[0])

    geometric = isinstance(scn.shock, GeometricBrownian)
    if geometric:
        # X = x_s U factorizes X^alpha, so the powers of U are computed once per node
        powers = [unit.values ** a for a in scn.alphas]
        coef = [disc * b * p * (b * theta) ** -a
                for b, p, a in zip(scn.weights.beta, powers, scn.alphas)]
        total_k = sum(scn.ks)

    s_total = start.size
    per_chunk = max(1, int(budget.chunk_rows) // m)
    grad = np.empty((scn.n_firms, s_total, m))
    lam = np.empty((s_total, m))
    bound = np.empty(s_total)
    for lo in range(0, s_total, per_chunk):
        hi = min(s_total, lo + per_chunk)
        rows = hi - lo
        s0 = start[lo:hi]
        x, plan = rebuild(scn, rule, node, s0, pre[:, lo:hi], unit)
        tail_g, tail_b = horizon_tails(scn, x[:, -1], plan[..., -1], theta[-1], disc[-1])
        if geometric:
            g = np.stack([(s0[:, None, None] ** a * (disc * pw)).reshape(rows * m, n_cols)
                          * lv ** -a for a, pw, lv in zip(scn.alphas, powers, plan)])
            on = unit.values[None] * (total_k * s0[:, None, None]) > theta_plus
            val = sum(s0[:, None, None] ** a * c for a, c in zip(scn.alphas, coef))
            dens = np.where(on, val - scn.delta * disc, 0.0).reshape(rows * m, n_cols)
        else:
            g = gradient_integrand(scn, x, plan, disc)
            dens, _ = multiplier_density(scn, x, theta_rows, theta_plus[None], disc)
        grad[:, lo:hi] = (trapezoid(g, scn.grid.dt) + tail_g - price).reshape(scn.n_firms, rows, m)
        lam[lo:hi] = trapezoid(dens, scn.grid.dt).reshape(rows, m)
        bound[lo:hi] = tail_b.reshape(rows, m).mean(axis=1)
    return Continuation(grad, lam, bound)


def unique_states(start: np.ndarray, pre: np.ndarray):
    """Distinct ``(shock, levels)`` rows: ``(start, pre, inverse, counts)``."""
    key = np.column_stack([np.asarray(start, dtype=float)] + [p for p in np.atleast_2d(pre)])
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return uniq[:, 0], uniq[:, 1:].T.copy(), inverse.ravel(), counts


def stream_for(kind: int, node: int) -> tuple:
    return (CONTINUATION_STREAM, int(kind), int(node))

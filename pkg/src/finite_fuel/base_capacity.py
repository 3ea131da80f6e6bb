"""Closed-form base capacities and a Monte Carlo check of their backward equation.

Two families are covered: ``l = k X`` for Cobb-Douglas profit under a geometric
shock, and ``l = W - c`` for quadratic tracking of an arithmetic Brownian
target. The verifier integrates the discounted marginal profit along the
running supremum of ``l`` started afresh at ``tau`` and subtracts the discount
factor at ``tau``; at the exact constant the mean residual vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import InvalidArgument, TailBoundError
from .estimate import Estimate, MonteCarlo
from .paths import (ArithmeticBrownian, GeometricBrownian, PathEnsemble, ShockModel,
                    make_grid, simulate_shock)
from .profit import CobbDouglas, ProfitModel, QuadraticTracking, check_integrable

CHUNK = 2000
MONITORING = ("continuous", "nodes")


@dataclass(frozen=True)
class ScaledShock:
    """l(t) = k X(t)."""

    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidArgument(f"k must be positive, got {self.k}")


@dataclass(frozen=True)
class ShiftedBrownian:
    """l(t) = W(t) - c."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidArgument(f"c must be positive, got {self.c}")


BaseCapacitySpec = Union[ScaledShock, ShiftedBrownian]


def _check_root_args(sigma, delta):
    if not sigma > 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")


def _roots(b: float, sigma: float, delta: float) -> tuple[float, float]:
    # sigma^2/2 x^2 + b x - delta = 0, cancellation-free pair of roots
    a2 = 0.5 * sigma**2
    disc = math.sqrt(b * b + 2.0 * sigma**2 * delta)
    q = -0.5 * (b + math.copysign(disc, b))
    r1, r2 = q / a2, -delta / q
    neg, pos = (r1, r2) if r1 < 0 else (r2, r1)

    def polish(x):
        # one Newton step in exact rational arithmetic, rounded once
        fx, fa, fb, fd = Fraction(x), Fraction(a2), Fraction(b), Fraction(delta)
        fp = 2 * fa * fx + fb
        return float(fx - (fa * fx * fx + fb * fx - fd) / fp) if fp != 0 else x

    return polish(neg), polish(pos)


def negative_root(b: float, sigma: float, delta: float) -> float:
    """Negative root of sigma^2 x^2 / 2 + b x - delta."""
    _check_root_args(sigma, delta)
    return _roots(float(b), float(sigma), float(delta))[0]


def positive_root(b: float, sigma: float, delta: float) -> float:
    _check_root_args(sigma, delta)
    return _roots(float(b), float(sigma), float(delta))[1]


def cobb_douglas_k(alpha: float, b: float, sigma: float, delta: float) -> float:
    """Scale of the Cobb-Douglas base capacity ``l = k X``.

    ``b`` is the log-drift of the shock. The result satisfies
    ``k**-alpha > delta``; parameters extreme enough to round that away raise.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")
    g = negative_root(b, sigma, delta)
    k = (g / (g - alpha) / delta) ** (1.0 / alpha)
    if not (k > 0 and math.isfinite(k) and k ** -alpha > delta):
        raise InvalidArgument(
            f"base capacity scale is not representable for alpha={alpha}, b={b}, "
            f"sigma={sigma}, delta={delta}"
        )
    return k


def base_capacity_paths(spec: BaseCapacitySpec, shock: PathEnsemble) -> PathEnsemble:
    """Pointwise transform of a shock ensemble into base-capacity paths."""
    if isinstance(spec, ScaledShock):
        if shock.kind == "arithmetic" or np.any(shock.values <= 0):
            raise InvalidArgument("ScaledShock needs a geometric (positive) shock ensemble")
        k = spec.k
        return shock.map(lambda v: k * v)
    if isinstance(spec, ShiftedBrownian):
        if shock.kind == "geometric":
            raise InvalidArgument("ShiftedBrownian needs an arithmetic Brownian shock ensemble")
        c = spec.c
        return shock.map(lambda v: v - c)
    raise InvalidArgument(f"unknown base capacity {spec!r}")


def running_sup_from(level: np.ndarray, interval_max: np.ndarray | None, start: int,
                     monitoring: str = "continuous") -> np.ndarray:
    """Supremum of ``level`` over ``[t_start, t_k)`` for every node ``k >= start``.

    Column ``j`` of the result belongs to node ``start + j``. At ``k = start``
    the window is empty and the value at ``t_start`` is used. ``"nodes"``
    monitoring takes the maximum of nodes ``start .. k-1``; ``"continuous"``
    folds in the sampled maxima of every completed step.
    """
    if monitoring not in MONITORING:
        raise InvalidArgument(f"monitoring must be one of {MONITORING}, got {monitoring!r}")
    head = level[:, start:start + 1]
    if monitoring == "continuous":
        if interval_max is None:
            raise InvalidArgument("continuous monitoring needs interval maxima")
        steps = interval_max[:, start:]
    else:
        steps = level[:, start:-1]
    tail = np.maximum.accumulate(np.maximum(steps, head), axis=1)
    return np.concatenate([head, tail], axis=1)


def integrate(values: np.ndarray, dt: float, rule: str) -> np.ndarray:
    """Row-wise integral over the grid: trapezoid, or left Riemann sum."""
    if values.shape[1] < 2:
        return np.zeros(values.shape[0])
    if rule == "trapezoid":
        return dt * (values[:, 1:-1].sum(axis=1) + 0.5 * (values[:, 0] + values[:, -1]))
    return dt * values[:, :-1].sum(axis=1)


def _rule(monitoring):
    return "trapezoid" if monitoring == "continuous" else "left"


def brownian_max_tail(delta: float, sigma: float, running_max, level):
    """E integral_0^inf delta e^(-delta s) max(m, w + sup of the increments) ds.

    The running maximum of a Brownian motion at an independent exponential time
    is exponential with rate sqrt(2 delta)/sigma, which gives the closed form.
    """
    if sigma == 0:
        return np.asarray(running_max, dtype=float)
    lam = math.sqrt(2.0 * delta) / sigma
    return running_max + np.exp(-lam * (running_max - level)) / lam


def _residual_samples(spec, model, profit, delta, grid, start, shock, monitoring):
    """Per-path residual terms and per-path tail magnitudes for one chunk."""
    t = grid.nodes[start:]
    disc = np.exp(-delta * t)
    rule = _rule(monitoring)
    if isinstance(spec, ScaledShock):
        lvl = spec.k * shock.values
        im = None if shock.interval_max is None else spec.k * shock.interval_max
        sup = running_sup_from(lvl, im, start, monitoring)
        x = shock.values[:, start:]
        a = profit.alpha
        h = disc * (x / sup) ** a
        d = check_integrable(a, model.mu, model.sigma, delta)
        tail = disc[-1] * (x[:, -1] / sup[:, -1]) ** a / d
        return integrate(h, grid.dt, rule) + tail - disc[0], tail
    lvl = shock.values - spec.c
    im = None if shock.interval_max is None else shock.interval_max - spec.c
    sup = running_sup_from(lvl, im, start, monitoring)
    h = delta * disc * sup
    tail = disc[-1] * brownian_max_tail(delta, model.sigma, sup[:, -1], lvl[:, -1])
    return integrate(h, grid.dt, rule) + tail - disc[0] * shock.values[:, start], np.abs(tail)


def _check_pairing(spec, model, profit):
    if isinstance(spec, ScaledShock):
        if not (isinstance(model, GeometricBrownian) and isinstance(profit, CobbDouglas)):
            raise InvalidArgument("ScaledShock pairs with a geometric shock and Cobb-Douglas profit")
    elif isinstance(spec, ShiftedBrownian):
        if not (isinstance(model, ArithmeticBrownian) and isinstance(profit, QuadraticTracking)):
            raise InvalidArgument(
                "ShiftedBrownian pairs with an arithmetic shock and quadratic tracking")
    else:
        raise InvalidArgument(f"unknown base capacity {spec!r}")


def representation_residual(spec: BaseCapacitySpec, model: ShockModel, profit: ProfitModel,
                            delta: float, tau: float, mc: MonteCarlo, *,
                            monitoring: str = "continuous", tail_tol: float = 1e-4,
                            shock: PathEnsemble | None = None) -> Estimate:
    """Mean residual of the backward equation at the deterministic time ``tau``.

    Profit form: E int_tau^T e^(-delta s) R_y(X(s), sup_[tau,s) l) ds - e^(-delta tau).
    Cost form: E int_tau^T delta e^(-delta s) sup_[tau,s) l ds - e^(-delta tau) W(tau).
    The horizon beyond ``t_max`` is closed analytically (frozen supremum for
    the profit form, exact Brownian formula for the cost form). Raises
    ``TailBoundError`` when that correction exceeds ``tail_tol`` relative to
    ``e^(-delta tau)``.

    ``monitoring="continuous"`` samples the supremum between nodes from the
    Brownian bridge and integrates with the trapezoid rule;
    ``monitoring="nodes"`` uses node values only with left Riemann sums.
    """
    _check_pairing(spec, model, profit)
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    grid = mc.grid
    start = grid.index_of(tau)
    bridge = monitoring == "continuous"
    parts, tails = [], []
    if shock is not None:
        if shock.grid != grid:
            raise InvalidArgument("shock ensemble grid differs from the budget grid")
        for lo in range(0, shock.n_paths, CHUNK):
            r, tl = _residual_samples(spec, model, profit, delta, grid, start,
                                      shock.window(slice(lo, lo + CHUNK)), monitoring)
            parts.append(r)
            tails.append(tl)
    else:
        for lo in range(0, mc.n_paths, CHUNK):
            n = min(CHUNK, mc.n_paths - lo)
            ens = simulate_shock(model, grid, n, mc.seed, bridge=bridge,
                                 threads=mc.threads, first_path=lo)
            r, tl = _residual_samples(spec, model, profit, delta, grid, start, ens, monitoring)
            parts.append(r)
            tails.append(tl)
    tail_bound = float(np.concatenate(tails).mean())
    if tail_bound > tail_tol * math.exp(-delta * tau):
        raise TailBoundError(
            f"tail beyond t_max={grid.t_max} is {tail_bound:.3g}, above {tail_tol:g} "
            f"of the discount at tau={tau}; lengthen the horizon"
        )
    return Estimate.from_samples(np.concatenate(parts), tail_bound)


def conditional_residuals(spec: BaseCapacitySpec, model: ShockModel, profit: ProfitModel,
                          delta: float, tau: float, mc: MonteCarlo, *, n_states: int = 100,
                          inner_paths: int = 512, monitoring: str = "continuous"
                          ) -> list[tuple[float, Estimate]]:
    """Residual conditional on each of ``n_states`` simulated states at ``tau``.

    Returns ``(state, estimate)`` pairs; each estimate restarts the shock at the
    sampled state and simulates ``inner_paths`` continuations to ``t_max``.
    """
    _check_pairing(spec, model, profit)
    grid = mc.grid
    start = grid.index_of(tau)
    if start == grid.n_steps:
        raise InvalidArgument("tau must leave at least one step before t_max")
    outer = simulate_shock(model, grid, n_states, mc.seed, threads=mc.threads)
    states = outer.values[:, start]
    inner_grid = make_grid(grid.t_max - grid.nodes[start], grid.n_steps - start)
    scale = math.exp(-delta * grid.nodes[start])
    out = []
    for j, s in enumerate(states):
        m = (GeometricBrownian(float(s), model.mu, model.sigma)
             if isinstance(model, GeometricBrownian) else ArithmeticBrownian(float(s), model.sigma))
        ens = simulate_shock(m, inner_grid, inner_paths, mc.seed,
                             bridge=monitoring == "continuous", threads=mc.threads,
                             stream=(3, start, j))
        r, tl = _residual_samples(spec, m, profit, delta, inner_grid, 0, ens, monitoring)
        out.append((float(s), Estimate.from_samples(scale * r, scale * float(tl.mean()))))
    return out


def default_offset_grid(delta: float):
    """Horizon 15/delta (tail factor about 3e-7) with 40 steps per unit of 1/delta."""
    return make_grid(15.0 / delta, 600)


def quadratic_offset_c(delta: float, mc: MonteCarlo | None = None, *, sigma: float = 1.0,
                       tail_tol: float = 1e-6) -> Estimate:
    """Monte Carlo estimate of E int_0^inf delta e^(-delta s) sup_[0,s) W ds.

    The running maximum is monitored continuously via Brownian-bridge maxima
    and integrated with the trapezoid rule; the stretch beyond ``t_max`` is
    added in closed form. ``tail_bound`` reports the size of that addition's
    random part, ``e^(-delta t_max) sigma / sqrt(2 delta)``.
    """
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    if mc is None:
        mc = MonteCarlo(100_000, default_offset_grid(delta))
    grid = mc.grid
    if math.exp(-delta * grid.t_max) >= tail_tol:
        raise TailBoundError(
            f"exp(-delta t_max) = {math.exp(-delta * grid.t_max):.3g} is not below {tail_tol:g}; "
            f"need t_max > {math.log(1 / tail_tol) / delta:.4g}"
        )
    model = ArithmeticBrownian(0.0, sigma)
    disc = np.exp(-delta * grid.nodes)
    parts = []
    for lo in range(0, mc.n_paths, CHUNK):
        n = min(CHUNK, mc.n_paths - lo)
        ens = simulate_shock(model, grid, n, mc.seed, bridge=True, threads=mc.threads,
                             first_path=lo)
        sup = running_sup_from(ens.values, ens.interval_max, 0)
        body = integrate(delta * disc * sup, grid.dt, "trapezoid")
        tail = disc[-1] * brownian_max_tail(delta, sigma, sup[:, -1], ens.values[:, -1])
        parts.append(body + tail)
    bound = math.exp(-delta * grid.t_max) * sigma / math.sqrt(2.0 * delta)
    return Estimate.from_samples(np.concatenate(parts), bound)

"""Time grids, shock and fuel models, and reproducible path ensembles.

Every path draws from its own counter-based stream keyed by
``(master_seed, stream_id, path_index)``, so an ensemble is bit-identical no
matter how the paths are split across worker threads.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidArgument

# stream identifiers; any tuple of non-negative ints is a valid stream
SHOCK_STREAM = (1,)
FUEL_STREAM = (2,)

_BLOCK = 512


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    n_steps: int

    def __post_init__(self):
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise InvalidArgument(f"t_max must be positive, got {self.t_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgument(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.t_max
        return t

    def index_of(self, t: float) -> int:
        """Return the node index of ``t``; raise if ``t`` is not a grid node."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, self.t_max):
            raise InvalidArgument(f"time {t} is not a node of the grid")
        return k


def make_grid(t_max: float, n_steps: int) -> TimeGrid:
    return TimeGrid(float(t_max), int(n_steps))


@dataclass(frozen=True)
class GeometricBrownian:
    """X(t) = x0 exp((mu - sigma^2/2) t + sigma W(t)); ``mu`` is the mean growth rate."""

    x0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.x0 > 0:
            raise InvalidArgument(f"x0 must be positive, got {self.x0}")
        if not self.sigma >= 0:
            raise InvalidArgument(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def b(self) -> float:
        """Log-drift, the exponent convention ``X = exp(b t + sigma W)``."""
        return self.mu - 0.5 * self.sigma**2

    @property
    def initial(self) -> float:
        return self.x0


@dataclass(frozen=True)
class ArithmeticBrownian:
    """W(t) = w0 + sigma B(t). ``sigma`` defaults to a standard Brownian motion."""

    w0: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidArgument(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def initial(self) -> float:
        return self.w0


ShockModel = Union[GeometricBrownian, ArithmeticBrownian]


@dataclass(frozen=True)
class Constant:
    theta0: float

    def __post_init__(self):
        if not self.theta0 > 0:
            raise InvalidArgument(f"theta0 must be positive, got {self.theta0}")

    def at(self, t):
        return np.full(np.shape(t), float(self.theta0)) if np.ndim(t) else float(self.theta0)


@dataclass(frozen=True)
class AffineDeterministic:
    theta0: float
    rate: float

    def __post_init__(self):
        if not self.theta0 > 0:
            raise InvalidArgument(f"theta0 must be positive, got {self.theta0}")
        if not self.rate >= 0:
            raise InvalidArgument(f"rate must be nonnegative, got {self.rate}")

    def at(self, t):
        return self.theta0 + self.rate * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class RunningMaxGeometric:
    """theta(t) = theta0 v sup_{s<t} xi(s), xi an independent GBM started at theta0."""

    theta0: float
    mu_f: float
    sigma_f: float

    def __post_init__(self):
        if not self.theta0 > 0:
            raise InvalidArgument(f"theta0 must be positive, got {self.theta0}")
        if not self.sigma_f > 0:
            raise InvalidArgument(f"sigma_f must be positive, got {self.sigma_f}")


FuelModel = Union[Constant, AffineDeterministic, RunningMaxGeometric]


def is_deterministic(fuel: FuelModel) -> bool:
    return isinstance(fuel, (Constant, AffineDeterministic))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Per-path values on a grid.

    ``interval_max``, when present, holds the supremum of the continuous path
    over each step ``[t_k, t_{k+1}]`` (shape ``n_paths x n_steps``).
    """

    grid: TimeGrid
    values: np.ndarray
    master_seed: int = 0
    interval_max: np.ndarray | None = field(default=None)
    kind: str = ""  # "geometric", "arithmetic" or "" when unknown

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.n_steps + 1:
            raise InvalidArgument(
                f"values must have shape (n_paths, {self.grid.n_steps + 1}), got {v.shape}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.interval_max is not None:
            m = np.asarray(self.interval_max, dtype=float)
            if m.shape != (v.shape[0], self.grid.n_steps):
                raise InvalidArgument("interval_max shape does not match the ensemble")
            m.setflags(write=False)
            object.__setattr__(self, "interval_max", m)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "PathEnsemble":
        """Apply a nondecreasing pointwise transform (keeps interval maxima valid)."""
        im = None if self.interval_max is None else fn(self.interval_max)
        return PathEnsemble(self.grid, fn(self.values), self.master_seed, im)

    def window(self, rows) -> "PathEnsemble":
        im = None if self.interval_max is None else self.interval_max[rows]
        return PathEnsemble(self.grid, self.values[rows], self.master_seed, im, self.kind)

    def same_layout(self, other: "PathEnsemble") -> bool:
        return self.grid == other.grid and self.values.shape == other.values.shape

    def to_csv(self, path) -> None:
        write_csv(path, self.grid.nodes, self.values)

    @classmethod
    def from_csv(cls, path, master_seed: int = 0) -> "PathEnsemble":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        nodes = np.array([float(s) for s in rows[0]])
        values = np.array([[float(s) for s in r] for r in rows[1:]])
        grid = make_grid(nodes[-1], len(nodes) - 1)
        return cls(grid, values, master_seed)


def write_csv(path, nodes: np.ndarray, values: np.ndarray) -> None:
    fmt = "{:.17g}".format
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([fmt(t) for t in nodes])
        for row in values:
            w.writerow([fmt(v) for v in row])


# ---------------------------------------------------------------- random streams


@lru_cache(maxsize=256)
def _stream_key(master_seed: int, stream: tuple) -> tuple:
    ss = np.random.SeedSequence(master_seed, spawn_key=stream)
    return tuple(int(v) for v in ss.generate_state(2, np.uint64))


def stream_generator(master_seed: int, stream: Sequence[int], index: int) -> np.random.Generator:
    """Counter-based generator for member ``index`` of ``stream``.

    The Philox key encodes ``(master_seed, stream)``; the high counter word
    holds ``index``, which leaves 2**192 draws per member before overlap.
    """
    if master_seed < 0 or index < 0:
        raise InvalidArgument("seeds and stream indices must be nonnegative")
    key = np.array(_stream_key(int(master_seed), tuple(int(s) for s in stream)), dtype=np.uint64)
    counter = np.array([0, 0, 0, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("FUEL_DEFAULT_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def _draw(master_seed, stream, n_paths, n_cols, uniforms, threads, offset=0):
    z = np.empty((n_paths, n_cols))
    u = np.empty((n_paths, n_cols)) if uniforms else None

    def block(start):
        for i in range(start, min(start + _BLOCK, n_paths)):
            g = stream_generator(master_seed, stream, offset + i)
            z[i] = g.standard_normal(n_cols)
            if uniforms:
                u[i] = g.random(n_cols)

    starts = range(0, n_paths, _BLOCK)
    workers = resolve_threads(threads)
    if workers == 1:
        for s in starts:
            block(s)
    else:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(block, starts))
    return z, u


def bridge_max(left: np.ndarray, right: np.ndarray, sigma: float, dt: float,
               u: np.ndarray) -> np.ndarray:
    """Sample the maximum of a Brownian bridge between ``left`` and ``right``.

    Exact for Brownian motion with constant drift and volatility ``sigma``
    conditioned on its endpoints; ``u`` are independent uniforms.
    """
    if sigma == 0.0:
        return np.maximum(left, right)
    # 1 - u lies in (0, 1]; log(1-u) <= 0
    spread = (right - left) ** 2 - 2.0 * sigma**2 * dt * np.log1p(-u)
    return 0.5 * (left + right + np.sqrt(spread))


def brownian_increments(model: ShockModel, dt: float, z: np.ndarray) -> np.ndarray:
    """Per-step increments of the driving log (GBM) or level (ABM) process."""
    if isinstance(model, GeometricBrownian):
        return model.b * dt + model.sigma * math.sqrt(dt) * z
    return model.sigma * math.sqrt(dt) * z


def shock_from_increments(model: ShockModel, start: np.ndarray, incr: np.ndarray,
                          dt: float, u: np.ndarray | None):
    """Build node values (and optional interval maxima) from increments.

    ``start`` holds per-row initial values of the shock itself.
    """
    start = np.asarray(start, dtype=float).reshape(-1, 1) * np.ones((incr.shape[0], 1))
    geometric = isinstance(model, GeometricBrownian)
    base = np.log(start) if geometric else start
    level = np.concatenate([base, base + np.cumsum(incr, axis=1)], axis=1)
    imax = None
    if u is not None:
        imax = bridge_max(level[:, :-1], level[:, 1:], model.sigma, dt, u)
    if geometric:
        level = np.exp(level)
        if imax is not None:
            imax = np.exp(imax)
    return level, imax


def simulate_shock(model: ShockModel, grid: TimeGrid, n_paths: int, seed: int, *,
                   bridge: bool = False, threads: int | None = None,
                   stream: Sequence[int] = SHOCK_STREAM, first_path: int = 0) -> PathEnsemble:
    """Simulate the shock process on ``grid``.

    GBM uses the exact log-Euler recursion; ABM uses exact Gaussian steps.
    With ``bridge=True`` the ensemble also carries the continuous-path maximum
    over every step, sampled from the Brownian-bridge law. ``first_path``
    selects a window of the stream so large ensembles can be built in chunks.
    """
    if int(n_paths) < 1:
        raise InvalidArgument(f"n_paths must be >= 1, got {n_paths}")
    dt = grid.dt
    z, u = _draw(seed, tuple(stream), int(n_paths), grid.n_steps, bridge, threads, first_path)
    values, imax = shock_from_increments(model, np.full(n_paths, model.initial),
                                         brownian_increments(model, dt, z), dt, u)
    kind = "geometric" if isinstance(model, GeometricBrownian) else "arithmetic"
    return PathEnsemble(grid, values, seed, imax, kind)


def simulate_fuel(model: FuelModel, grid: TimeGrid, n_paths: int, seed: int, *,
                  threads: int | None = None) -> PathEnsemble:
    """Simulate the cumulative fuel process; paths are nondecreasing from theta0."""
    if int(n_paths) < 1:
        raise InvalidArgument(f"n_paths must be >= 1, got {n_paths}")
    t = grid.nodes
    if isinstance(model, Constant):
        values = np.full((n_paths, t.size), float(model.theta0))
    elif isinstance(model, AffineDeterministic):
        values = np.broadcast_to(model.at(t), (n_paths, t.size)).copy()
        values[:, 0] = model.theta0
    elif isinstance(model, RunningMaxGeometric):
        xi_model = GeometricBrownian(model.theta0, model.mu_f, model.sigma_f)
        z, _ = _draw(seed, FUEL_STREAM, int(n_paths), grid.n_steps, False, threads)
        xi, _ = shock_from_increments(xi_model, np.full(n_paths, model.theta0),
                                      brownian_increments(xi_model, grid.dt, z), grid.dt, None)
        # left-continuous: node k sees xi at nodes 0..k-1 only
        prior = np.maximum.accumulate(xi[:, :-1], axis=1)
        values = np.concatenate([np.full((n_paths, 1), model.theta0),
                                 np.maximum(model.theta0, prior)], axis=1)
    else:
        raise InvalidArgument(f"unknown fuel model {model!r}")
    return PathEnsemble(grid, values, seed)

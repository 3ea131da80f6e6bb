"""Monte Carlo estimates and simulation budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .paths import TimeGrid


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_paths: int
    tail_bound: float = 0.0

    def __post_init__(self):
        if not self.std_error >= 0:
            raise InvalidArgument(f"std_error must be nonnegative, got {self.std_error}")
        if not self.tail_bound >= 0:
            raise InvalidArgument(f"tail_bound must be nonnegative, got {self.tail_bound}")

    @classmethod
    def from_samples(cls, samples, tail_bound: float = 0.0) -> "Estimate":
        x = np.asarray(samples, dtype=float).ravel()
        n = x.size
        if n == 0:
            raise InvalidArgument("cannot estimate from an empty sample")
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), se, int(n), float(tail_bound))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error,
                "n_paths": self.n_paths, "tail_bound": self.tail_bound}


def combined_se(*ses: float) -> float:
    return math.sqrt(sum(s * s for s in ses))


@dataclass(frozen=True)
class MonteCarlo:
    """Outer simulation budget: path count, grid and master seed."""

    n_paths: int
    grid: TimeGrid
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise InvalidArgument(f"n_paths must be >= 1, got {self.n_paths}")
        if self.seed < 0:
            raise InvalidArgument("seed must be nonnegative")

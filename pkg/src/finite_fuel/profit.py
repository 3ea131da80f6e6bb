"""Operating profit and tracking-cost primitives plus their discounted moments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import IntegrabilityViolation, InvalidArgument

MAXIMIZE = 1
MINIMIZE = -1


@dataclass(frozen=True)
class CobbDouglas:
    """R(x, y) = x^alpha y^(1-alpha) / (1-alpha)."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgument(f"alpha must lie in (0, 1), got {self.alpha}")

    orientation = MAXIMIZE


@dataclass(frozen=True)
class QuadraticTracking:
    """Running cost (x - y)^2 / 2, to be minimized."""

    orientation = MINIMIZE


ProfitModel = Union[CobbDouglas, QuadraticTracking]


@dataclass(frozen=True)
class Discount:
    delta: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidArgument(f"delta must be positive, got {self.delta}")

    def factor(self, t):
        return np.exp(-self.delta * np.asarray(t, dtype=float))


def _scalar_or_array(v):
    return float(v) if np.ndim(v) == 0 else v


def profit_value(model: ProfitModel, x, y):
    """Operating profit (Cobb-Douglas) or running cost (quadratic tracking)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise InvalidArgument("capacity y must be nonnegative")
    if isinstance(model, CobbDouglas):
        if np.any(x <= 0):
            raise InvalidArgument("Cobb-Douglas profit needs x > 0")
        a = model.alpha
        return _scalar_or_array(x**a * y ** (1.0 - a) / (1.0 - a))
    if isinstance(model, QuadraticTracking):
        return _scalar_or_array(0.5 * (x - y) ** 2)
    raise InvalidArgument(f"unknown profit model {model!r}")


def marginal_profit(model: ProfitModel, x, y):
    """Derivative in y: x^alpha y^-alpha, or y - x for the tracking cost."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(model, CobbDouglas):
        if np.any(y <= 0):
            raise InvalidArgument("marginal profit is singular at y <= 0")
        if np.any(x <= 0):
            raise InvalidArgument("Cobb-Douglas profit needs x > 0")
        return _scalar_or_array((x / y) ** model.alpha)
    if isinstance(model, QuadraticTracking):
        if np.any(y < 0):
            raise InvalidArgument("capacity y must be nonnegative")
        return _scalar_or_array(y - x)
    raise InvalidArgument(f"unknown profit model {model!r}")


def moment_denominator(alpha: float, mu: float, sigma: float, delta: float) -> float:
    """delta - mu alpha + sigma^2 alpha (1 - alpha) / 2; positivity is required."""
    return (delta - mu * alpha) + 0.5 * sigma**2 * alpha * (1.0 - alpha)


def check_integrable(alpha: float, mu: float, sigma: float, delta: float) -> float:
    d = moment_denominator(alpha, mu, sigma, delta)
    if not d > 0:
        raise IntegrabilityViolation(
            f"discounted moment diverges: denominator {d:.6g} <= 0 "
            f"(alpha={alpha}, mu={mu}, sigma={sigma}, delta={delta})"
        )
    return d


def discounted_power_moment(x, alpha: float, mu: float, sigma: float, delta: float):
    """E integral_0^inf e^(-delta s) X(s)^alpha ds for a GBM started at x."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    d = check_integrable(alpha, mu, sigma, delta)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidArgument("x must be positive")
    return _scalar_or_array(x**alpha / d)

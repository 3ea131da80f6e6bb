"""Running-supremum investment plans, N-firm allocation and hitting times.

Plans are stored left-continuously: the value at node ``k`` is the level held
just before ``t_k``, so node 0 is the initial capacity and the jump decided at
``t_k`` appears at node ``k + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleInitialization, InvalidArgument
from .paths import PathEnsemble, TimeGrid, write_csv

NEVER = -1


@dataclass(frozen=True, eq=False)
class InvestmentPlan:
    """Cumulative investment of every firm: ``values[firm, path, node]``."""

    grid: TimeGrid
    y: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or v.shape[0] != len(self.y) or v.shape[2] != self.grid.n_steps + 1:
            raise InvalidArgument(f"plan values have shape {v.shape}, inconsistent with "
                                  f"{len(self.y)} firms on {self.grid.n_steps} steps")
        if any(not yi >= 0 for yi in self.y):
            raise InvalidArgument("initial capacities must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "y", tuple(float(yi) for yi in self.y))

    @property
    def n_firms(self) -> int:
        return self.values.shape[0]

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]

    def aggregate(self) -> np.ndarray:
        return self.values.sum(axis=0) if self.n_firms > 1 else self.values[0]

    def increments(self) -> np.ndarray:
        """Jumps ``nu(t_{k+1}) - nu(t_k)`` attributed to node ``k``."""
        return np.diff(self.values, axis=2)

    def firm(self, i: int) -> PathEnsemble:
        return PathEnsemble(self.grid, self.values[i])

    def to_csv(self, path_for_firm) -> list:
        """Write one CSV per firm; ``path_for_firm(i)`` names each file."""
        out = []
        for i in range(self.n_firms):
            p = path_for_firm(i)
            write_csv(p, self.grid.nodes, self.values[i])
            out.append(p)
        return out


@dataclass(frozen=True)
class AllocationWeights:
    beta: tuple

    def __post_init__(self):
        b = tuple(float(v) for v in self.beta)
        if not b or any(not 0.0 < v <= 1.0 for v in b) or (len(b) > 1 and max(b) >= 1.0):
            raise InvalidArgument(f"weights must lie in (0, 1), got {b}")
        if abs(math.fsum(b) - 1.0) > 1e-12:
            raise InvalidArgument(f"weights must sum to 1, got {math.fsum(b)!r}")
        object.__setattr__(self, "beta", b)


def allocation_weights(k: Sequence[float]) -> AllocationWeights:
    """Fractions ``k_i / sum_j k_j`` of the common fuel assigned to each firm."""
    k = [float(v) for v in k]
    if not k or any(not v > 0 for v in k):
        raise InvalidArgument(f"every k_i must be positive, got {k}")
    total = math.fsum(k)
    if len(k) == 1:
        return AllocationWeights((1.0,))
    # multiples of 2^-52 add without rounding, so the weights sum to exactly 1
    unit = 2.0 ** -52
    head = [max(1.0, round(v / total / unit)) * unit for v in k[:-1]]
    return AllocationWeights(tuple(head) + (1.0 - math.fsum(head),))


def _check_pair(l: PathEnsemble, theta: PathEnsemble):
    if not l.same_layout(theta):
        raise InvalidArgument("base capacity and fuel ensembles must share grid and path count")


def _candidates(l: PathEnsemble, cap: np.ndarray, monitoring: str) -> np.ndarray:
    """Per-step candidate level ``(l ^ cap)`` realized as the jump target of node k+1."""
    if monitoring == "nodes":
        return np.minimum(l.values[:, :-1], cap[:, :-1])
    if monitoring == "continuous":
        if l.interval_max is None:
            raise InvalidArgument("continuous monitoring needs interval maxima on the base capacity")
        # the cap is nondecreasing, so its right end bounds it over the step
        return np.minimum(l.interval_max, cap[:, 1:])
    raise InvalidArgument(f"unknown monitoring {monitoring!r}")


def _running_sup(cand: np.ndarray, y: float) -> np.ndarray:
    n = cand.shape[0]
    body = np.maximum(np.maximum.accumulate(cand, axis=1), y)
    return np.concatenate([np.full((n, 1), y), body], axis=1)


def running_sup_policy(l: PathEnsemble, theta: PathEnsemble, y: float, *,
                       monitoring: str = "nodes") -> InvestmentPlan:
    """Single-firm plan: level ``max(y, sup_{s<t} min(l(s), theta(s)))``.

    With ``"nodes"`` node ``k`` holds ``max(y, max_{j<k} min(l_j, theta_j))``.
    ``"continuous"`` replaces ``l_j`` by the path maximum over ``[t_j, t_{j+1}]``
    and ``theta_j`` by ``theta_{j+1}``.
    """
    _check_pair(l, theta)
    if not y >= 0:
        raise InvalidArgument(f"initial capacity must be nonnegative, got {y}")
    cand = _candidates(l, theta.values, monitoring)
    return InvestmentPlan(l.grid, (float(y),), _running_sup(cand, float(y))[None])


def _cap_shrink(n_firms: int) -> float:
    # keeps sum_i fl(beta_i theta) <= theta in floating point
    return 1.0 if n_firms == 1 else 1.0 - 8.0 * n_firms * np.finfo(float).eps


def firm_caps(beta: AllocationWeights, theta: np.ndarray) -> list:
    s = _cap_shrink(len(beta.beta))
    return [b * s * theta for b in beta.beta]


def nfirm_policy(l: Sequence[PathEnsemble], beta: AllocationWeights, theta: PathEnsemble,
                 y: Sequence[float], *, monitoring: str = "nodes") -> InvestmentPlan:
    """Planner's plan: firm ``i`` follows ``max(y_i, sup_{u<t} min(l_i(u), beta_i theta(u)))``.

    Each cap is shrunk by a few ulps when ``N > 1`` so the aggregate never
    exceeds the fuel in floating point.
    """
    l = list(l)
    y = [float(v) for v in y]
    if not (len(l) == len(y) == len(beta.beta)):
        raise InvalidArgument("need one base capacity, weight and initial level per firm")
    for e in l:
        _check_pair(e, theta)
    if any(not v >= 0 for v in y):
        raise InvalidArgument("initial capacities must be nonnegative")
    theta0 = theta.values[:, 0]
    if len(y) > 1 and np.any(math.fsum(y) >= theta0):
        raise InfeasibleInitialization(
            f"initial capacities sum to {math.fsum(y)!r}, not below the initial fuel {theta0.min()!r}")
    caps = firm_caps(beta, theta.values)
    rows = []
    for li, cap, yi, bi in zip(l, caps, y, beta.beta):
        if len(y) > 1 and np.any(yi > cap[:, 0]):
            raise InfeasibleInitialization(
                f"initial capacity {yi!r} exceeds the firm's fuel share {bi!r} * theta0; "
                "the allocation would breach the common constraint")
        rows.append(_running_sup(_candidates(li, cap, monitoring), yi))
    return InvestmentPlan(theta.grid, tuple(y), np.stack(rows))


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    excess: np.ndarray             # per path max_k (sum_i nu_i - theta)^+
    excess_node: np.ndarray        # per path first node with positive excess, NEVER if none
    monotonicity_node: np.ndarray  # per (firm, path) first decreasing step, NEVER if none
    initial_mismatch: np.ndarray   # per firm count of paths with nu_i(0) != y_i

    @property
    def admissible(self) -> bool:
        return (not np.any(self.excess > 0) and np.all(self.monotonicity_node == NEVER)
                and not np.any(self.initial_mismatch))

    def summary(self) -> dict:
        return {
            "admissible": bool(self.admissible),
            "max_excess": float(self.excess.max(initial=0.0)),
            "paths_with_excess": int(np.count_nonzero(self.excess > 0)),
            "monotonicity_violations": int(np.count_nonzero(self.monotonicity_node != NEVER)),
            "initial_mismatches": int(self.initial_mismatch.sum()),
        }


def _first_true(mask: np.ndarray) -> np.ndarray:
    hit = mask.any(axis=-1)
    return np.where(hit, mask.argmax(axis=-1), NEVER)


def admissibility_report(plan: InvestmentPlan, theta: PathEnsemble) -> AdmissibilityReport:
    """Exact (no tolerance) check of the fuel constraint, monotonicity and initial levels."""
    if theta.grid != plan.grid or theta.n_paths != plan.n_paths:
        raise InvalidArgument("plan and fuel must share grid and path count")
    over = plan.aggregate() - theta.values
    excess = np.maximum(over, 0.0).max(axis=1)
    y = np.asarray(plan.y)[:, None]
    return AdmissibilityReport(
        excess=excess,
        excess_node=_first_true(over > 0),
        monotonicity_node=_first_true(np.diff(plan.values, axis=2) < 0),
        initial_mismatch=(plan.values[:, :, 0] != y).sum(axis=1),
    )


@dataclass(frozen=True, eq=False)
class HittingTimes:
    """First-passage node indices per path (``NEVER`` when not hit).

    ``rho`` is the aggregate crossing ``l > theta(.+)``; ``simultaneous`` the
    first node where every firm's ``l_i > beta_i theta(.+)`` (when firm data is
    given). ``censored`` marks hits decided at the final node, where the right
    limit of the fuel is not observed.
    """

    rho: np.ndarray
    censored: np.ndarray
    simultaneous: np.ndarray | None = None

    @property
    def disagreements(self) -> int:
        if self.simultaneous is None:
            return 0
        return int(np.count_nonzero(self.rho != self.simultaneous))


def fuel_right_limit(theta: np.ndarray) -> np.ndarray:
    """theta(t_k +) realized as the node k+1 value; the last node repeats itself."""
    return np.concatenate([theta[:, 1:], theta[:, -1:]], axis=1)


def hitting_times(l_agg: PathEnsemble, theta: PathEnsemble, start: float = 0.0,
                  weights: AllocationWeights | None = None,
                  l_each: Sequence[PathEnsemble] | None = None) -> HittingTimes:
    """First node ``k >= start`` with ``l(t_k) > theta(t_{k+1})`` (strict)."""
    _check_pair(l_agg, theta)
    k0 = l_agg.grid.index_of(start)
    right = fuel_right_limit(theta.values)
    rho = _first_true(l_agg.values[:, k0:] > right[:, k0:])
    rho = np.where(rho == NEVER, NEVER, rho + k0)
    censored = rho == l_agg.grid.n_steps
    simul = None
    if l_each is not None:
        if weights is None or len(weights.beta) != len(l_each):
            raise InvalidArgument("per-firm hitting times need matching weights")
        mask = np.ones_like(right[:, k0:], dtype=bool)
        for li, b in zip(l_each, weights.beta):
            _check_pair(li, theta)
            mask &= li.values[:, k0:] > b * right[:, k0:]
        simul = _first_true(mask)
        simul = np.where(simul == NEVER, NEVER, simul + k0)
    return HittingTimes(rho, censored, simul)

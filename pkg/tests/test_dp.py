import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finite_fuel.base_capacity import cobb_douglas_k
from finite_fuel.dp import (BudgetExceeded, build_lattice, closed_form_targets, dp_solve,
                            evaluate_policy_on_lattice, fuel_levels_on, make_fuel_grid,
                            oracle_gap, required_bytes)
from finite_fuel.errors import InvalidArgument, UnstableDiscretization
from finite_fuel.paths import (AffineDeterministic, ArithmeticBrownian, Constant,
                               GeometricBrownian, make_grid)
from finite_fuel.profit import CobbDouglas, QuadraticTracking
from finite_fuel.scenarios import PolicyRule, Scenario


def cobb_scenario(alphas=(0.5,), n_steps=60, t_max=12.0, fuel=None):
    shock = GeometricBrownian(1.0, 0.0, 0.3)
    ks = [cobb_douglas_k(a, shock.b, shock.sigma, 1.0) for a in alphas]
    tag = "cobb-single" if len(alphas) == 1 else "cobb-nfirm"
    fuel = fuel or Constant(2 * sum(ks))
    return Scenario(tag, shock, fuel, 1.0, tuple(0.25 * k for k in ks),
                    make_grid(t_max, n_steps), alphas)


def solve(scn, m):
    lat = build_lattice(scn.shock, scn.grid)
    fg = make_fuel_grid(scn.y, float(fuel_levels_on(scn.fuel, scn.grid).max()), m)
    return lat, fg, dp_solve(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta)


def test_lattice_defining_formulas():
    lat = build_lattice(GeometricBrownian(1.0, 0.05, 0.3), make_grid(1.0, 100))
    u, d = math.exp(0.03), math.exp(-0.03)
    assert lat.up == pytest.approx(u, rel=1e-15) and lat.down == pytest.approx(d, rel=1e-15)
    assert lat.p == pytest.approx((math.exp(0.0005) - d) / (u - d), rel=1e-12)
    assert all(lat.n_nodes(k) == k + 1 == lat.values(k).size for k in (0, 1, 7, 100))


def test_arithmetic_lattice_steps():
    lat = build_lattice(ArithmeticBrownian(0.0, 2.0), make_grid(1.0, 4))
    assert lat.up == pytest.approx(1.0) and lat.down == pytest.approx(-1.0) and lat.p == 0.5


@pytest.mark.parametrize("n", [100, 400])
def test_lattice_mean_matches_growth(n):
    lat = build_lattice(GeometricBrownian(2.0, 0.08, 0.4), make_grid(5.0, n))
    assert abs(lat.mean(n) / (2.0 * math.exp(0.4)) - 1) <= 1e-3


def test_unstable_lattice_rejected():
    with pytest.raises(UnstableDiscretization):
        build_lattice(GeometricBrownian(1.0, 5.0, 0.01), make_grid(1.0, 2))


def test_deterministic_tracking_never_invests():
    grid = make_grid(5.0, 50)
    lat = build_lattice(ArithmeticBrownian(0.0, 0.0), grid)
    fg = make_fuel_grid((0.0,), 1.0, 11)
    sol = dp_solve(lat, Constant(1.0), QuadraticTracking(), (0.0,), fg, 1.0)
    assert sol.value == 0.0
    assert all(np.all(p[0][:, 0] == 0) for p in sol.policy)


def test_deterministic_cobb_first_jump_matches_calculus():
    # X == 1: revenue at the new level runs from t_1 on, so the discrete
    # maximizer of 2 sqrt(y) S - y is S^2 with S the discounted time left.
    grid = make_grid(20.0, 1000)
    lat = build_lattice(GeometricBrownian(1.0, 0.0, 0.0), grid)
    fg = make_fuel_grid((0.25,), 3.0, 61)
    sol = dp_solve(lat, Constant(3.0), CobbDouglas(0.5), (0.25,), fg, 1.0)
    s = sum(math.exp(-t) * grid.dt for t in grid.nodes[1:-1]) + math.exp(-grid.t_max)
    first = sol.first_levels()[0]
    assert abs(first - s * s) <= fg.step
    assert abs(first - 1.0) <= fg.step


def test_dp_dominates_the_closed_form_policy_exactly():
    scn = cobb_scenario()
    lat, fg, sol = solve(scn, 41)
    closed = evaluate_policy_on_lattice(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta,
                                        closed_form_targets(scn, fg))
    assert sol.value >= closed
    assert sol.value - closed < 0.01 * sol.value


@settings(max_examples=20)
@given(scale=st.floats(0.2, 4.0), cap=st.floats(0.05, 1.0))
def test_dp_dominates_random_threshold_policies(scale, cap):
    scn = cobb_scenario(n_steps=30)
    lat, fg, sol = solve(scn, 21)
    theta = fuel_levels_on(scn.fuel, scn.grid)

    def targets(k, x, current):
        level = np.minimum(scale * scn.ks[0] * x, cap * theta[k])
        return (np.maximum(current[0], fg.floor_index(0, level)),)

    other = evaluate_policy_on_lattice(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta, targets)
    assert sol.value >= other - 1e-12 * abs(other)


def test_refining_the_fuel_grid_never_loses_value():
    scn = cobb_scenario(n_steps=40)
    coarse = solve(scn, 21)[2].value
    fine = solve(scn, 41)[2].value
    assert fine >= coarse - 1e-12


def test_symmetric_firms_get_symmetric_policies():
    scn = cobb_scenario((0.5, 0.5), n_steps=20, fuel=AffineDeterministic(3.0, 0.2))
    _, fg, sol = solve(scn, 15)
    # joint-cap ties may split one step either way
    for a, b in sol.policy:
        assert np.max(np.abs(a.astype(int) - np.swapaxes(b, 1, 2))) <= 1


def test_budget_guard_reports_requirement():
    scn = cobb_scenario((0.3, 0.7), n_steps=200)
    lat = build_lattice(scn.shock, scn.grid)
    fg = make_fuel_grid(scn.y, scn.fuel.theta0, 101)
    with pytest.raises(BudgetExceeded) as err:
        dp_solve(lat, scn.fuel, scn.profits, scn.y, fg, scn.delta, budget_bytes=1 << 20)
    assert err.value.required_bytes == required_bytes(200, 101, 2)


def test_fuel_grid_validation():
    with pytest.raises(InvalidArgument):
        make_fuel_grid((0.5,), 0.4, 11)
    with pytest.raises(InvalidArgument):
        make_fuel_grid((0.1, 0.1, 0.1), 1.0, 11)


def test_oracle_gap_flags_never_investing():
    scn = cobb_scenario(n_steps=100, t_max=20.0)
    gap = oracle_gap(scn, fuel_levels=41, n_paths=2048,
                     rule=PolicyRule(frozen=True, monitoring="nodes"))
    assert gap.gap > 3 * gap.policy_value.std_error and not gap.passed


def test_policy_table_csv(tmp_path):
    scn = cobb_scenario(n_steps=4)
    _, _, sol = solve(scn, 5)
    path = tmp_path / "policy.csv"
    sol.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "step,node,level_0,increment_0"
    assert len(rows) == 1 + sum((k + 1) * 5 for k in range(4))

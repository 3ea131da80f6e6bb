import numpy as np
import pytest
from hypothesis import given, strategies as st

from finite_fuel.base_capacity import ScaledShock, base_capacity_paths, cobb_douglas_k
from finite_fuel.errors import InfeasibleInitialization, InvalidArgument
from finite_fuel.paths import (AffineDeterministic, Constant, GeometricBrownian, PathEnsemble,
                               RunningMaxGeometric, make_grid, simulate_fuel, simulate_shock)
from finite_fuel.policy import (NEVER, InvestmentPlan, admissibility_report, allocation_weights,
                                hitting_times, nfirm_policy, running_sup_policy)

G = make_grid(1.0, 10)


def flat(v, n_paths=2, grid=G):
    return PathEnsemble(grid, np.full((n_paths, grid.n_steps + 1), float(v)))


def test_running_sup_examples():
    p = running_sup_policy(flat(2), flat(5), 1.0).values[0]
    assert np.all(p[:, 0] == 1) and np.all(p[:, 1:] == 2)
    p = running_sup_policy(flat(10), flat(5), 1.0).values[0]
    assert np.all(p[:, 0] == 1) and np.all(p[:, 1:] == 5)
    assert np.all(running_sup_policy(flat(0.5), flat(5), 1.0).values == 1.0)


def test_running_sup_uses_strictly_prior_nodes():
    l = PathEnsemble(make_grid(1.0, 3), np.array([[0.0, 3.0, 1.0, 9.0]]))
    p = running_sup_policy(l, flat(5, 1, l.grid), 0.5).values[0, 0]
    assert np.array_equal(p, [0.5, 0.5, 3.0, 3.0])


def test_mismatched_ensembles_rejected():
    with pytest.raises(InvalidArgument):
        running_sup_policy(flat(1, 2), flat(5, 3), 1.0)


def test_allocation_weights():
    assert allocation_weights([2.0, 2.0]).beta == (0.5, 0.5)
    assert allocation_weights([1, 3]).beta == (0.25, 0.75)
    b = allocation_weights([4 / 9, 0.64]).beta
    assert b == pytest.approx((0.40983606557377, 0.59016393442623), abs=1e-12)
    with pytest.raises(InvalidArgument):
        allocation_weights([1.0, 0.0])


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=8))
def test_weights_sum_to_one(k):
    assert abs(sum(allocation_weights(k).beta) - 1.0) <= 1e-12


def test_nfirm_symmetric_cap():
    w = allocation_weights([1, 1])
    p = nfirm_policy([flat(10), flat(10)], w, flat(5), [1, 1]).values
    assert np.allclose(p[:, :, 1:], 2.5, rtol=1e-14, atol=0)
    assert np.all(p[:, :, 1:].sum(axis=0) <= 5.0)


def test_nfirm_reduces_to_single_firm():
    x = simulate_shock(GeometricBrownian(1, 0, 0.4), G, 20, 1)
    th = simulate_fuel(Constant(1.5), G, 20, 1)
    a = nfirm_policy([x], allocation_weights([1.0]), th, [0.3]).values
    b = running_sup_policy(x, th, 0.3).values
    assert np.array_equal(a, b)


def test_nfirm_infeasible_start():
    with pytest.raises(InfeasibleInitialization):
        nfirm_policy([flat(1), flat(1)], allocation_weights([1, 1]), flat(2), [1.0, 1.0])


def test_comonotone_firms_increase_only_at_new_maxima():
    g = make_grid(5.0, 500)
    shock = simulate_shock(GeometricBrownian(1.0, 0.05, 0.3), g, 200, 4)
    ks = [cobb_douglas_k(a, 0.05 - 0.045, 0.3, 1.0) for a in (0.3, 0.7)]
    ls = [base_capacity_paths(ScaledShock(k), shock) for k in ks]
    th = simulate_fuel(Constant(3.0), g, 200, 4)
    plan = nfirm_policy(ls, allocation_weights(ks), th, [0.2, 0.3])
    x = shock.values
    new_max = np.zeros_like(x[:, :-1], dtype=bool)
    new_max[:, 0] = True
    new_max[:, 1:] = x[:, 1:-1] > np.maximum.accumulate(x[:, :-2], axis=1)
    for inc in plan.increments():
        assert not np.any((inc > 0) & ~new_max)


def test_admissibility_faults():
    x = simulate_shock(GeometricBrownian(1, 0, 0.5), G, 30, 2)
    th = simulate_fuel(Constant(1.2), G, 30, 2)
    plan = running_sup_policy(x, th, 0.5)
    assert admissibility_report(plan, th).admissible
    v = plan.values.copy()
    v[0, 3, 4] = 1.5
    rep = admissibility_report(InvestmentPlan(G, plan.y, v), th)
    assert rep.excess[3] == pytest.approx(0.3) and rep.excess_node[3] == 4
    v = plan.values.copy()
    v[0, 1, 6] = v[0, 1, 5] - 0.1
    rep = admissibility_report(InvestmentPlan(G, plan.y, v), th)
    assert not rep.admissible and rep.monotonicity_node[0, 1] == 5


def test_hitting_examples():
    assert np.all(hitting_times(flat(2), flat(5)).rho == NEVER)
    l = PathEnsemble(G, G.nodes[None, :].copy())
    h = hitting_times(l, flat(0.5, 1))
    assert h.rho[0] == 6 and not h.censored[0]
    h = hitting_times(l, flat(0.5, 1), start=0.8)
    assert h.rho[0] == 8
    with pytest.raises(InvalidArgument):
        hitting_times(l, flat(0.5, 1), start=0.33)


def test_hit_at_final_node_is_censored():
    l = PathEnsemble(G, np.where(G.nodes >= 1.0, 9.0, 0.0)[None, :])
    h = hitting_times(l, flat(5, 1))
    assert h.rho[0] == 10 and h.censored[0]


def _draw_scenario(seed):
    r = np.random.default_rng(seed)
    n_firms = int(r.integers(1, 4))
    alphas = r.uniform(0.1, 0.9, n_firms)
    mu, sigma, delta = r.uniform(-0.1, 0.1), r.uniform(0.05, 0.8), r.uniform(0.2, 3.0)
    ks = [cobb_douglas_k(a, mu - sigma**2 / 2, sigma, delta) for a in alphas]
    fuel = [Constant(r.uniform(0.5, 3)), AffineDeterministic(r.uniform(0.5, 3), r.uniform(0, 1)),
            RunningMaxGeometric(r.uniform(0.5, 3), 0.0, r.uniform(0.1, 1))][int(r.integers(3))]
    return n_firms, alphas, mu, sigma, delta, ks, fuel


@pytest.mark.parametrize("seed", range(40))
def test_exact_invariants_random_draws(seed):
    n_firms, alphas, mu, sigma, delta, ks, fuel = _draw_scenario(seed)
    g = make_grid(4.0, 80)
    shock = simulate_shock(GeometricBrownian(1.0, mu, sigma), g, 64, seed, bridge=True)
    th = simulate_fuel(fuel, g, 64, seed)
    w = allocation_weights(ks)
    y = [0.3 * b * fuel.theta0 for b in w.beta]
    ls = [base_capacity_paths(ScaledShock(k), shock) for k in ks]
    for mon in ("nodes", "continuous"):
        plan = nfirm_policy(ls, w, th, y, monitoring=mon)
        assert admissibility_report(plan, th).admissible
    assert abs(sum(w.beta) - 1) <= 1e-12
    assert all(k**-a > delta for k, a in zip(ks, alphas))
    agg = base_capacity_paths(ScaledShock(sum(ks)), shock)
    h = hitting_times(agg, th, 0.0, w, ls)
    assert h.disagreements == 0


@given(st.integers(0, 10**6))
def test_policy_monotone_in_fuel(seed):
    x = simulate_shock(GeometricBrownian(1, 0, 0.5), G, 8, seed)
    lo = simulate_fuel(Constant(1.0), G, 8, seed)
    hi = simulate_fuel(AffineDeterministic(1.0, 0.5), G, 8, seed)
    assert np.all(running_sup_policy(x, lo, 0.2).values <= running_sup_policy(x, hi, 0.2).values)

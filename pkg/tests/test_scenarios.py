import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finite_fuel.errors import InfeasibleInitialization, InvalidArgument, UnsupportedModel
from finite_fuel.paths import (AffineDeterministic, ArithmeticBrownian, Constant, GeometricBrownian,
                               RunningMaxGeometric, make_grid)
from finite_fuel.policy import admissibility_report
from finite_fuel.scenarios import (OPTIMAL, PERTURBATIONS, TAGS, PolicyRule, Scenario,
                                   default_scenario, realize, theta_at, with_rule)

SMALL = make_grid(4.0, 40)


@pytest.mark.parametrize("tag", TAGS)
def test_default_scenarios_build_admissible_plans(tag):
    scn = default_scenario(tag, SMALL)
    real = realize(scn, OPTIMAL, 64, seed=1)
    rep = admissibility_report(real.plan, real.theta)
    assert rep.admissible
    assert np.all(real.plan.values[:, :, 0] == np.asarray(scn.y)[:, None])


@pytest.mark.parametrize("name", sorted(PERTURBATIONS))
@pytest.mark.parametrize("tag", TAGS)
def test_perturbed_plans_stay_admissible(tag, name):
    real = realize(default_scenario(tag, SMALL), PERTURBATIONS[name], 64, seed=2)
    assert admissibility_report(real.plan, real.theta).admissible


def test_validation_errors():
    g = SMALL
    gbm = GeometricBrownian(1.0, 0.0, 0.3)
    with pytest.raises(InvalidArgument):
        Scenario("nope", gbm, Constant(1.0), 1.0, (0.1,), g, (0.5,))
    with pytest.raises(InvalidArgument):
        Scenario("cobb-single", gbm, Constant(1.0), 1.0, (0.1,), g, (1.5,))
    with pytest.raises(InvalidArgument):
        Scenario("quadratic", gbm, Constant(1.0), 1.0, (0.0,), g)
    with pytest.raises(InfeasibleInitialization):
        Scenario("cobb-single", gbm, Constant(1.0), 1.0, (1.0,), g, (0.5,))
    with pytest.raises(InvalidArgument):
        Scenario("cobb-nfirm", gbm, Constant(1.0), 1.0, (0.1,), g, (0.5,))


def test_initial_capacity_above_fuel_share_rejected():
    gbm = GeometricBrownian(1.0, 0.0, 0.3)
    # equal alphas give equal shares; 0.6 exceeds half of theta0 = 1
    with pytest.raises(InfeasibleInitialization):
        Scenario("cobb-nfirm", gbm, Constant(1.0), 1.0, (0.6, 0.1), SMALL, (0.5, 0.5))


def test_markov_requirement():
    gbm = GeometricBrownian(1.0, 0.02, 0.3)
    scn = Scenario("bank-general", gbm, RunningMaxGeometric(1.0, 0.0, 0.2), 1.0, (0.1,), SMALL,
                   (0.5,))
    with pytest.raises(UnsupportedModel):
        scn.require_markov()
    with pytest.raises(UnsupportedModel):
        theta_at(scn.fuel, np.zeros(2))


def test_with_rule_keeps_common_paths():
    real = realize(default_scenario("cobb-single", SMALL), OPTIMAL, 32, seed=3)
    other = with_rule(real, PERTURBATIONS["overshoot"])
    assert other.shock is real.shock
    assert np.all(other.plan.values >= real.plan.values - 1e-15)


def test_frozen_rule_keeps_initial_levels():
    real = realize(default_scenario("quadratic", SMALL), PERTURBATIONS["frozen"], 16, seed=4)
    assert np.all(real.plan_post() == 0.0)


def test_quadratic_offset_defaults_to_closed_form():
    scn = default_scenario("quadratic", SMALL)
    assert scn.offset == pytest.approx(1 / np.sqrt(2))
    assert scn.orientation == -1


@settings(max_examples=30)
@given(a1=st.floats(0.1, 0.9), a2=st.floats(0.1, 0.9), frac=st.floats(0.01, 0.9),
       rate=st.floats(0.0, 0.5), seed=st.integers(0, 2**16))
def test_nfirm_plans_satisfy_fuel_exactly(a1, a2, frac, rate, seed):
    gbm = GeometricBrownian(1.0, 0.0, 0.3)
    scn0 = Scenario("cobb-nfirm", gbm, Constant(1.0), 1.0, (0.01, 0.01), SMALL, (a1, a2))
    beta = scn0.weights.beta
    y = tuple(frac * b for b in beta)
    scn = Scenario("cobb-nfirm", gbm, AffineDeterministic(1.0, rate), 1.0, y, SMALL, (a1, a2))
    real = realize(scn, PolicyRule(), 16, seed=seed)
    agg = real.plan.values.sum(axis=0)
    assert np.all(agg <= real.theta.values)
    assert np.all(np.diff(real.plan.values, axis=2) >= 0)


def test_rule_validation():
    with pytest.raises(InvalidArgument):
        PolicyRule(l_scale=0.0)
    with pytest.raises(InvalidArgument):
        PolicyRule(monitoring="weekly")
    assert OPTIMAL.is_optimal and not PERTURBATIONS["frozen"].is_optimal


def test_quadratic_shock_is_arithmetic():
    scn = default_scenario("quadratic", SMALL)
    assert isinstance(scn.shock, ArithmeticBrownian)

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from finite_fuel.base_capacity import (ScaledShock, ShiftedBrownian, base_capacity_paths,
                                       cobb_douglas_k, conditional_residuals, negative_root,
                                       positive_root, quadratic_offset_c,
                                       representation_residual, running_sup_from)
from finite_fuel.errors import InvalidArgument, TailBoundError
from finite_fuel.estimate import MonteCarlo, combined_se
from finite_fuel.paths import (ArithmeticBrownian, GeometricBrownian, PathEnsemble, make_grid,
                               stream_generator)
from finite_fuel.profit import CobbDouglas, QuadraticTracking


def test_negative_root_examples():
    assert negative_root(0.0, math.sqrt(2), 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert negative_root(0.5, 1.0, 1.0) == pytest.approx(-2.0, abs=1e-15)
    assert positive_root(0.5, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(0.01, 10))
def test_root_residual(b, sigma, delta):
    # evaluated exactly so rounding in the check itself does not count
    fb, fs, fd = Fraction(b), Fraction(sigma), Fraction(delta)
    for g in (negative_root(b, sigma, delta), positive_root(b, sigma, delta)):
        fg = Fraction(g)
        assert abs(fs * fs * fg * fg / 2 + fb * fg - fd) <= 1e-12 * max(1.0, delta)
    assert negative_root(b, sigma, delta) < 0 < positive_root(b, sigma, delta)


def test_root_rejects_zero_volatility():
    with pytest.raises(InvalidArgument):
        negative_root(0.0, 0.0, 1.0)


def test_k_examples():
    assert cobb_douglas_k(0.5, 0.0, math.sqrt(2), 1.0) == pytest.approx(4 / 9, rel=1e-14)
    assert cobb_douglas_k(0.5, 0.5, 1.0, 1.0) == pytest.approx(0.64, rel=1e-14)
    assert cobb_douglas_k(0.5, 0.0, math.sqrt(2), 1.0) ** -0.5 == pytest.approx(1.5, rel=1e-14)


@given(st.floats(0.05, 0.95), st.floats(-1, 1), st.floats(0.05, 2), st.floats(0.05, 5))
def test_k_exceeds_discount_rate(alpha, b, sigma, delta):
    assert cobb_douglas_k(alpha, b, sigma, delta) ** -alpha > delta


@given(st.floats(0.05, 0.95), st.floats(-1, 1), st.floats(0.05, 2))
def test_k_decreases_with_discounting(alpha, b, sigma):
    ks = [cobb_douglas_k(alpha, b, sigma, d) for d in np.linspace(0.1, 4.0, 12)]
    assert all(k1 > k2 for k1, k2 in zip(ks, ks[1:]))


def test_base_capacity_paths():
    g = make_grid(1.0, 2)
    ones = PathEnsemble(g, np.ones((1, 3)), kind="geometric")
    assert np.allclose(base_capacity_paths(ScaledShock(4 / 9), ones).values, 4 / 9)
    w = PathEnsemble(g, np.array([[0.0, 0.5, -0.2]]), kind="arithmetic")
    assert np.allclose(base_capacity_paths(ShiftedBrownian(1.0), w).values, [[-1, -0.5, -1.2]])
    big = PathEnsemble(g, np.ones((5, 3)), kind="geometric")
    assert base_capacity_paths(ScaledShock(2.0), big).values.shape == (5, 3)
    with pytest.raises(InvalidArgument):
        base_capacity_paths(ShiftedBrownian(1.0), ones)
    with pytest.raises(InvalidArgument):
        base_capacity_paths(ScaledShock(1.0), w)


def test_running_sup_windows():
    lvl = np.array([[3.0, 1.0, 2.0, 5.0, 0.0]])
    im = np.array([[3.5, 2.2, 5.1, 5.0]])
    assert np.array_equal(running_sup_from(lvl, None, 0, "nodes"), [[3, 3, 3, 3, 5]])
    assert np.array_equal(running_sup_from(lvl, None, 1, "nodes"), [[1, 1, 2, 5]])
    assert np.array_equal(running_sup_from(lvl, im, 1), [[1, 2.2, 5.1, 5.1]])


def test_degenerate_verifier_vanishes_at_unit_capacity():
    mc = MonteCarlo(3, make_grid(20.0, 2000), seed=1)
    m = GeometricBrownian(1.0, 0.0, 0.0)
    for tau in (0.0, 2.0):
        r = representation_residual(ScaledShock(1.0), m, CobbDouglas(0.5), 1.0, tau, mc)
        assert abs(r.mean) < 1e-5 and r.std_error == 0.0
    r = representation_residual(ScaledShock(4.0), m, CobbDouglas(0.5), 1.0, 0.0, mc)
    assert r.mean == pytest.approx(-0.5, abs=1e-5)


def test_residual_vanishes_at_exact_k_and_flips_when_perturbed():
    m = GeometricBrownian(1.0, 1.0, math.sqrt(2))  # log-drift b = 0
    k = cobb_douglas_k(0.5, m.b, m.sigma, 1.0)
    mc = MonteCarlo(4000, make_grid(20.0, 2000), seed=3)
    r = representation_residual(ScaledShock(k), m, CobbDouglas(0.5), 1.0, 0.0, mc)
    assert abs(r.mean) <= 3 * r.std_error
    hi = representation_residual(ScaledShock(1.5 * k), m, CobbDouglas(0.5), 1.0, 0.0, mc)
    assert hi.mean < -3 * hi.std_error


def test_cost_form_residual_at_exact_offset():
    m = ArithmeticBrownian(0.3, 1.0)
    mc = MonteCarlo(4000, make_grid(15.0, 600), seed=2)
    spec = ShiftedBrownian(1 / math.sqrt(2))
    for tau in (0.0, 3.75):
        r = representation_residual(spec, m, QuadraticTracking(), 1.0, tau, mc)
        assert abs(r.mean) <= 3 * r.std_error
    off = representation_residual(ShiftedBrownian(1.2), m, QuadraticTracking(), 1.0, 0.0, mc)
    assert off.mean < -3 * off.std_error


def test_conditional_residuals_per_state():
    m = GeometricBrownian(1.0, 0.0, 0.3)
    k = cobb_douglas_k(0.5, m.b, m.sigma, 1.0)
    mc = MonteCarlo(1, make_grid(12.0, 600), seed=4)
    out = conditional_residuals(ScaledShock(k), m, CobbDouglas(0.5), 1.0, 3.0, mc,
                                n_states=8, inner_paths=400)
    assert len(out) == 8
    z = [abs(e.mean) / e.std_error for _, e in out]
    assert max(z) < 4.0


def test_residual_tail_error_on_short_horizon():
    m = GeometricBrownian(1.0, 0.0, 0.3)
    mc = MonteCarlo(10, make_grid(2.0, 20), seed=1)
    with pytest.raises(TailBoundError):
        representation_residual(ScaledShock(0.8), m, CobbDouglas(0.5), 1.0, 0.0, mc)


def test_pairing_mismatch_rejected():
    mc = MonteCarlo(10, make_grid(20.0, 20))
    with pytest.raises(InvalidArgument):
        representation_residual(ScaledShock(1.0), ArithmeticBrownian(), CobbDouglas(0.5),
                                1.0, 0.0, mc)


def _offset_oracle(delta, n, seed):
    # running max at an independent exponential time equals |W| there in law
    g = stream_generator(seed, (99,), 0)
    tau = g.exponential(1 / delta, n)
    sample = np.sqrt(tau) * np.abs(g.standard_normal(n))
    return sample.mean(), sample.std(ddof=1) / math.sqrt(n)


@pytest.mark.parametrize("delta,target", [(0.5, 1.0), (2.0, 0.5)])
def test_offset_against_independent_oracle(delta, target):
    mc = MonteCarlo(20_000, make_grid(15.0 / delta, 600), seed=5)
    est = quadratic_offset_c(delta, mc)
    om, ose = _offset_oracle(delta, 200_000, 1)
    assert abs(om - target) < 3 * ose
    assert abs(est.mean - om) < 3 * combined_se(est.std_error, ose)
    assert abs(est.mean - target) < 3 * est.std_error


def test_offset_brownian_scaling():
    e1 = quadratic_offset_c(1.0, MonteCarlo(20_000, make_grid(15.0, 600), seed=8))
    e4 = quadratic_offset_c(4.0, MonteCarlo(20_000, make_grid(15.0 / 4, 600), seed=9))
    assert abs(e4.mean - e1.mean / 2) < 3 * combined_se(e4.std_error, e1.std_error / 2)


def test_offset_horizon_guard():
    with pytest.raises(TailBoundError):
        quadratic_offset_c(1.0, MonteCarlo(10, make_grid(5.0, 50)))

import math

import mpmath as mp
import numpy as np
import pytest

from drfeas.engine import StopReason, diagnose
from drfeas.sets import BaseCircle
from drfeas.spiral import (BracketError, MapVariant, SpiralScene, a_of_t, b_minus, b_plus, bracket, d_derivative,
                           d_second, d_value, dr_spiral_run, f_gap, f_gap_closed_form, generate_tk, map_spiral_run,
                           next_sigma, verify_claims)

# Frozen oracle values. Each comes from an mpmath evaluation of 0.5 ||a(t) - b_-(x)||^2
# at 30-40 digits, minimized by golden-section search (global dense grid for sigma(5),
# local search over the increment bracket for the sequence).
SIGMA_5 = 5.000045626339585828
TK_COUNT_TO_3_5 = 526
TK_101 = 2.7007876264947809698
TK_LAST_3_5 = 3.5003686703300959208

GRID = np.arange(0.5, 12.01, 0.5)


def test_parametrization_examples():
    np.testing.assert_array_equal(a_of_t(0.0), [1.0, 0.0, 1.0])
    np.testing.assert_array_equal(b_plus(0.0), [2.0, 0.0, 1.0])
    np.testing.assert_array_equal(b_minus(0.0), [0.0, 0.0, 1.0])
    for t in np.linspace(0.0, 12.0, 49):
        np.testing.assert_allclose(a_of_t(t), 0.5 * (b_plus(t) + b_minus(t)), atol=1e-15)
    with pytest.raises(ValueError):
        b_plus(-0.1)


def test_distance_function_examples():
    assert d_derivative(-1, 3.0, 3.0) == pytest.approx(-math.exp(-6.0), rel=1e-12)
    assert d_value(+1, 2.0, 2.0) == pytest.approx(0.5 * math.exp(-4.0), rel=1e-12)


def test_derivatives_against_finite_differences(rng):
    h = 1e-6
    for x, t in rng.uniform(1.0, 10.0, size=(100, 2)):
        for sign in (1, -1):
            fd = (d_value(sign, x + h, t) - d_value(sign, x - h, t)) / (2 * h)
            assert abs(d_derivative(sign, x, t) - fd) <= 1e-6
            fd2 = (d_derivative(sign, x + h, t) - d_derivative(sign, x - h, t)) / (2 * h)
            assert abs(d_second(sign, x, t) - fd2) <= 1e-6


def test_f_gap_examples():
    for t in (1.0, 2.5, 7.0):
        assert f_gap(t, t) == pytest.approx(0.0, abs=1e-15)
        # 2 e^-x (1 - cos(pi)) at x = t + pi
        assert f_gap(t + math.pi, t) == pytest.approx(4.0 * math.exp(-t - math.pi), rel=1e-9)
    xs, ts = np.meshgrid(np.linspace(0.0, 12.0, 100), np.linspace(0.0, 12.0, 100))
    for x, t in zip(xs.ravel(), ts.ravel()):
        assert f_gap(x, t) >= -1e-15
        assert abs(f_gap(x, t) - f_gap_closed_form(x, t)) <= 1e-12


def test_sigma_grid_properties():
    for t in GRID:
        s = next_sigma(t)
        assert s > t
        inc = -math.expm1(0.5 * (t - s))
        assert 0.0 < inc <= math.exp(-0.5 * t)
        # the inner point beats the outer point at the same parameter; the squared-distance
        # gap is ~e^{-5t}, so the direct comparison is only resolvable in doubles for small t
        assert f_gap_closed_form(s, t) > 0.0
        if t <= 6.0:
            assert np.linalg.norm(a_of_t(t) - b_minus(s)) < np.linalg.norm(a_of_t(t) - b_plus(s))


def test_sigma_5_frozen():
    assert next_sigma(5.0) == pytest.approx(SIGMA_5, abs=1e-10)


def test_sigma_5_live_oracle():
    mp.mp.dps = 30
    t = mp.mpf(5)

    def d(x):
        e = mp.e ** (-x)
        return ((mp.cos(t) - (1 - e) * mp.cos(x)) ** 2 + (mp.sin(t) - (1 - e) * mp.sin(x)) ** 2
                + (mp.e ** (-t / 2) - mp.e ** (-x / 2)) ** 2) / 2

    grid = [mp.mpf(k) / 100 for k in range(0, 1301)]
    k = min(range(len(grid)), key=lambda i: d(grid[i]))
    lo, hi = grid[k - 1], grid[k + 1]
    g = (mp.sqrt(5) - 1) / 2
    while hi - lo > mp.mpf("1e-20"):
        c, e = hi - g * (hi - lo), lo + g * (hi - lo)
        if d(c) < d(e):
            hi = e
        else:
            lo = c
    assert next_sigma(5.0) == pytest.approx(float((lo + hi) / 2), abs=1e-10)


def test_bracket_validity():
    for t in GRID[GRID >= 1.0]:
        lo, hi = bracket(t)
        assert d_derivative(-1, lo, t) < 0.0 < d_derivative(-1, hi, t)


def test_next_parameter_errors():
    with pytest.raises(ValueError):
        next_sigma(0.4)
    assert issubclass(BracketError, RuntimeError)


def test_generate_tk_against_oracle():
    seq = generate_tk(1.0, 3.5, 10**6)
    assert seq.reached and len(seq) == TK_COUNT_TO_3_5
    assert seq.t_values[100] == pytest.approx(TK_101, abs=1e-10)
    assert seq.t_values[-1] == pytest.approx(TK_LAST_3_5, abs=1e-10)


def test_generate_tk_increment_laws():
    seq = generate_tk(1.0, 4.0, 10**6)
    t = seq.t_values
    inc = seq.increments()
    assert np.all(inc > 0.0)
    assert np.all(inc <= -2.0 * np.log1p(-np.exp(-0.5 * t[:-1])))
    lhs, rhs = seq.bound_residuals()
    assert np.all((lhs > 0.0) & (lhs <= rhs))
    spacing = np.linalg.norm(np.diff(np.column_stack([np.cos(t), np.sin(t), np.exp(-0.5 * t)]), axis=0), axis=1)
    assert np.all(spacing <= 2.0 * np.exp(-t[:-1]))


def test_generate_tk_cap_is_not_fatal():
    seq = generate_tk(1.0, 100.0, 50)
    assert not seq.reached and len(seq) == 50


def test_dr_spiral_run_structure():
    traj = dr_spiral_run(1.0, 400)
    ts = traj.extras["t_values"]
    np.testing.assert_allclose(traj.x[0], b_minus(1.0))
    np.testing.assert_allclose(traj.x_next[0], a_of_t(1.0), atol=1e-15)
    np.testing.assert_allclose(traj.step_norm[0::2], np.exp(-ts[:200]), atol=1e-10)
    assert traj.extras["cross_check_error"] <= 1e-8
    np.testing.assert_allclose(traj.x_next - traj.x, traj.b - traj.a, atol=1e-12)
    assert traj.stop_reason is StopReason.MAX_ITER


def test_dr_spiral_nonconvergent_with_vanishing_steps():
    traj = dr_spiral_run(1.0, 10_000)
    d = traj.diagnostics
    assert not d.converged and d.steps_vanish and d.cycle_period is None
    # the whole trajectory sweeps many turns around the cylinder
    assert diagnose(traj, tail_fraction=1.0).tail_diameter >= 1.9


def test_dr_spiral_stop_target():
    traj = dr_spiral_run(1.0, 10**6, stop_t=3.0)
    assert traj.stop_reason is StopReason.TARGET_REACHED
    assert traj.extras["t_values"][-1] >= 3.0


def test_map_inner_matches_dr_shadows():
    dr = dr_spiral_run(1.0, 400)
    mp_ = map_spiral_run(1.0, 200, MapVariant.INNER_VS_MANTLE)
    np.testing.assert_allclose(mp_.a, dr.a[0::2], atol=1e-10)
    np.testing.assert_allclose(mp_.b, dr.x_next[1::2], atol=1e-10)


def test_map_outer_gap_identity():
    traj = map_spiral_run(1.0, 300, MapVariant.OUTER_VS_SOLID_CYLINDER)
    ts = traj.extras["t_values"]
    np.testing.assert_allclose(np.linalg.norm(traj.x - traj.a, axis=1), np.exp(-ts[:-1]), atol=1e-10)
    assert traj.extras["cross_check_error"] <= 1e-8
    assert not traj.diagnostics.converged


def test_verify_claims_full_pass():
    rep = verify_claims(np.arange(1.0, 12.5, 1.0))
    assert rep.passed, [vars(c) for c in rep.failures()]
    assert {"mantle_projection+", "reflection_swap-", "inner_preference", "convex_on_bracket"} <= set(rep.names())
    assert rep.convexity_threshold is not None and rep.convexity_threshold <= 3.0


def test_verify_claims_itemizes_failures():
    rep = verify_claims([2.0], tol=-1.0)
    assert not rep.passed and all(c.t == 2.0 for c in rep.failures())


def test_distance_to_F_example():
    assert BaseCircle().project(a_of_t(4.0)).distance == pytest.approx(math.exp(-2.0), abs=1e-12)


def test_scene_invariants():
    scene = SpiralScene()
    assert scene.includes_F and len(scene.B) == 2
    with pytest.raises(ValueError):
        SpiralScene(t_max=10.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clonal_selection import analysis as an
from clonal_selection.calibration import (
    CAL1_A1_SINGLE,
    Linear,
    ModelSpec,
    build_preset,
    build_spec,
)
from clonal_selection.model import DomainError, Grid, ModelParams, State
from clonal_selection.solver import SolverConfig, Trajectory, simulate

import runs

K = 1.75e-9


# -- growth integrals ---------------------------------------------------


def test_growth_integral_with_unit_signal():
    p = build_preset("cal1-single").params
    R = an.GrowthIntegrals.zeros(p)
    for _ in range(250):
        R = an.accumulate_growth(R, 1.0, p, 0.04)
    np.testing.assert_allclose(R.R[0], 10.0 * (2 * p.self_renewal[0] - 1) * p.proliferation[0], rtol=1e-12)
    assert R.time == pytest.approx(10.0)


def test_growth_increments_at_equilibrium():
    p = ModelParams([[0.8865], [0.5 * math.exp(-0.04 / 8.82) + 0.349]], [[0.22], [0.7]], K, 2.0)
    s = 1 / (2 * 0.8865)
    step = an.accumulate_growth(an.GrowthIntegrals.zeros(p), s, p, 1e-2).R
    assert step[0, 0] == pytest.approx(0.0, abs=1e-17)
    expected = 1e-2 * (p.self_renewal[1, 0] / 0.8865 - 1) * 0.7
    assert step[1, 0] == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(-3.14e-4, rel=2e-3)


def test_theorem_signs_on_equilibrium_run():
    rep = an.check_theorem_signs(runs.run("cal1-single"), (7500.0, 1e4))
    assert rep.stem_ok and rep.progenitor_ok and rep.passed
    assert rep.window == (7500.0, 1e4)


def test_theorem_window_validation():
    traj = runs.run("cal1-single")
    with pytest.raises(an.AnalysisError):
        an.check_theorem_signs(traj, (5000.0, 5000.0))
    with pytest.raises(an.AnalysisError):
        an.check_theorem_signs(traj, (5000.0, 2e4))
    with pytest.raises(an.AnalysisError):
        an.check_theorem_signs(traj, (5000.0, 5001.0))  # inside one snapshot gap


def test_stem_rate_averages_out_over_cycles():
    traj = runs.run("cal2-hopf")
    osc = an.detect_oscillations(traj.series_times, traj.totals[:, 2], (5e3, 1e4))
    assert osc.num_peaks >= 4
    rep = an.check_theorem_signs(traj, (osc.peak_times[-11], osc.peak_times[-1]))
    assert abs(rep.max_rates[0]) <= 1e-3
    assert rep.max_rates[1] < 0


# -- concentration ------------------------------------------------------


def test_point_mass_window():
    g = Grid.midpoint(200)
    n = np.zeros(200)
    n[120] = 5.0
    assert an.window_fraction(n, g, g.points[120], g.cell_width) == 1.0


@given(st.floats(0.0, 1.0), st.floats(0.01, 0.3))
def test_uniform_density_window(center, hw):
    g = Grid.midpoint(400)
    frac = an.window_fraction(np.ones(400), g, center, hw)
    exact = min(1.0, center + hw) - max(0.0, center - hw)
    assert abs(frac - exact) <= 2 * g.cell_width


@given(st.lists(st.floats(0, 1e6), min_size=50, max_size=50), st.floats(0.02, 0.2))
def test_disjoint_windows_sum_below_one(values, hw):
    g = Grid.midpoint(50)
    n = np.array(values)
    centers = np.arange(hw, 1.0, 2 * hw + 0.021)
    fracs = [an.window_fraction(n, g, c, hw) for c in centers]
    assert all(0.0 <= f <= 1.0 for f in fracs)
    assert sum(fracs) <= 1.0 + 1e-12


def test_selfrenewal_maxima_of_presets():
    assert an.selfrenewal_maxima(runs.preset("cal1-single").params, runs.preset("cal1-single").grid) == pytest.approx((0.6,))
    multi = runs.preset("cal1-multi")
    # cross-bump tails shift the discrete peaks by ~2e-5, far below the cell width
    assert an.selfrenewal_maxima(multi.params, multi.grid) == pytest.approx((0.35, 0.55, 0.7, 0.85), abs=1e-4)
    flat = runs.preset("cal1-flat")
    assert an.selfrenewal_maxima(flat.params, flat.grid) == ()


def test_concentration_report_fields():
    p = runs.preset("cal1-single")
    rep = an.concentration_report(runs.run("cal1-single").final_state, p.params, p.grid)
    assert [w.center for w in rep.windows] == pytest.approx([0.6])
    assert rep.argmax_selfrenewal == pytest.approx((0.5975, 0.6025))
    assert abs(rep.argmax_density - 0.6) <= 0.05
    assert not rep.full_support
    with pytest.raises(KeyError):
        rep.fraction_at(0.4)
    with pytest.raises(an.AnalysisError):
        an.concentration_report(p.initial, p.params, p.grid, half_width=0.001)


def test_concentration_excludes_progenitor_maximum():
    p = runs.preset("cal1-single")
    rep = an.concentration_report(runs.run("cal1-single").final_state, p.params, p.grid, centers=(0.6, 0.4))
    assert rep.fraction_at(0.4) < 0.01
    assert rep.fraction_at(0.6) > 100 * rep.fraction_at(0.4)


def test_flat_profile_keeps_full_support():
    p = runs.preset("cal1-flat")
    final = runs.run("cal1-flat").final_state
    rep = an.concentration_report(final, p.params, p.grid, centers=tuple(p.grid.points[::10]))
    assert rep.full_support
    assert max(w.fraction for w in rep.windows) <= 0.5


def _varied_spec(p1, p2, a2):
    return ModelSpec((CAL1_A1_SINGLE, a2), (p1, p2), (2.5e7, 3.8e9, 1e8), clearance=2.0)


@settings(max_examples=4, deadline=None)
@given(
    st.floats(0.05, 0.5), st.floats(-0.04, 0.45),
    st.floats(0.05, 0.5), st.floats(-0.04, 0.45),
    st.floats(0.55, 0.84), st.floats(-0.04, 0.04),
)
def test_selected_clone_independent_of_other_rates(i1, s1, i2, s2, a2_0, a2_slope):
    # a_1 stays fixed; every other table is replaced by a random admissible one
    spec = _varied_spec(Linear(i1, s1), Linear(i2, s2), Linear(a2_0, a2_slope))
    preset = build_spec(spec, Grid.midpoint(100))
    traj = simulate(preset.initial, preset.params, preset.grid, SolverConfig(horizon=1e4, record_every=100_000))
    n1 = traj.snapshots[-1, 0]
    x = preset.grid.points
    assert abs(x[np.argmax(n1)] - 0.6) <= 0.05
    top = x[n1 >= 0.5 * n1.max()]
    assert top.min() <= 0.6 <= top.max()


# -- bounds -------------------------------------------------------------


def test_bound_constants_for_calibration_one():
    # the vertex grid contains the exact extrema of the analytic profiles
    p = build_preset("cal1-single", Grid.vertex(201))
    b = an.bound_estimates(p.params, p.initial)
    assert b.P_bar[0] == pytest.approx(2 * 0.8865 * 0.3, rel=1e-9)
    assert b.Q_under[0] == pytest.approx(2 * (1 - 0.8865) * 0.1, rel=1e-9)
    assert b.ratio_bounds[0] == pytest.approx((0.5319 + 0.9) / 0.0227, rel=1e-9)
    assert b.ratio_bounds[0] == pytest.approx(63.08, abs=0.01)
    assert b.products[0] == pytest.approx(b.ratio_bounds[0] * b.ratio_bounds[1])


def test_constant_tables():
    params = ModelParams([[0.8] * 4, [0.7] * 4], [[0.3] * 4, [0.6] * 4], K, 1.0)
    b = an.bound_estimates(params, State(np.ones((3, 4))))
    np.testing.assert_allclose(b.P_bar, [2 * 0.8 * 0.3, 2 * 0.7 * 0.6])
    np.testing.assert_allclose(b.Q_under, [2 * 0.2 * 0.3, 2 * 0.3 * 0.6])
    assert np.all(b.ratio_bounds > 0) and np.all(b.products > 0)
    assert all(v is not None and v > 0 for v in b.rho_bar)


def test_rho_bar_dominates_run():
    p = runs.preset("cal1-single")
    b = an.bound_estimates(p.params, p.initial)
    peak = runs.run("cal1-single").totals.max(axis=0)
    assert all(math.isfinite(v) and v > 0 for v in b.rho_bar)
    assert np.all(peak <= np.array(b.rho_bar))


def test_bounds_hold_at_time_zero_and_fail_when_zeroed():
    p = runs.preset("cal1-single")
    traj = runs.run("cal1-single")
    b = an.bound_estimates(p.params, p.initial)
    first = Trajectory(traj.times[:1], traj.snapshots[:1], traj.growth[:1], traj.series_times[:1], traj.totals[:1], traj.signal[:1])
    assert an.check_bounds(first, b) == []
    b.ratio_bounds = np.zeros_like(b.ratio_bounds)
    hits = an.check_bounds(traj, b)
    assert len(hits) == 2 * len(traj.series_times)
    assert an.check_bounds(traj, b, limit=5) == hits[:5]


def test_bounds_need_positive_initial_data():
    p = runs.preset("cal1-single")
    n = np.array(p.initial.densities)
    n[1] = 0
    with pytest.raises(DomainError):
        an.bound_estimates(p.params, State(n))


# -- equilibrium predictor ----------------------------------------------


def test_predictor_values():
    a1 = math.exp(0) - 0.1135
    rho = an.steady_state_predictor(a1, 0.84, 0.22, 0.7, K, 2.0)
    assert rho[2] == pytest.approx(0.773 / K, rel=1e-12)
    assert rho[2] == pytest.approx(4.4171e8, rel=1e-4)
    flat = an.steady_state_predictor(0.88, 0.7, 0.2, 0.5, K, 2.0)
    assert flat[2] == pytest.approx(4.3429e8, rel=1e-4)


def test_predictor_threshold():
    assert an.steady_state_predictor(0.5 + 1e-12, 0.5, 0.2, 0.5, K, 2.0)[2] < 1e-2 / K
    with pytest.raises(DomainError):
        an.steady_state_predictor(0.5, 0.51, 0.2, 0.5, K, 2.0)


@given(st.floats(0.51, 0.99), st.floats(0.0, 1.0), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 5))
def test_predictor_balances_all_stages(a1, frac, p1, p2, d):
    a2 = 0.5 + frac * (a1 - 0.5) * 0.999
    rho1, rho2, rho3 = an.steady_state_predictor(a1, a2, p1, p2, K, d)
    s = 1 / (1 + K * rho3)
    scale = max(p1 * rho1, p2 * rho2, d * rho3)
    assert abs((2 * a1 * s - 1) * p1 * rho1) <= 1e-9 * scale
    assert abs(2 * (1 - a1 * s) * p1 * rho1 + (2 * a2 * s - 1) * p2 * rho2) <= 1e-9 * scale
    assert abs(2 * (1 - a2 * s) * p2 * rho2 - d * rho3) <= 1e-9 * scale


# -- oscillations -------------------------------------------------------


def test_constant_series_converged():
    t = np.arange(0, 1000, 0.01)
    rep = an.detect_oscillations(t, np.full_like(t, 3.0))
    assert rep.classification == "converged" and rep.amplitude == 0.0


def test_sine_series_sustained():
    t = np.arange(0, 1000, 0.01)
    rep = an.detect_oscillations(t, 1 + 0.2 * np.sin(2 * np.pi * t / 50))
    assert rep.classification == "sustained"
    assert rep.period == pytest.approx(50, abs=1)
    assert rep.amplitude == pytest.approx(0.4, rel=0.01)


def test_decaying_series_damped():
    t = np.arange(0, 1000, 0.01)
    rep = an.detect_oscillations(t, 1 + 0.3 * np.exp(-t / 150) * np.sin(2 * np.pi * t / 50))
    assert rep.classification == "damped"


def test_small_amplitude_not_sustained():
    t = np.arange(0, 1000, 0.01)
    rep = an.detect_oscillations(t, 1 + 0.015 * np.sin(2 * np.pi * t / 50))
    assert rep.num_peaks >= 5 and rep.classification == "damped"


@given(st.floats(10, 150), st.floats(0.05, 0.5), st.floats(0, 2 * np.pi))
def test_sine_period_recovered(period, amp, phase):
    t = np.arange(0, 20 * period, period / 400)
    rep = an.detect_oscillations(t, 1 + amp * np.sin(2 * np.pi * t / period + phase))
    assert rep.classification == "sustained"
    assert rep.period == pytest.approx(period, rel=0.01)


def test_oscillation_window_checks():
    t = np.arange(0, 10, 0.01)
    with pytest.raises(an.AnalysisError):
        an.detect_oscillations(t, np.sin(t), window=(0, 1.0))
    with pytest.raises(an.AnalysisError):
        an.detect_oscillations(t, np.sin(t)[:-1])


def test_presets_oscillation_classes():
    for name, expected in [("cal1-single", "converged"), ("cal2-hopf", "sustained")]:
        reps = an.oscillation_reports(runs.run(name), (5e3, 1e4))
        assert reps[2].classification == expected

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from centrimag_constants import UNIVERSAL, bohr_magnetons, from_bohr_magnetons
from centrimag_dynamics import (
    CHANNEL_LONGITUDINAL,
    CHANNEL_TRANSVERSE,
    INFIELD_RISE_TIME,
    GasConditions,
    TraceParameters,
    boltzmann_imbalance,
    calibrate_amplitude,
    flux_density,
    longitudinal_trace_fieldfree,
    longitudinal_trace_infield,
    number_density,
    peak_moment,
    pressure_scaled,
    time_grid,
    transverse_trace,
    two_rate_peak,
    vector_resolved,
)
from centrimag_errors import PhysicalBoundError, RejectedInputError
from centrimag_spectrum import RotorFieldConfig, frequencies_approximate, frequencies_exact
from centrimag_waveform import cross_correlation_lag

MILLIGAUSS = 1.0e-7


@pytest.fixture(scope="module")
def locked_89(oxygen):
    return frequencies_approximate(RotorFieldConfig(89, 1.0), oxygen)


def test_time_grid_is_inclusive():
    grid = time_grid(-2e-9, 10e-9, 2e-12)
    assert grid.size == 6001
    assert grid[-1] == pytest.approx(10e-9)


def test_time_grid_rejects_reversed_bounds():
    with pytest.raises(RejectedInputError):
        time_grid(1e-9, 0.0, 1e-12)


def test_number_density_at_one_bar():
    n_c = number_density(GasConditions.from_bar(1.0, 295.0))
    assert n_c * 1e-6 == pytest.approx(9.82e17, rel=2e-3)
    assert n_c * 1e-6 >= 6e17


def test_number_density_at_half_bar(half_bar):
    expected = 0.04 * 0.5e5 / (UNIVERSAL.k_B * 295.0)
    assert number_density(half_bar) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("kwargs", [{"pressure": -1.0, "temperature": 295.0}, {"pressure": 0.0, "temperature": 295.0},
                                    {"pressure": 1e5, "temperature": 0.0},
                                    {"pressure": 1e5, "temperature": 295.0, "eta": 0.0}])
def test_gas_conditions_validate(kwargs):
    with pytest.raises(RejectedInputError):
        GasConditions(**kwargs)


def test_undamped_peak_is_two_thirds_g(oxygen, locked_89, half_bar):
    amplitude = oxygen.abs_g * UNIVERSAL.mu_B / 3.0
    quarter = locked_89.quarter_period_plus
    grid = np.linspace(0.0, 2.0 * quarter, 201)
    params = TraceParameters(amplitude=amplitude, tau=math.inf, frequencies=locked_89)
    trace = transverse_trace(params, half_bar, grid, g_factor=oxygen.g_factor)
    t_peak, mu_peak = peak_moment(trace)
    assert t_peak == pytest.approx(quarter, rel=1e-9)
    assert bohr_magnetons(mu_peak) == pytest.approx(2.0 / 3.0 * oxygen.abs_g, rel=1e-9)


def test_moment_above_spin_bound_rejected(oxygen, locked_89, half_bar):
    params = TraceParameters(amplitude=1.1 * oxygen.abs_g * UNIVERSAL.mu_B, tau=math.inf, frequencies=locked_89)
    grid = np.linspace(0.0, 2.0 * locked_89.quarter_period_plus, 201)
    with pytest.raises(PhysicalBoundError):
        transverse_trace(params, half_bar, grid, g_factor=oxygen.g_factor)


def test_flux_density_for_measured_peak(oxygen, half_bar, ns_grid):
    freqs = frequencies_exact(RotorFieldConfig(89, 1.0), oxygen)
    params = calibrate_amplitude(
        TraceParameters(amplitude=0.0, tau=3e-9, frequencies=freqs), ns_grid, from_bohr_magnetons(0.65)
    )
    trace = transverse_trace(params, half_bar, ns_grid, g_factor=oxygen.g_factor)
    assert bohr_magnetons(abs(peak_moment(trace)[1])) == pytest.approx(0.65, rel=1e-9)
    _, b_perp = flux_density(trace)
    peak_mg = float(np.max(np.abs(b_perp.samples))) / MILLIGAUSS
    assert 36.0 <= peak_mg <= 40.0
    assert peak_mg == pytest.approx(37.2, rel=5e-3)


def test_trace_is_causal(oxygen, locked_89, half_bar, ns_grid):
    params = TraceParameters(amplitude=from_bohr_magnetons(0.4), tau=3e-9, frequencies=locked_89)
    trace = transverse_trace(params, half_bar, ns_grid)
    assert not np.any(trace.transverse[ns_grid < 0.0])
    assert not np.any(trace.longitudinal)


def test_field_inversion_flips_transverse_moment(locked_89, half_bar, ns_grid):
    params = TraceParameters(amplitude=from_bohr_magnetons(0.4), tau=3e-9, frequencies=locked_89)
    up = transverse_trace(params, half_bar, ns_grid)
    down = transverse_trace(params, half_bar, ns_grid, field_sign=-1.0)
    np.testing.assert_array_equal(down.mu_transverse, -up.mu_transverse)


def test_infield_longitudinal_leads_by_quarter_period(locked_89, half_bar):
    period = 4.0 * locked_89.quarter_period_plus
    dt = period / 200.0
    grid = dt * np.arange(20 * 200)
    params = TraceParameters(amplitude=from_bohr_magnetons(0.3), tau=200e-9, frequencies=locked_89, rise_time=0.0)
    longitudinal = longitudinal_trace_infield(params, half_bar, grid).channel(CHANNEL_LONGITUDINAL)
    transverse = transverse_trace(params, half_bar, grid).channel(CHANNEL_TRANSVERSE)
    lag = cross_correlation_lag(longitudinal, transverse, max_lag=period / 2.0)
    assert lag == pytest.approx(period / 4.0, abs=2.0 * dt)


def test_infield_rise_starts_at_zero(locked_89, half_bar, ns_grid):
    params = TraceParameters(
        amplitude=from_bohr_magnetons(0.35), tau=3e-9, frequencies=locked_89, rise_time=0.25e-9
    )
    trace = longitudinal_trace_infield(params, half_bar, ns_grid)
    assert trace.mu_longitudinal[np.searchsorted(ns_grid, 0.0)] == pytest.approx(0.0, abs=1e-35)


def test_infield_trace_uses_default_rise_when_unset(locked_89, half_bar, ns_grid):
    params = TraceParameters(amplitude=from_bohr_magnetons(0.35), tau=3e-9, frequencies=locked_89)
    trace = longitudinal_trace_infield(params, half_bar, ns_grid)
    start = np.searchsorted(ns_grid, 0.0)
    assert trace.mu_longitudinal[start] == pytest.approx(0.0, abs=1e-35)
    explicit = longitudinal_trace_infield(
        TraceParameters(
            amplitude=params.amplitude, tau=params.tau, frequencies=locked_89, rise_time=INFIELD_RISE_TIME
        ),
        half_bar,
        ns_grid,
    )
    np.testing.assert_array_equal(trace.mu_longitudinal, explicit.mu_longitudinal)


@pytest.mark.parametrize("tau", [0.5e-9, 3e-9, 20e-9])
def test_transverse_moment_stays_inside_envelope(locked_89, half_bar, ns_grid, tau):
    amplitude = from_bohr_magnetons(0.4)
    trace = transverse_trace(TraceParameters(amplitude=amplitude, tau=tau, frequencies=locked_89), half_bar, ns_grid)
    bound = 2.0 * amplitude * np.exp(-np.clip(ns_grid, 0.0, None) / tau)
    assert np.all(np.abs(trace.mu_transverse) <= bound * (1.0 + 1e-12))


@given(st.floats(min_value=0.05, max_value=2.0), st.floats(min_value=0.05, max_value=2.0))
@settings(max_examples=25, deadline=None)
def test_transverse_magnetization_is_proportional_to_pressure(low_bar, high_bar):
    freqs = frequencies_approximate(RotorFieldConfig(89, 1.0))
    params = TraceParameters(amplitude=from_bohr_magnetons(0.4), tau=3e-9, frequencies=freqs)
    grid = time_grid(-1e-9, 6e-9, 5e-12)
    low = transverse_trace(params, GasConditions.from_bar(low_bar), grid)
    high = transverse_trace(params, GasConditions.from_bar(high_bar), grid)
    np.testing.assert_allclose(low.transverse * high_bar, high.transverse * low_bar, rtol=1e-12, atol=0.0)


def test_boltzmann_imbalance_at_N33():
    assert 0.002 <= boltzmann_imbalance(33, 295.0) <= 0.004
    assert boltzmann_imbalance(33, 295.0) == pytest.approx(0.00218, rel=0.01)


def test_boltzmann_imbalance_saturates_when_cold():
    assert boltzmann_imbalance(33, 0.01) == pytest.approx(1.0, abs=1e-9)
    assert boltzmann_imbalance(33, 1.0) > boltzmann_imbalance(33, 10.0) > boltzmann_imbalance(33, 295.0)


def test_boltzmann_imbalance_grows_with_N():
    values = [boltzmann_imbalance(N, 295.0) for N in (15, 33, 51, 71, 89)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_two_rate_peak_closed_form():
    t_peak, value = two_rate_peak(3e-9, 2e-9)
    assert t_peak == pytest.approx(6e-9 * math.log(1.5), rel=1e-12)
    assert value == pytest.approx((1.5**-2 - 1.5**-3) / 3.0, rel=1e-12)
    assert two_rate_peak(2e-9, 2e-9) == (0.0, 0.0)


def test_fieldfree_trace_matches_closed_form(oxygen, half_bar):
    t_peak, value = two_rate_peak(3e-9, 2e-9)
    grid = np.linspace(0.0, 2.0 * t_peak, 2001)
    params = TraceParameters(amplitude=0.0, tau=math.inf, tau_plus=3e-9, tau_minus=2e-9, rise_time=0.0)
    trace = longitudinal_trace_fieldfree(params, half_bar, grid, N=33, constants=oxygen, include_bias=False)
    t_found, mu = peak_moment(trace, CHANNEL_LONGITUDINAL)
    assert t_found == pytest.approx(t_peak, rel=1e-9)
    assert bohr_magnetons(mu) == pytest.approx(value * oxygen.abs_g, rel=1e-6)
    # same order as the measured 0.16 muB
    assert 0.08 <= bohr_magnetons(mu) <= 0.32


def test_fieldfree_sign_follows_longer_lived_branch(half_bar, ns_grid):
    params = TraceParameters(amplitude=0.0, tau=math.inf, tau_plus=2e-9, tau_minus=3e-9, rise_time=0.0)
    trace = longitudinal_trace_fieldfree(params, half_bar, ns_grid, N=33, include_bias=False)
    assert peak_moment(trace, CHANNEL_LONGITUDINAL)[1] < 0.0


def test_fieldfree_bias_adds_thermal_term(half_bar, ns_grid):
    params = TraceParameters(amplitude=0.0, tau=math.inf, tau_plus=6e-9, tau_minus=4e-9, rise_time=1e-9)
    biased = longitudinal_trace_fieldfree(params, half_bar, ns_grid, N=33)
    bare = longitudinal_trace_fieldfree(params, half_bar, ns_grid, N=33, include_bias=False)
    assert np.all(biased.mu_longitudinal >= bare.mu_longitudinal)
    assert np.any(biased.mu_longitudinal > bare.mu_longitudinal)


def test_fieldfree_needs_both_rates(half_bar, ns_grid):
    with pytest.raises(RejectedInputError):
        longitudinal_trace_fieldfree(TraceParameters(amplitude=0.0, tau=1e-9), half_bar, ns_grid, N=33)


def test_fieldfree_needs_a_rise_time(half_bar, ns_grid):
    params = TraceParameters(amplitude=0.0, tau=math.inf, tau_plus=3e-9, tau_minus=2e-9)
    with pytest.raises(RejectedInputError, match="rise_time"):
        longitudinal_trace_fieldfree(params, half_bar, ns_grid, N=33)


def test_pressure_scaling_keeps_unset_rise_time(half_bar):
    params = TraceParameters(amplitude=0.0, tau=3e-9)
    assert pressure_scaled(params, half_bar, 1e5).rise_time is None


@given(st.floats(min_value=0.1, max_value=2.0), st.booleans())
@settings(max_examples=30, deadline=None)
def test_pressure_scaling_is_inverse(pressure_bar, scale_decay):
    params = TraceParameters(amplitude=0.0, tau=3e-9, rise_time=1e-9, tau_plus=6e-9, tau_minus=4e-9)
    gas = GasConditions.from_bar(pressure_bar)
    scaled = pressure_scaled(params, gas, 0.5e5, scale_decay=scale_decay)
    assert scaled.rise_time * pressure_bar == pytest.approx(1e-9 * 0.5, rel=1e-12)
    if scale_decay:
        assert scaled.tau_plus * pressure_bar == pytest.approx(6e-9 * 0.5, rel=1e-12)
    else:
        assert scaled.tau == params.tau


def test_calibrate_amplitude_rejects_unknown_kind(locked_89, ns_grid):
    params = TraceParameters(amplitude=0.0, tau=3e-9, frequencies=locked_89)
    with pytest.raises(RejectedInputError):
        calibrate_amplitude(params, ns_grid, 1e-24, kind="diagonal")


def test_vector_resolved_components_sum_to_transverse_kernel(locked_89, half_bar, ns_grid):
    params = TraceParameters(amplitude=from_bohr_magnetons(0.4), tau=3e-9, frequencies=locked_89)
    parts = vector_resolved(params, ns_grid)
    trace = transverse_trace(params, half_bar, ns_grid)
    np.testing.assert_allclose(parts["plus_y"] + parts["minus_y"], trace.mu_transverse, rtol=1e-12, atol=1e-40)
    # equal branch frequencies: in-plane x parts cancel
    np.testing.assert_allclose(parts["plus_x"] + parts["minus_x"], 0.0, atol=1e-36)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from centrimag_dynamics import CHANNEL_TRANSVERSE, TraceParameters, transverse_trace
from centrimag_errors import ConditioningError, HeuristicFailureError, RejectedInputError
from centrimag_spectrum import RotorFieldConfig, frequencies_approximate, frequencies_exact
from centrimag_waveform import (
    MODE_FIXED,
    MODE_FREE,
    UNIT_MAGNETIZATION,
    FitResult,
    Waveform,
    add_noise,
    average_shots,
    cross_correlation_lag,
    difference_protocol,
    dominant_frequencies,
    precession_jacobian,
    precession_model,
    fit_precession,
    initial_guess,
    integrate_emf,
)

GRID_DT = 2e-12
GRID_PRE = 1000
GRID_T0 = -GRID_PRE * GRID_DT
GRID_SIZE = 6001
AMPLITUDE = 1e-15  # V s

# (N, tau) pairs at 1 T
PANELS = [(43, 1.8e-9), (61, 2.4e-9), (71, 3.1e-9)]


def synthetic_emf(freqs, tau, amplitude=AMPLITUDE):
    # exact zero at the trigger sample
    t = GRID_DT * (np.arange(GRID_SIZE) - GRID_PRE)
    values = precession_model(t, amplitude, tau, freqs.omega_plus, freqs.omega_minus)
    return Waveform(GRID_T0, GRID_DT, values, meta={"tau_true": tau})


@pytest.fixture(scope="module")
def panel_frequencies(oxygen):
    return {N: frequencies_exact(RotorFieldConfig(N, 1.0), oxygen) for N, _ in PANELS}


def test_waveform_rejects_bad_samples():
    with pytest.raises(RejectedInputError):
        Waveform(0.0, 1e-12, [0.0, math.nan])
    with pytest.raises(RejectedInputError):
        Waveform(0.0, 0.0, [0.0, 1.0])
    with pytest.raises(RejectedInputError):
        Waveform.from_arrays([0.0, 1.0, 3.0], [0.0, 0.0, 0.0])


def test_window_keeps_boundary_samples():
    wave = Waveform(0.0, 1.0, np.arange(10.0))
    part = wave.window(2.0, 5.0)
    np.testing.assert_array_equal(part.samples, [2.0, 3.0, 4.0, 5.0])
    assert part.t0 == 2.0


def test_four_shot_differencing_isolates_signal():
    rng = np.random.default_rng(7)
    signal = rng.normal(size=500)
    background = rng.normal(size=500)
    rotation_odd = rng.normal(size=500)

    def shot(rotation, field):
        return Waveform(0.0, 1e-12, rotation * field * signal + rotation * rotation_odd + background, meta={"N": 89})

    upright = difference_protocol(shot(1, 1), shot(-1, 1), "rotation")
    inverted = difference_protocol(shot(1, -1), shot(-1, -1), "rotation")
    result = difference_protocol(upright, inverted, "field")
    np.testing.assert_allclose(result.samples, signal, rtol=0.0, atol=1e-12)
    assert result.meta["differenced"] == ["rotation", "field"]
    assert result.meta["N"] == 89


def test_differencing_is_antisymmetric():
    rng = np.random.default_rng(2)
    plus = Waveform(0.0, 1e-12, rng.normal(size=300))
    minus = Waveform(0.0, 1e-12, rng.normal(size=300))
    np.testing.assert_array_equal(
        difference_protocol(plus, minus).samples, -difference_protocol(minus, plus).samples
    )


def test_differencing_needs_matching_grids():
    with pytest.raises(RejectedInputError, match="grids differ"):
        difference_protocol(Waveform(0.0, 1e-12, np.zeros(5)), Waveform(0.0, 2e-12, np.zeros(5)))
    with pytest.raises(RejectedInputError, match="units differ"):
        difference_protocol(
            Waveform(0.0, 1e-12, np.zeros(5)), Waveform(0.0, 1e-12, np.zeros(5), unit=UNIT_MAGNETIZATION)
        )


def test_average_shots():
    shots = [Waveform(0.0, 1.0, np.full(4, value)) for value in (1.0, 2.0, 6.0)]
    averaged = average_shots(shots)
    np.testing.assert_allclose(averaged.samples, 3.0)
    assert averaged.meta["shots"] == 3
    with pytest.raises(RejectedInputError):
        average_shots([])


def test_integrate_emf_removes_baseline_offset():
    t = np.arange(200) * 1e-12
    emf = Waveform(0.0, 1e-12, np.full(t.size, 3e-6))
    magnetization = integrate_emf(emf, 2.0, slice(0, 50))
    np.testing.assert_allclose(magnetization.samples, 0.0, atol=1e-30)
    assert magnetization.unit == UNIT_MAGNETIZATION


@given(st.floats(min_value=-5.0, max_value=5.0), st.floats(min_value=-5.0, max_value=5.0))
@settings(max_examples=25, deadline=None)
def test_integrate_emf_is_linear(a, b):
    rng = np.random.default_rng(11)
    x = Waveform(GRID_T0, GRID_DT, 1e-6 * rng.normal(size=2000))
    y = Waveform(GRID_T0, GRID_DT, 1e-6 * rng.normal(size=2000))
    combined = integrate_emf(x.with_samples(a * x.samples + b * y.samples), 4e6)
    expected = a * integrate_emf(x, 4e6).samples + b * integrate_emf(y, 4e6).samples
    np.testing.assert_allclose(combined.samples, expected, rtol=1e-9, atol=1e-18)


def test_integrate_emf_rejects_magnetization_input():
    with pytest.raises(RejectedInputError):
        integrate_emf(Waveform(0.0, 1.0, np.zeros(3), unit=UNIT_MAGNETIZATION), 1.0)


def test_noise_is_seeded():
    wave = Waveform(0.0, 1e-12, np.sin(np.linspace(0.0, 20.0, 4000)))
    first = add_noise(wave, 20.0, seed=3)
    again = add_noise(wave, 20.0, seed=3)
    other = add_noise(wave, 20.0, seed=4)
    np.testing.assert_array_equal(first.samples, again.samples)
    assert not np.array_equal(first.samples, other.samples)
    noise_rms = np.sqrt(np.mean((first.samples - wave.samples) ** 2))
    assert 20.0 * math.log10(wave.rms / noise_rms) == pytest.approx(20.0, abs=0.5)
    assert add_noise(wave, math.inf, seed=3) is wave
    with pytest.raises(RejectedInputError):
        add_noise(wave, -math.inf, seed=3)


@given(st.integers(min_value=-40, max_value=40))
@settings(max_examples=25, deadline=None)
def test_cross_correlation_recovers_shift(shift):
    n = np.arange(2000)
    base = np.sin(2 * np.pi * n / 400.0) * np.exp(-((n - 1000) / 300.0) ** 2)
    reference = Waveform(0.0, 1.0, base)
    delayed = Waveform(0.0, 1.0, np.roll(base, shift))
    assert cross_correlation_lag(reference, delayed, max_lag=100.0) == shift


def test_dominant_frequencies_finds_two_tones():
    t = np.arange(8000) * 1e-12
    wave = Waveform(0.0, 1e-12, np.sin(2 * np.pi * 3e9 * t) + 0.8 * np.sin(2 * np.pi * 5e9 * t))
    found = dominant_frequencies(wave, 2)
    np.testing.assert_allclose(found, [3e9, 5e9], rtol=0.01)


def test_jacobian_matches_finite_differences():
    t = np.linspace(-1.0, 10.0, 400)
    params = np.array([1.3, 3.1, 2.0, 2.05])
    analytic = precession_jacobian(t, *params, mode=MODE_FREE)
    step = 1e-6
    for column in range(4):
        up, down = params.copy(), params.copy()
        up[column] += step
        down[column] -= step
        numeric = (precession_model(t, *up) - precession_model(t, *down)) / (2 * step)
        np.testing.assert_allclose(analytic[:, column], numeric, rtol=1e-5, atol=1e-7)


def test_jacobian_matches_finite_differences_at_random_points():
    rng = np.random.default_rng(21)
    t = np.linspace(-1.0, 10.0, 300)
    step = 1e-6
    for _ in range(100):
        params = np.array(
            [rng.uniform(-2.0, 2.0), rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0), rng.uniform(0.5, 5.0)]
        )
        analytic = precession_jacobian(t, *params, mode=MODE_FREE)
        for column in range(4):
            up, down = params.copy(), params.copy()
            up[column] += step
            down[column] -= step
            numeric = (precession_model(t, *up) - precession_model(t, *down)) / (2 * step)
            scale = float(np.max(np.abs(numeric))) + 1e-12
            np.testing.assert_allclose(analytic[:, column], numeric, rtol=1e-6, atol=1e-6 * scale)


def test_fixed_jacobian_has_two_columns():
    assert precession_jacobian(np.linspace(0.0, 1.0, 5), 1.0, 1.0, 1.0, 1.0).shape == (5, 2)
    with pytest.raises(RejectedInputError):
        precession_jacobian(np.linspace(0.0, 1.0, 5), 1.0, 1.0, 1.0, 1.0, mode="loose")


@pytest.mark.parametrize("N,tau", PANELS)
def test_fit_recovers_noise_free_decay(panel_frequencies, N, tau):
    freqs = panel_frequencies[N]
    emf = synthetic_emf(freqs, tau)
    guess = initial_guess(emf)
    init = FitResult.seed(guess.amplitude, guess.tau, freqs.omega_plus, freqs.omega_minus)
    result = fit_precession(emf, init, MODE_FIXED)
    assert result.converged
    assert result.tau == pytest.approx(tau, rel=1e-6)
    assert result.amplitude == pytest.approx(AMPLITUDE, rel=1e-6)
    assert result.residual_rms < 1e-6 * result.initial_residual_rms + 1e-20


def test_initial_guess_sign_and_scale(panel_frequencies):
    freqs = panel_frequencies[71]
    for sign in (1.0, -1.0):
        guess = initial_guess(synthetic_emf(freqs, 3.1e-9, sign * AMPLITUDE))
        assert math.copysign(1.0, guess.amplitude) == sign
        assert guess.tau == pytest.approx(3.1e-9, rel=0.3)
        assert guess.omega_plus == pytest.approx(freqs.omega_plus, rel=0.1)


def test_free_fit_recovers_frequencies(panel_frequencies):
    freqs = panel_frequencies[71]
    emf = synthetic_emf(freqs, 3.1e-9)
    init = FitResult.seed(0.8 * AMPLITUDE, 2.5e-9, 1.003 * freqs.omega_plus, 0.997 * freqs.omega_minus)
    result = fit_precession(emf, init, MODE_FREE)
    assert result.omega_plus == pytest.approx(freqs.omega_plus, rel=1e-6)
    assert result.omega_minus == pytest.approx(freqs.omega_minus, rel=1e-6)
    assert set(result.uncertainties) == {"amplitude", "tau", "omega_plus", "omega_minus"}


def test_fit_is_bit_identical_on_repeat(panel_frequencies):
    freqs = panel_frequencies[61]
    noisy = add_noise(synthetic_emf(freqs, 2.4e-9), 20.0, seed=1)
    init = FitResult.seed(0.8 * AMPLITUDE, 2.0e-9, freqs.omega_plus, freqs.omega_minus)
    first = fit_precession(noisy, init, MODE_FIXED)
    second = fit_precession(noisy, init, MODE_FIXED)
    assert first.to_dict() == second.to_dict()


@pytest.mark.parametrize("seed", range(5))
def test_fit_never_raises_the_residual(panel_frequencies, seed):
    freqs = panel_frequencies[43]
    noisy = add_noise(synthetic_emf(freqs, 1.8e-9), 10.0, seed)
    init = FitResult.seed(0.5 * AMPLITUDE, 1.0e-9, freqs.omega_plus, freqs.omega_minus)
    result = fit_precession(noisy, init, MODE_FIXED)
    assert result.residual_rms <= result.initial_residual_rms


def test_locked_spin_frequencies_fit_worse_than_exact(oxygen, panel_frequencies):
    exact = panel_frequencies[71]
    locked = frequencies_approximate(RotorFieldConfig(71, 1.0), oxygen)
    emf = synthetic_emf(exact, 3.1e-9)
    residuals = {}
    for name, freqs in (("exact", exact), ("locked", locked)):
        init = FitResult.seed(AMPLITUDE, 3.0e-9, freqs.omega_plus, freqs.omega_minus)
        residuals[name] = fit_precession(emf, init, MODE_FIXED).residual_rms
    assert residuals["locked"] > 100.0 * residuals["exact"]


def test_averaging_shots_reduces_noise(panel_frequencies):
    clean = synthetic_emf(panel_frequencies[61], 2.4e-9)
    count = 16
    single = add_noise(clean, 10.0, seed=0)
    averaged = average_shots([add_noise(clean, 10.0, seed) for seed in range(count)])
    single_rms = np.sqrt(np.mean((single.samples - clean.samples) ** 2))
    averaged_rms = np.sqrt(np.mean((averaged.samples - clean.samples) ** 2))
    assert averaged_rms / single_rms == pytest.approx(1.0 / math.sqrt(count), rel=0.15)


def test_trace_spectrum_peaks_at_branch_frequencies(oxygen, half_bar):
    freqs = frequencies_exact(RotorFieldConfig(43, 1.0), oxygen)
    grid = 20e-12 * np.arange(20001)
    params = TraceParameters(amplitude=1e-24, tau=200e-9, frequencies=freqs)
    wave = transverse_trace(params, half_bar, grid).channel(CHANNEL_TRANSVERSE)
    found = dominant_frequencies(wave, 2)
    expected = np.sort([freqs.omega_minus, freqs.omega_plus]) / (2.0 * math.pi)
    bin_width = 1.0 / (grid[-1] - grid[0])
    np.testing.assert_allclose(found, expected, rtol=0.0, atol=2.0 * bin_width)
    np.testing.assert_allclose(found, [3.247e8, 3.503e8], rtol=0.0, atol=5e6)


def test_degenerate_fit_raises_conditioning_error(panel_frequencies):
    freqs = panel_frequencies[43]
    emf = Waveform(GRID_T0, GRID_DT, np.zeros(GRID_SIZE))
    with pytest.raises(ConditioningError):
        fit_precession(emf, FitResult.seed(0.0, 2e-9, freqs.omega_plus, freqs.omega_minus), MODE_FIXED)


def test_fit_rejects_bad_seed(panel_frequencies):
    emf = synthetic_emf(panel_frequencies[43], 1.8e-9)
    with pytest.raises(RejectedInputError):
        fit_precession(emf, FitResult.seed(AMPLITUDE, 0.0, 1e9), MODE_FIXED)
    with pytest.raises(RejectedInputError):
        fit_precession(emf, FitResult.seed(AMPLITUDE, 1e-9, 1e9), "loose")


def test_initial_guess_needs_oscillation():
    with pytest.raises(HeuristicFailureError):
        initial_guess(Waveform(GRID_T0, GRID_DT, np.zeros(GRID_SIZE)))
    t = GRID_T0 + GRID_DT * np.arange(GRID_SIZE)
    single_bump = np.exp(-(((t - 3e-9) / 0.5e-9) ** 2))
    with pytest.raises(HeuristicFailureError):
        initial_guess(Waveform(GRID_T0, GRID_DT, single_bump))


@pytest.mark.slow
@pytest.mark.parametrize("N,tau,window", [(43, 1.8e-9, 0.4e-9), (61, 2.4e-9, 0.4e-9), (71, 3.1e-9, 0.6e-9)])
def test_fit_at_20_db_stays_within_error_bars(panel_frequencies, N, tau, window):
    freqs = panel_frequencies[N]
    clean = synthetic_emf(freqs, tau)
    hits = 0
    for seed in range(200):
        noisy = add_noise(clean, 20.0, seed)
        guess = initial_guess(noisy)
        init = FitResult.seed(guess.amplitude, guess.tau, freqs.omega_plus, freqs.omega_minus)
        result = fit_precession(noisy, init, MODE_FIXED)
        hits += abs(result.tau - tau) <= window
    assert hits >= 180

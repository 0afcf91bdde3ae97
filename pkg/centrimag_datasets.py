"""Model datasets for the measured channels, with headline checks.

No raw measurement is available, so each dataset is rebuilt from the closed
form models with calibration constants read off the measured curves. Every
constant below says where it comes from. Summaries compare the model's
headline numbers with the reference values inside explicit tolerances.

Registered datasets: ``fieldfree`` (longitudinal, no field, two pressures),
``magnitudes`` (all three channels at N = 89, 1 T), ``fits`` (transverse EMF
panels fitted back) and ``pressure`` (pressure growth and the in-field phase lag).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from centrimag_coil import CoilGeometry, SampleModel, coupling_coefficient, emf_from_magnetization, AXIS_Y
from centrimag_constants import MolecularConstants, bar_to_pascal, bohr_magnetons, from_bohr_magnetons
from centrimag_dynamics import (
    CHANNEL_LONGITUDINAL,
    CHANNEL_TRANSVERSE,
    GasConditions,
    MagnetizationTrace,
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
)
from centrimag_errors import RejectedInputError
from centrimag_spectrum import RotorFieldConfig, frequencies_approximate, frequencies_exact
from centrimag_waveform import FitResult, Waveform, cross_correlation_lag, fit_precession

logger = logging.getLogger(__name__)

TEMPERATURE = 295.0
MILLIGAUSS_PER_TESLA = 1.0e7

# ---------------------------------------------------------------------------
# Calibrations
# ---------------------------------------------------------------------------

# Field-free longitudinal moment, N = 33, 0.45 and 0.9 bar. Time constants at
# 0.45 bar read off the slower measured curve; tau_plus = 1.5 tau_minus is the
# 50 % spread of the two spin populations that the text quotes.
FIELDFREE_N = 33
FIELDFREE_PRESSURES_BAR = (0.45, 0.9)
FIELDFREE_REFERENCE_BAR = 0.45
FIELDFREE_TAU_MINUS = 4.0e-9
FIELDFREE_TAU_PLUS = 6.0e-9
FIELDFREE_RISE = 1.0e-9

# N = 89, 1 T, 0.5 bar. Transverse peak 0.65 muB (quoted in the text); the
# in-field longitudinal peak and both decay times read off the measured curves.
MAGNITUDE_N = 89
MAGNITUDE_B = 1.0
MAGNITUDE_PRESSURE_BAR = 0.5
MAGNITUDE_TRANSVERSE_PEAK_BOHR = 0.65
MAGNITUDE_INFIELD_PEAK_BOHR = 0.35
MAGNITUDE_TAU = 3.0e-9
MAGNITUDE_FIELDFREE_TAU_MINUS = 8.0e-9
MAGNITUDE_FIELDFREE_TAU_PLUS = 12.0e-9
MAGNITUDE_FIELDFREE_RISE = 2.0e-9

# Transverse EMF panels: fitted decay times 1.8, 2.4, 3.1 ns for N = 43, 61,
# 71 quoted with the fits; the 0.5 T panel reuses the N = 71 value.
FIT_PANELS = (
    ("a", 43, 1.0, 1.8e-9),
    ("b", 61, 1.0, 2.4e-9),
    ("c", 71, 1.0, 3.1e-9),
    ("d", 71, 0.5, 3.1e-9),
)
FIT_PRESSURE_BAR = 0.5
FIT_AMPLITUDE_BOHR = 0.4

# Pressure series at N = 89, 1 T, normalized at the 0.8 ns peak; decay time
# taken as collisional, inversely proportional to pressure, 3 ns at 0.5 bar.
PRESSURE_N = 89
PRESSURE_PRESSURES_BAR = (0.25, 0.5, 1.0)
PRESSURE_REFERENCE_BAR = 0.5
PRESSURE_TAU = 3.0e-9
PRESSURE_PHASE_N = 71
PRESSURE_PHASE_TAU = 3.1e-9

# Reference headline numbers
REFERENCE_QUARTER_PERIOD = 0.8e-9
REFERENCE_TRANSVERSE_PEAK_BOHR = 0.65
REFERENCE_FLUX_DENSITY_MG = 40.0
REFERENCE_BOLTZMANN = 0.003
REFERENCE_FIELDFREE_PEAK_BOHR = 0.16


@dataclass
class ModelDataset:
    """Traces and waveforms of one dataset plus its headline summary."""

    tag: str
    traces: Dict[str, MagnetizationTrace] = field(default_factory=dict)
    waveforms: Dict[str, Waveform] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    headlines: List[Dict[str, Any]] = field(default_factory=list)

    def check(self, quantity: str, model: float, reference: Optional[float], low: float, high: float) -> bool:
        within = bool(low <= model <= high)
        self.headlines.append(
            {
                "quantity": quantity,
                "model": model,
                "reference": reference,
                "low": low,
                "high": high,
                "within": within,
            }
        )
        if not within:
            logger.warning("%s: %s = %.4g outside [%.4g, %.4g]", self.tag, quantity, model, low, high)
        return within

    @property
    def all_within(self) -> bool:
        return all(item["within"] for item in self.headlines)

    def to_dict(self) -> dict:
        return {
            "dataset": self.tag,
            "summary": self.summary,
            "headlines": self.headlines,
            "all_within_tolerance": self.all_within,
            "traces": sorted(self.traces),
            "waveforms": sorted(self.waveforms),
        }


def _gas(pressure_bar: float) -> GasConditions:
    return GasConditions.from_bar(pressure_bar, TEMPERATURE)


def _rise_time(t: np.ndarray, mu: np.ndarray) -> float:
    """Time for |mu| to first reach half its peak."""
    magnitude = np.abs(mu)
    index = int(np.argmax(magnitude >= 0.5 * magnitude.max()))
    return float(t[index])


def _decay_time(t: np.ndarray, mu: np.ndarray) -> float:
    """Time from the peak until |mu| drops below peak / e."""
    magnitude = np.abs(mu)
    peak = int(np.argmax(magnitude))
    below = np.flatnonzero(magnitude[peak:] < magnitude[peak] / math.e)
    return float(t[peak + below[0]] - t[peak]) if below.size else math.inf


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def reproduce_fieldfree(constants: MolecularConstants) -> ModelDataset:
    dataset = ModelDataset("fieldfree")
    grid = time_grid(-2.0e-9, 30.0e-9, 10.0e-12)
    reference = TraceParameters(
        amplitude=0.0, tau=math.inf, rise_time=FIELDFREE_RISE, tau_plus=FIELDFREE_TAU_PLUS, tau_minus=FIELDFREE_TAU_MINUS
    )
    rises, decays, peaks = {}, {}, {}
    for pressure in FIELDFREE_PRESSURES_BAR:
        gas = _gas(pressure)
        params = pressure_scaled(reference, gas, bar_to_pascal(FIELDFREE_REFERENCE_BAR), scale_decay=True)
        trace = longitudinal_trace_fieldfree(params, gas, grid, N=FIELDFREE_N, constants=constants)
        key = f"longitudinal_{pressure:g}bar"
        dataset.traces[key] = trace
        t_peak, mu_peak = peak_moment(trace, CHANNEL_LONGITUDINAL)
        peaks[key] = {"time_s": t_peak, "mu_bohr": bohr_magnetons(mu_peak)}
        rises[key] = _rise_time(trace.time_axis, trace.mu_longitudinal)
        decays[key] = _decay_time(trace.time_axis, trace.mu_longitudinal)

    low_key, high_key = (f"longitudinal_{p:g}bar" for p in FIELDFREE_PRESSURES_BAR)
    boltzmann = boltzmann_imbalance(FIELDFREE_N, TEMPERATURE, constants)
    t_closed, value_closed = two_rate_peak(FIELDFREE_TAU_PLUS, FIELDFREE_TAU_MINUS)
    closed_bohr = value_closed * constants.abs_g
    dataset.summary = {
        "N": FIELDFREE_N,
        "temperature_k": TEMPERATURE,
        "peaks": peaks,
        "half_rise_time_s": rises,
        "decay_time_s": decays,
        "faster_at_higher_pressure": rises[high_key] < rises[low_key] and decays[high_key] < decays[low_key],
        "boltzmann_factor": boltzmann,
        "two_rate_closed_form_peak_bohr": closed_bohr,
        "two_rate_closed_form_peak_time_s": t_closed,
        "constants": constants.to_dict(),
    }
    dataset.check("boltzmann_factor", boltzmann, REFERENCE_BOLTZMANN, 0.002, 0.004)
    dataset.check(
        "two_rate_peak_bohr", closed_bohr, REFERENCE_FIELDFREE_PEAK_BOHR,
        REFERENCE_FIELDFREE_PEAK_BOHR / 2.0, REFERENCE_FIELDFREE_PEAK_BOHR * 2.0,
    )
    dataset.check("higher_pressure_faster", float(dataset.summary["faster_at_higher_pressure"]), 1.0, 1.0, 1.0)
    return dataset


def reproduce_magnitudes(constants: MolecularConstants) -> ModelDataset:
    dataset = ModelDataset("magnitudes")
    grid = time_grid(-2.0e-9, 15.0e-9, 2.0e-12)
    gas = _gas(MAGNITUDE_PRESSURE_BAR)
    rotor = RotorFieldConfig(MAGNITUDE_N, MAGNITUDE_B)
    exact = frequencies_exact(rotor, constants)
    approximate = frequencies_approximate(rotor, constants)

    transverse = calibrate_amplitude(
        TraceParameters(amplitude=1.0, tau=MAGNITUDE_TAU, frequencies=exact),
        grid,
        from_bohr_magnetons(MAGNITUDE_TRANSVERSE_PEAK_BOHR),
        kind=CHANNEL_TRANSVERSE,
    )
    infield = calibrate_amplitude(
        TraceParameters(amplitude=1.0, tau=MAGNITUDE_TAU, frequencies=exact),
        grid,
        from_bohr_magnetons(MAGNITUDE_INFIELD_PEAK_BOHR),
        kind=CHANNEL_LONGITUDINAL,
    )
    fieldfree = TraceParameters(
        amplitude=0.0,
        tau=math.inf,
        rise_time=MAGNITUDE_FIELDFREE_RISE,
        tau_plus=MAGNITUDE_FIELDFREE_TAU_PLUS,
        tau_minus=MAGNITUDE_FIELDFREE_TAU_MINUS,
    )
    dataset.traces["transverse"] = transverse_trace(transverse, gas, grid, g_factor=constants.g_factor)
    dataset.traces["longitudinal_infield"] = longitudinal_trace_infield(infield, gas, grid, g_factor=constants.g_factor)
    dataset.traces["longitudinal_fieldfree"] = longitudinal_trace_fieldfree(
        fieldfree, gas, grid, N=MAGNITUDE_N, constants=constants
    )

    t_peak, mu_peak = peak_moment(dataset.traces["transverse"], CHANNEL_TRANSVERSE)
    _, b_perp = flux_density(dataset.traces["transverse"])
    flux_mg = float(np.max(np.abs(b_perp.samples))) * MILLIGAUSS_PER_TESLA
    dataset.summary = {
        "N": MAGNITUDE_N,
        "B_T": MAGNITUDE_B,
        "pressure_bar": MAGNITUDE_PRESSURE_BAR,
        "number_density_per_cm3": number_density(gas) * 1e-6,
        "transverse_peak_bohr": bohr_magnetons(mu_peak),
        "transverse_peak_time_s": t_peak,
        "quarter_period_approximate_s": approximate.quarter_period_plus,
        "quarter_period_exact_plus_s": exact.quarter_period_plus,
        "quarter_period_exact_minus_s": exact.quarter_period_minus,
        "flux_density_mG": flux_mg,
        "calibrated_amplitude_bohr": {
            "transverse": bohr_magnetons(transverse.amplitude),
            "longitudinal_infield": bohr_magnetons(infield.amplitude),
        },
        "frequencies": {"exact": exact.to_dict(), "approximate": approximate.to_dict()},
        "constants": constants.to_dict(),
    }
    dataset.check("transverse_peak_bohr", bohr_magnetons(mu_peak), REFERENCE_TRANSVERSE_PEAK_BOHR, 0.6, 0.7)
    dataset.check("flux_density_mG", flux_mg, REFERENCE_FLUX_DENSITY_MG, 36.0, 40.0)
    dataset.check(
        "quarter_period_s", approximate.quarter_period_plus, REFERENCE_QUARTER_PERIOD,
        0.97 * REFERENCE_QUARTER_PERIOD, 1.03 * REFERENCE_QUARTER_PERIOD,
    )
    return dataset


def reproduce_fits(
    constants: MolecularConstants,
    coil: Optional[CoilGeometry] = None,
    sample: Optional[SampleModel] = None,
) -> ModelDataset:
    dataset = ModelDataset("fits")
    coil = coil or CoilGeometry.transverse_default()
    sample = sample or SampleModel.line()
    coupling = coupling_coefficient(coil, sample, AXIS_Y)
    grid = time_grid(-2.0e-9, 10.0e-9, 2.0e-12)
    gas = _gas(FIT_PRESSURE_BAR)
    n_c = number_density(gas)
    amplitude = from_bohr_magnetons(FIT_AMPLITUDE_BOHR)

    panels = {}
    for panel, N, B, tau in FIT_PANELS:
        freqs = frequencies_exact(RotorFieldConfig(N, B), constants)
        params = TraceParameters(amplitude=amplitude, tau=tau, frequencies=freqs)
        trace = transverse_trace(params, gas, grid, g_factor=constants.g_factor)
        emf = emf_from_magnetization(trace, coil, sample, coefficient=coupling.coefficient)
        emf = emf.with_samples(emf.samples, N=N, B_T=B, P_bar=FIT_PRESSURE_BAR, panel=panel)
        key = f"emf_{panel}_N{N}_B{B:g}T"
        dataset.traces[f"transverse_{panel}_N{N}_B{B:g}T"] = trace
        dataset.waveforms[key] = emf

        # E = -(1/c) d(n_c mu)/dt, so the model amplitude is n_c A / c
        init = FitResult.seed(
            amplitude=n_c * amplitude / coupling.coefficient * 0.9,
            tau=tau * 1.2,
            omega_plus=freqs.omega_plus,
            omega_minus=freqs.omega_minus,
        )
        fit = fit_precession(emf, init)
        panels[key] = {
            "N": N,
            "B_T": B,
            "tau_true_s": tau,
            "tau_fitted_s": fit.tau,
            "fit_converged": fit.converged,
            "omega_plus_rad_per_s": freqs.omega_plus,
            "omega_minus_rad_per_s": freqs.omega_minus,
            "period_s": 2.0 * math.pi / freqs.max_omega,
            "peak_emf_uV": float(np.max(np.abs(emf.samples))) * 1e6,
        }

    period_ratio = panels["emf_d_N71_B0.5T"]["period_s"] / panels["emf_c_N71_B1T"]["period_s"]
    periods = [panels[k]["period_s"] for k in sorted(panels)[:3]]
    dataset.summary = {
        "pressure_bar": FIT_PRESSURE_BAR,
        "coupling": coupling.to_dict(),
        "coil": coil.to_dict(),
        "sample": sample.to_dict(),
        "panels": panels,
        "period_ratio_half_field": period_ratio,
        "periods_increase_with_N": bool(periods[0] < periods[1] < periods[2]),
        "constants": constants.to_dict(),
    }
    dataset.check("period_ratio_half_field", period_ratio, 2.0, 1.9, 2.1)
    dataset.check("periods_increase_with_N", float(dataset.summary["periods_increase_with_N"]), 1.0, 1.0, 1.0)
    return dataset


def reproduce_pressure(constants: MolecularConstants) -> ModelDataset:
    dataset = ModelDataset("pressure")
    grid = time_grid(-2.0e-9, 15.0e-9, 2.0e-12)
    exact = frequencies_exact(RotorFieldConfig(PRESSURE_N, 1.0), constants)
    reference = TraceParameters(amplitude=from_bohr_magnetons(0.4), tau=PRESSURE_TAU, frequencies=exact)

    magnitudes = {}
    lifetimes = {}
    for pressure in PRESSURE_PRESSURES_BAR:
        gas = _gas(pressure)
        params = pressure_scaled(reference, gas, bar_to_pascal(PRESSURE_REFERENCE_BAR), scale_decay=True)
        trace = transverse_trace(params, gas, grid, g_factor=constants.g_factor)
        key = f"transverse_{pressure:g}bar"
        dataset.traces[key] = trace
        wave = trace.channel(CHANNEL_TRANSVERSE, P_bar=pressure)
        index = int(np.argmin(np.abs(trace.time_axis - REFERENCE_QUARTER_PERIOD)))
        norm = float(wave.samples[index])
        dataset.waveforms[f"normalized_{pressure:g}bar"] = wave.scaled(1.0 / norm, normalized_at_s=0.8e-9)
        magnitudes[key] = float(np.max(np.abs(trace.transverse)))
        lifetimes[key] = params.tau

    phase_freqs = frequencies_exact(RotorFieldConfig(PRESSURE_PHASE_N, 1.0), constants)
    gas = _gas(PRESSURE_REFERENCE_BAR)
    phase_grid = time_grid(-2.0e-9, 15.0e-9, 2.0e-12)
    perp = transverse_trace(
        TraceParameters(amplitude=from_bohr_magnetons(0.4), tau=PRESSURE_PHASE_TAU, frequencies=phase_freqs),
        gas, phase_grid, g_factor=constants.g_factor,
    )
    # bare carrier: the lag compares phases, not the turn-on
    par = longitudinal_trace_infield(
        TraceParameters(
            amplitude=from_bohr_magnetons(0.2), tau=PRESSURE_PHASE_TAU, frequencies=phase_freqs, rise_time=0.0
        ),
        gas, phase_grid, g_factor=constants.g_factor,
    )
    dataset.traces[f"phase_transverse_N{PRESSURE_PHASE_N}"] = perp
    dataset.traces[f"phase_longitudinal_N{PRESSURE_PHASE_N}"] = par
    omega = 0.5 * (phase_freqs.omega_plus + phase_freqs.omega_minus)
    quarter = math.pi / (2.0 * omega)
    # compare the carriers: the shared decay envelope would pull the lag short
    reference = par.channel(CHANNEL_LONGITUDINAL).window(t_min=0.0)
    delayed = perp.channel(CHANNEL_TRANSVERSE).window(t_min=0.0)
    envelope = np.exp(-reference.time_axis / PRESSURE_PHASE_TAU)
    lag = cross_correlation_lag(
        reference.with_samples(reference.samples / envelope),
        delayed.with_samples(delayed.samples / envelope),
        max_lag=2.0 * quarter,
    )

    low, mid, high = (f"transverse_{p:g}bar" for p in PRESSURE_PRESSURES_BAR)
    dataset.summary = {
        "N": PRESSURE_N,
        "peak_magnetization_A_per_m": magnitudes,
        "decay_time_s": lifetimes,
        "magnetization_grows_with_pressure": magnitudes[low] < magnitudes[mid] < magnitudes[high],
        "phase_N": PRESSURE_PHASE_N,
        "phase_lag_s": lag,
        "quarter_period_s": quarter,
        "constants": constants.to_dict(),
    }
    dataset.check("phase_lag_over_quarter_period", lag / quarter, 1.0, 0.9, 1.1)
    dataset.check(
        "magnetization_grows_with_pressure", float(dataset.summary["magnetization_grows_with_pressure"]), 1.0, 1.0, 1.0
    )
    return dataset


DATASETS: Dict[str, Callable[..., ModelDataset]] = {
    "fieldfree": reproduce_fieldfree,
    "magnitudes": reproduce_magnitudes,
    "fits": reproduce_fits,
    "pressure": reproduce_pressure,
}

# short tags used by the reproduce command
ALIASES: Dict[str, str] = {
    "fig2": "fieldfree",
    "fig3": "magnitudes",
    "fig4": "fits",
    "fig5": "pressure",
}

TAGS = (*ALIASES, *DATASETS)


def resolve_tag(tag: str) -> str:
    name = ALIASES.get(tag, tag)
    if name not in DATASETS:
        raise RejectedInputError(f"unknown dataset {tag!r}; expected one of {', '.join(TAGS)}")
    return name


def reproduce(tag: str, constants: MolecularConstants | None = None, **kwargs) -> ModelDataset:
    """Build the dataset registered under ``tag`` or one of its short aliases."""
    name = resolve_tag(tag)
    constants = constants or MolecularConstants.oxygen()
    logger.info("reproducing %s (%s)", name, tag)
    return DATASETS[name](constants, **kwargs)

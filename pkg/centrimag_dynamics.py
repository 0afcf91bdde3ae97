"""Ensemble magnetization of centrifuged O2 from single-molecule spin dynamics.

Frame: beam and initial N along x (longitudinal), field along z, transverse
axis y. Every trace is causal: zero before the centrifuge pulse at t = 0.
Per-molecule moments are kept in J/T and multiplied by the number density of
centrifuged molecules to give magnetization in A/m.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from centrimag_constants import UNIVERSAL, MolecularConstants, bar_to_pascal, bohr_magnetons
from centrimag_errors import PhysicalBoundError, RejectedInputError
from centrimag_spectrum import (
    BRANCH_MINUS,
    BRANCH_PLUS,
    PrecessionFrequencies,
    zero_field_energies,
)
from centrimag_waveform import UNIT_MAGNETIZATION, UNIT_TESLA, Waveform

logger = logging.getLogger(__name__)

DEFAULT_ETA = 0.04
# in-field rise is set during the centrifuge pulse and does not scale with P
INFIELD_RISE_TIME = 0.25e-9

CHANNEL_LONGITUDINAL = "longitudinal"
CHANNEL_TRANSVERSE = "transverse"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class GasConditions:
    """Gas pressure (Pa), temperature (K) and centrifuged fraction eta."""

    pressure: float
    temperature: float
    eta: float = DEFAULT_ETA

    def __post_init__(self) -> None:
        if not (math.isfinite(self.pressure) and self.pressure > 0.0):
            raise RejectedInputError(f"pressure must be finite and > 0 Pa, got {self.pressure}")
        if not (math.isfinite(self.temperature) and self.temperature > 0.0):
            raise RejectedInputError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 < self.eta <= 1.0:
            raise RejectedInputError(f"centrifuged fraction must lie in (0, 1], got {self.eta}")

    @classmethod
    def from_bar(cls, pressure_bar: float, temperature: float = 295.0, eta: float = DEFAULT_ETA) -> "GasConditions":
        return cls(pressure=bar_to_pascal(pressure_bar), temperature=temperature, eta=eta)

    def to_dict(self) -> dict:
        return {"pressure_pa": self.pressure, "temperature_k": self.temperature, "eta": self.eta}


@dataclass(frozen=True, slots=True)
class TraceParameters:
    """Per-molecule amplitude (J/T), decay times (s) and branch frequencies.

    ``rise_time == 0`` means an instantaneous rise; ``None`` leaves it to the
    model (``INFIELD_RISE_TIME`` in field, required for the field-free model).
    ``tau`` may be ``inf``. ``tau_plus``/``tau_minus`` are only used by the
    field-free two-rate model.
    """

    amplitude: float
    tau: float
    frequencies: Optional[PrecessionFrequencies] = None
    rise_time: Optional[float] = None
    tau_plus: Optional[float] = None
    tau_minus: Optional[float] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0.0):
            raise RejectedInputError("amplitude must be finite and >= 0")
        if not self.tau > 0.0:
            raise RejectedInputError("decay time tau must be > 0")
        if self.rise_time is not None and not (math.isfinite(self.rise_time) and self.rise_time >= 0.0):
            raise RejectedInputError("rise_time must be finite and >= 0")
        for name in ("tau_plus", "tau_minus"):
            value = getattr(self, name)
            if value is not None and not value > 0.0:
                raise RejectedInputError(f"{name} must be > 0")

    def require_frequencies(self) -> PrecessionFrequencies:
        if self.frequencies is None:
            raise RejectedInputError("this trace needs precession frequencies")
        return self.frequencies


@dataclass(frozen=True, eq=False)
class MagnetizationTrace:
    """Magnetization (A/m) and per-molecule moment (J/T) on a uniform grid."""

    time_axis: NDArray[np.float64]
    longitudinal: NDArray[np.float64]
    transverse: NDArray[np.float64]
    mu_longitudinal: NDArray[np.float64]
    mu_transverse: NDArray[np.float64]
    gas: GasConditions
    frequencies: Optional[PrecessionFrequencies] = None
    g_factor: float = 2.0023

    def __post_init__(self) -> None:
        t = np.asarray(self.time_axis, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise RejectedInputError("time axis needs at least two samples")
        steps = np.diff(t)
        if not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0) or steps[0] <= 0.0:
            raise RejectedInputError("time axis must be uniform and increasing")
        bound = 2.0 * abs(self.g_factor) * UNIVERSAL.mu_B * (1.0 + 1e-12)
        for name in ("mu_longitudinal", "mu_transverse"):
            mu = np.asarray(getattr(self, name), dtype=float)
            if mu.shape != t.shape:
                raise RejectedInputError(f"{name} does not match the time axis")
            peak = float(np.max(np.abs(mu)))
            if peak > bound:
                raise PhysicalBoundError(
                    f"{name} peaks at {bohr_magnetons(peak):.4g} muB, above the spin-1 bound "
                    f"{bohr_magnetons(bound):.4g} muB"
                )

    @property
    def dt(self) -> float:
        return float(self.time_axis[1] - self.time_axis[0])

    @property
    def per_molecule_unit(self) -> Dict[str, NDArray[np.float64]]:
        """Per-molecule moments in Bohr magnetons."""
        return {
            CHANNEL_LONGITUDINAL: bohr_magnetons(self.mu_longitudinal),
            CHANNEL_TRANSVERSE: bohr_magnetons(self.mu_transverse),
        }

    def channel(self, name: str, **meta) -> Waveform:
        values = {CHANNEL_LONGITUDINAL: self.longitudinal, CHANNEL_TRANSVERSE: self.transverse}
        if name not in values:
            raise RejectedInputError(f"unknown channel {name!r}")
        return Waveform(
            t0=float(self.time_axis[0]),
            dt=self.dt,
            samples=values[name],
            unit=UNIT_MAGNETIZATION,
            meta={"channel": name, **meta},
        )


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def time_grid(t_start: float, t_end: float, dt: float) -> NDArray[np.float64]:
    """Uniform grid from t_start to t_end (inclusive when it lands on a step)."""
    if not dt > 0.0 or t_end <= t_start:
        raise RejectedInputError("grid needs dt > 0 and t_end > t_start")
    count = int(math.floor((t_end - t_start) / dt + 1e-9)) + 1
    return t_start + dt * np.arange(count)


def _rise(t: NDArray, rise_time: float) -> NDArray:
    if rise_time == 0.0:
        return np.ones_like(t)
    return -np.expm1(-t / rise_time)


def _decay(t: NDArray, tau: float) -> NDArray:
    return np.exp(-t / tau)


def _assemble(
    t: NDArray, mu_par: NDArray, mu_perp: NDArray, params: TraceParameters, gas: GasConditions, g_factor: float
) -> MagnetizationTrace:
    causal = t >= 0.0
    mu_par = np.where(causal, mu_par, 0.0)
    mu_perp = np.where(causal, mu_perp, 0.0)
    n_c = number_density(gas)
    return MagnetizationTrace(
        time_axis=t,
        longitudinal=n_c * mu_par,
        transverse=n_c * mu_perp,
        mu_longitudinal=mu_par,
        mu_transverse=mu_perp,
        gas=gas,
        frequencies=params.frequencies,
        g_factor=g_factor,
    )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def number_density(gas: GasConditions) -> float:
    """Centrifuged molecules per m^3: eta P / (k_B T)."""
    return gas.eta * gas.pressure / (UNIVERSAL.k_B * gas.temperature)


def _transverse_kernel(params: TraceParameters, t: NDArray) -> NDArray:
    freqs = params.require_frequencies()
    tc = np.clip(t, 0.0, None)
    sines = np.sin(freqs.omega_plus * tc) + np.sin(freqs.omega_minus * tc)
    return np.where(t >= 0.0, params.amplitude * sines * _decay(tc, params.tau), 0.0)


def _infield_kernel(params: TraceParameters, t: NDArray) -> NDArray:
    freqs = params.require_frequencies()
    tc = np.clip(t, 0.0, None)
    cosines = np.cos(freqs.omega_plus * tc) + np.cos(freqs.omega_minus * tc)
    rise_time = INFIELD_RISE_TIME if params.rise_time is None else params.rise_time
    value = params.amplitude * cosines * _decay(tc, params.tau) * _rise(tc, rise_time)
    return np.where(t >= 0.0, value, 0.0)


def transverse_trace(
    params: TraceParameters,
    gas: GasConditions,
    grid: ArrayLike,
    *,
    g_factor: float = 2.0023,
    field_sign: float = 1.0,
) -> MagnetizationTrace:
    """mu_perp(t) = A (sin W+ t + sin W- t) exp(-t/tau); longitudinal channel zero.

    The transverse moment follows the field direction: ``field_sign = -1``
    (inverted field) flips it.
    """
    if field_sign not in (1.0, -1.0):
        raise RejectedInputError("field_sign must be +1 or -1")
    t = np.asarray(grid, dtype=float)
    mu = field_sign * _transverse_kernel(params, t)
    return _assemble(t, np.zeros_like(t), mu, params, gas, g_factor)


def longitudinal_trace_infield(
    params: TraceParameters, gas: GasConditions, grid: ArrayLike, *, g_factor: float = 2.0023
) -> MagnetizationTrace:
    """mu_par(t) = A (cos W+ t + cos W- t) exp(-t/tau) R(t), a quarter period ahead
    of the transverse precession.

    R(t) = 1 - exp(-t/rise_time) with ``INFIELD_RISE_TIME`` unless the
    parameters set a rise time, so the trace starts at zero.
    """
    t = np.asarray(grid, dtype=float)
    mu = _infield_kernel(params, t)
    return _assemble(t, mu, np.zeros_like(t), params, gas, g_factor)


def boltzmann_imbalance(N: int, T: float, constants: MolecularConstants | None = None) -> float:
    """tanh(|dE| / k_B T) between the S_N = +1 and S_N = -1 levels at fixed N."""
    if N < 1:
        raise RejectedInputError("N must be >= 1")
    if not T > 0.0:
        raise RejectedInputError("temperature must be positive")
    constants = constants or MolecularConstants.oxygen()
    energies = zero_field_energies(N, constants)
    delta = abs(energies[BRANCH_PLUS] - energies[BRANCH_MINUS])
    return math.tanh(delta / (UNIVERSAL.k_B * T))


def longitudinal_trace_fieldfree(
    params: TraceParameters,
    gas: GasConditions,
    grid: ArrayLike,
    *,
    N: int,
    constants: MolecularConstants | None = None,
    include_bias: bool = True,
) -> MagnetizationTrace:
    """Two-rate collisional model plus the thermal bias between S_N = +/-1.

    The S_N = +1 population carries a moment opposite to N; when it outlives
    the S_N = -1 population the net moment is positive.
    """
    if params.tau_plus is None or params.tau_minus is None:
        raise RejectedInputError("field-free model needs tau_plus and tau_minus")
    if params.rise_time is None:
        raise RejectedInputError("field-free model needs a rise_time (0 for an instantaneous rise)")
    constants = constants or MolecularConstants.oxygen()
    t = np.asarray(grid, dtype=float)
    tc = np.clip(t, 0.0, None)
    rise = _rise(tc, params.rise_time)
    unit = constants.abs_g * UNIVERSAL.mu_B
    mu = unit / 3.0 * (_decay(tc, params.tau_plus) - _decay(tc, params.tau_minus)) * rise
    if include_bias:
        tau_mean = 0.5 * (params.tau_plus + params.tau_minus)
        mu = mu + unit * boltzmann_imbalance(N, gas.temperature, constants) * _decay(tc, tau_mean) * rise
    return _assemble(t, mu, np.zeros_like(t), params, gas, constants.g_factor)


def pressure_scaled(
    params: TraceParameters, gas: GasConditions, reference_pressure: float, *, scale_decay: bool = False
) -> TraceParameters:
    """Collisional time constants at ``gas.pressure`` from values at the reference.

    rise_time_ref * (P_ref / P); decay times scale the same way with
    ``scale_decay``. An unset rise time stays unset.
    """
    if not (reference_pressure > 0.0 and gas.pressure > 0.0):
        raise RejectedInputError("pressure scaling needs positive pressures")
    factor = reference_pressure / gas.pressure
    changes = {}
    if params.rise_time is not None:
        changes["rise_time"] = params.rise_time * factor
    if scale_decay:
        changes["tau"] = params.tau * factor
        if params.tau_plus is not None:
            changes["tau_plus"] = params.tau_plus * factor
        if params.tau_minus is not None:
            changes["tau_minus"] = params.tau_minus * factor
    return replace(params, **changes)


def flux_density(trace: MagnetizationTrace) -> Tuple[Waveform, Waveform]:
    """mu_0 M for the longitudinal and transverse channels (tesla)."""
    out = []
    for name in (CHANNEL_LONGITUDINAL, CHANNEL_TRANSVERSE):
        wave = trace.channel(name)
        out.append(wave.with_samples(UNIVERSAL.mu_0 * wave.samples, unit=UNIT_TESLA))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Added analysis
# ---------------------------------------------------------------------------


def peak_moment(trace: MagnetizationTrace, channel: str = CHANNEL_TRANSVERSE) -> Tuple[float, float]:
    """(time, signed per-molecule moment in J/T) at the largest |moment|."""
    mu = trace.mu_transverse if channel == CHANNEL_TRANSVERSE else trace.mu_longitudinal
    index = int(np.argmax(np.abs(mu)))
    return float(trace.time_axis[index]), float(mu[index])


def two_rate_peak(tau_plus: float, tau_minus: float) -> Tuple[float, float]:
    """Time and value of the extremum of (1/3)(exp(-t/tau_plus) - exp(-t/tau_minus)).

    The value is in units of |g| muB.
    """
    if tau_plus == tau_minus:
        return 0.0, 0.0
    t_peak = math.log(tau_plus / tau_minus) / (1.0 / tau_minus - 1.0 / tau_plus)
    value = (math.exp(-t_peak / tau_plus) - math.exp(-t_peak / tau_minus)) / 3.0
    return t_peak, value


def calibrate_amplitude(
    params: TraceParameters,
    grid: ArrayLike,
    target_peak: float,
    *,
    kind: str = CHANNEL_TRANSVERSE,
) -> TraceParameters:
    """Amplitude that makes the kernel peak at ``target_peak`` (J/T) on ``grid``."""
    unit_params = replace(params, amplitude=1.0)
    t = np.asarray(grid, dtype=float)
    if kind == CHANNEL_TRANSVERSE:
        kernel = _transverse_kernel(unit_params, t)
    elif kind == CHANNEL_LONGITUDINAL:
        kernel = _infield_kernel(unit_params, t)
    else:
        raise RejectedInputError(f"unknown channel {kind!r}")
    kernel_peak = float(np.max(np.abs(kernel)))
    if kernel_peak == 0.0:
        raise RejectedInputError("kernel is identically zero on this grid")
    return replace(params, amplitude=abs(target_peak / kernel_peak))


def vector_resolved(params: TraceParameters, grid: ArrayLike) -> Dict[str, NDArray[np.float64]]:
    """In-plane (x, y) moment of each branch, damped with tau.

    S_N = +1 starts along +x and turns by +W+ t, S_N = -1 starts along -x and
    turns by -W- t. The y parts add up to the transverse kernel; the x parts
    cancel when the two frequencies coincide.
    """
    freqs = params.require_frequencies()
    t = np.asarray(grid, dtype=float)
    tc = np.clip(t, 0.0, None)
    causal = (t >= 0.0).astype(float)
    envelope = params.amplitude * _decay(tc, params.tau) * causal
    angle_plus = freqs.omega_plus * tc
    angle_minus = -freqs.omega_minus * tc
    return {
        f"{BRANCH_PLUS}_x": envelope * np.cos(angle_plus),
        f"{BRANCH_PLUS}_y": envelope * np.sin(angle_plus),
        f"{BRANCH_MINUS}_x": -envelope * np.cos(angle_minus),
        f"{BRANCH_MINUS}_y": -envelope * np.sin(angle_minus),
    }

"""Waveform arithmetic of the measurement protocol and the damped-precession fit.

The protocol mirrors the experiment: every EMF trace is averaged over shots,
differenced between opposite centrifuge senses (and, for the transverse
channel, opposite field signs), baseline-corrected on the pre-trigger region,
integrated into magnetization and fitted with the derivative of two damped
counter-precessing sinusoids.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import least_squares
from scipy.signal import correlate, correlation_lags, find_peaks

from centrimag_errors import (
    ConditioningError,
    HeuristicFailureError,
    RejectedInputError,
)

logger = logging.getLogger(__name__)

UNIT_VOLT = "volt"
UNIT_MAGNETIZATION = "ampere/meter"
UNIT_TESLA = "tesla"
UNITS = (UNIT_VOLT, UNIT_MAGNETIZATION, UNIT_TESLA)

MODE_FIXED = "frequencies-fixed"
MODE_FREE = "frequencies-free"

DEFAULT_BASELINE_END = -1.0e-9

# fitter works in ns and rad/ns
_NS = 1.0e-9


# ---------------------------------------------------------------------------
# Waveform
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled time series starting at t0 with spacing dt."""

    t0: float
    dt: float
    samples: NDArray[np.float64]
    unit: str = UNIT_VOLT
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "meta", dict(self.meta))
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise RejectedInputError(f"sample spacing must be positive, got {self.dt}")
        if not math.isfinite(self.t0):
            raise RejectedInputError("t0 must be finite")
        if samples.ndim != 1 or samples.size == 0:
            raise RejectedInputError("waveform needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise RejectedInputError("waveform samples must all be finite")
        if self.unit not in UNITS:
            raise RejectedInputError(f"unknown waveform unit {self.unit!r}")

    @classmethod
    def from_arrays(cls, time_axis: ArrayLike, values: ArrayLike, unit: str = UNIT_VOLT, meta=None) -> "Waveform":
        t = np.asarray(time_axis, dtype=float)
        if t.size < 2:
            raise RejectedInputError("need at least two time samples to infer dt")
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if not np.allclose(steps, dt, rtol=1e-6, atol=0.0):
            raise RejectedInputError("time axis is not uniformly sampled")
        return cls(t0=float(t[0]), dt=dt, samples=np.asarray(values, dtype=float), unit=unit, meta=meta or {})

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def time_axis(self) -> NDArray[np.float64]:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))

    def with_samples(self, samples: ArrayLike, unit: Optional[str] = None, **meta: Any) -> "Waveform":
        return replace(
            self,
            samples=np.asarray(samples, dtype=float),
            unit=unit or self.unit,
            meta={**self.meta, **meta},
        )

    def scaled(self, factor: float, **meta: Any) -> "Waveform":
        return self.with_samples(self.samples * factor, **meta)

    def window(self, t_min: float = -math.inf, t_max: float = math.inf) -> "Waveform":
        t = self.time_axis
        # small slack so grid points that sit on the bound stay in
        slack = 1e-9 * self.dt
        mask = (t >= t_min - slack) & (t <= t_max + slack)
        if not np.any(mask):
            raise RejectedInputError(f"window [{t_min}, {t_max}] s contains no samples")
        first = int(np.argmax(mask))
        return replace(self, t0=float(t[first]), samples=self.samples[mask])

    def same_grid(self, other: "Waveform") -> bool:
        return (
            self.samples.size == other.samples.size
            and math.isclose(self.dt, other.dt, rel_tol=1e-9)
            and math.isclose(self.t0, other.t0, rel_tol=0.0, abs_tol=1e-6 * self.dt)
        )


def _check_compatible(a: Waveform, b: Waveform) -> None:
    if not a.same_grid(b):
        raise RejectedInputError(
            f"waveform grids differ: (t0={a.t0}, dt={a.dt}, n={len(a)}) vs (t0={b.t0}, dt={b.dt}, n={len(b)})"
        )
    if a.unit != b.unit:
        raise RejectedInputError(f"waveform units differ: {a.unit} vs {b.unit}")


# ---------------------------------------------------------------------------
# Protocol arithmetic
# ---------------------------------------------------------------------------


def difference_protocol(plus: Waveform, minus: Waveform, axis: str = "rotation") -> Waveform:
    """Half the difference of two shots taken with opposite sense along ``axis``."""
    _check_compatible(plus, minus)
    differenced = list(plus.meta.get("differenced", [])) + [axis]
    meta = {k: v for k, v in plus.meta.items() if minus.meta.get(k) == v}
    meta["differenced"] = differenced
    return replace(plus, samples=(plus.samples - minus.samples) / 2.0, meta=meta)


def average_shots(shots: Sequence[Waveform]) -> Waveform:
    """Sample-wise mean of repeated shots on a common grid."""
    if not shots:
        raise RejectedInputError("no shots to average")
    first = shots[0]
    for shot in shots[1:]:
        _check_compatible(first, shot)
    stacked = np.stack([shot.samples for shot in shots])
    return first.with_samples(stacked.mean(axis=0), shots=len(shots))


def _baseline_mask(wave: Waveform, baseline_window) -> NDArray[np.bool_]:
    t = wave.time_axis
    if baseline_window is None:
        return t < DEFAULT_BASELINE_END
    if isinstance(baseline_window, slice):
        mask = np.zeros(t.size, dtype=bool)
        mask[baseline_window] = True
        return mask
    t_min, t_max = baseline_window
    return (t >= t_min) & (t <= t_max)


def integrate_emf(emf: Waveform, coefficient: float, baseline_window=None) -> Waveform:
    """Magnetization M(t) = -c * integral of the baseline-corrected EMF.

    ``baseline_window`` is a sample ``slice`` or a ``(t_min, t_max)`` pair in
    seconds; by default every sample before -1 ns.
    """
    if emf.unit != UNIT_VOLT:
        raise RejectedInputError(f"integrate_emf expects volts, got {emf.unit}")
    mask = _baseline_mask(emf, baseline_window)
    if not np.any(mask):
        raise RejectedInputError("baseline window selects no samples")
    corrected = emf.samples - float(np.mean(emf.samples[mask]))
    integral = cumulative_trapezoid(corrected, dx=emf.dt, initial=0.0)
    return emf.with_samples(-coefficient * integral, unit=UNIT_MAGNETIZATION, coefficient=coefficient)


def add_noise(wave: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add white Gaussian noise whose RMS sits ``snr_db`` below the signal RMS."""
    if math.isinf(snr_db) and snr_db > 0:
        return wave
    if not math.isfinite(snr_db):
        raise RejectedInputError(f"snr_db must be finite or +inf, got {snr_db}")
    noise_rms = wave.rms * 10.0 ** (-snr_db / 20.0)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_rms, size=wave.samples.size)
    return wave.with_samples(wave.samples + noise, snr_db=snr_db, noise_seed=seed)


# ---------------------------------------------------------------------------
# Analysis helpers
# ---------------------------------------------------------------------------


def cross_correlation_lag(reference: Waveform, delayed: Waveform, max_lag: Optional[float] = None) -> float:
    """Delay (s) of ``delayed`` relative to ``reference`` at the correlation maximum."""
    _check_compatible(reference, delayed)
    a = reference.samples - reference.samples.mean()
    b = delayed.samples - delayed.samples.mean()
    corr = correlate(b, a, mode="full")
    lags = correlation_lags(b.size, a.size, mode="full")
    if max_lag is not None:
        keep = np.abs(lags * reference.dt) <= max_lag
        corr, lags = corr[keep], lags[keep]
    return float(lags[int(np.argmax(corr))] * reference.dt)


def dominant_frequencies(wave: Waveform, count: int = 2) -> NDArray[np.float64]:
    """Frequencies (Hz) of the ``count`` strongest local maxima of the DFT magnitude."""
    spectrum = np.abs(np.fft.rfft(wave.samples - wave.samples.mean()))
    freqs = np.fft.rfftfreq(wave.samples.size, d=wave.dt)
    peaks, _ = find_peaks(spectrum)
    if peaks.size == 0:
        return np.array([freqs[int(np.argmax(spectrum))]])
    strongest = peaks[np.argsort(spectrum[peaks])[::-1][:count]]
    return np.sort(freqs[strongest])


# ---------------------------------------------------------------------------
# Damped counter-precession model
# ---------------------------------------------------------------------------


def precession_model(
    t: ArrayLike, amplitude: float, tau: float, omega_plus: float, omega_minus: float
) -> NDArray[np.float64]:
    """E(t) = -d/dt [A (sin W+ t + sin W- t) exp(-t/tau)], zero before t = 0."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, None)
    envelope = np.exp(-tc / tau)
    sines = np.sin(omega_plus * tc) + np.sin(omega_minus * tc)
    cosines = omega_plus * np.cos(omega_plus * tc) + omega_minus * np.cos(omega_minus * tc)
    value = -amplitude * envelope * (cosines - sines / tau)
    return np.where(t >= 0.0, value, 0.0)


def precession_jacobian(
    t: ArrayLike, amplitude: float, tau: float, omega_plus: float, omega_minus: float, mode: str = MODE_FIXED
) -> NDArray[np.float64]:
    """Analytic partial derivatives of :func:`precession_model`.

    Columns: A, tau, and in frequencies-free mode W+, W-.
    """
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, None)
    causal = (t >= 0.0).astype(float)
    envelope = np.exp(-tc / tau)
    sin_p, cos_p = np.sin(omega_plus * tc), np.cos(omega_plus * tc)
    sin_m, cos_m = np.sin(omega_minus * tc), np.cos(omega_minus * tc)
    sines = sin_p + sin_m
    cosines = omega_plus * cos_p + omega_minus * cos_m
    bracket = cosines - sines / tau

    columns = [
        -envelope * bracket,
        -amplitude * envelope * (tc / tau**2 * bracket + sines / tau**2),
    ]
    if mode == MODE_FREE:
        for omega, s, c in ((omega_plus, sin_p, cos_p), (omega_minus, sin_m, cos_m)):
            columns.append(-amplitude * envelope * (c - omega * tc * s - tc * c / tau))
    elif mode != MODE_FIXED:
        raise RejectedInputError(f"unknown fit mode {mode!r}")
    return np.column_stack(columns) * causal[:, None]


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FitResult:
    """Parameters of the damped counter-precession model (SI units).

    ``amplitude`` carries the unit of the fitted waveform times seconds.
    """

    amplitude: float
    tau: float
    omega_plus: float
    omega_minus: float
    uncertainties: Mapping[str, float] = field(default_factory=dict)
    residual_rms: float = math.nan
    initial_residual_rms: float = math.nan
    converged: bool = False
    iterations: int = 0
    mode: str = MODE_FIXED
    message: str = ""

    @classmethod
    def seed(cls, amplitude: float, tau: float, omega_plus: float, omega_minus: Optional[float] = None) -> "FitResult":
        return cls(
            amplitude=amplitude,
            tau=tau,
            omega_plus=omega_plus,
            omega_minus=omega_plus if omega_minus is None else omega_minus,
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "amplitude": self.amplitude,
            "tau_s": self.tau,
            "omega_plus_rad_per_s": self.omega_plus,
            "omega_minus_rad_per_s": self.omega_minus,
            "uncertainties": dict(self.uncertainties),
            "residual_rms": self.residual_rms,
            "initial_residual_rms": self.initial_residual_rms,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
            "weights": "uniform",
        }


def fit_precession(
    emf: Waveform,
    init: FitResult,
    mode: str = MODE_FIXED,
    *,
    fit_start: float = 0.0,
    max_iterations: int = 200,
    tolerance: float = 1e-12,
) -> FitResult:
    """Least-squares fit of the damped counter-precession derivative model.

    Frequencies-fixed mode frees only A and tau and keeps the seed frequencies
    (normally taken from the exact spectrum). Trust-region steps are only
    accepted when they lower the residual.
    """
    if mode not in (MODE_FIXED, MODE_FREE):
        raise RejectedInputError(f"unknown fit mode {mode!r}")
    if not init.tau > 0.0:
        raise RejectedInputError("initial tau must be positive")

    data = emf.window(t_min=fit_start)
    t_ns = data.time_axis / _NS
    y = data.samples
    y_scale = float(np.max(np.abs(y))) or 1.0
    y_norm = y / y_scale

    # amplitude unit: y_scale * ns
    a_scale = y_scale * _NS
    p0 = [init.amplitude / a_scale, init.tau / _NS]
    lower = [-np.inf, 1e-6]
    upper = [np.inf, np.inf]
    if mode == MODE_FREE:
        p0 += [init.omega_plus * _NS, init.omega_minus * _NS]
        lower += [0.0, 0.0]
        upper += [np.inf, np.inf]
    p0 = np.asarray(p0, dtype=float)
    if mode == MODE_FREE and (duration := t_ns[-1] - max(t_ns[0], 0.0)) > 0.0:
        max_omega = max(p0[2], p0[3])
        if max_omega * duration < 4.0 * math.pi:
            logger.warning("fit window covers fewer than 2 oscillation periods")
    fixed_plus, fixed_minus = init.omega_plus * _NS, init.omega_minus * _NS

    def unpack(p: NDArray) -> Tuple[float, float, float, float]:
        if mode == MODE_FREE:
            return p[0], p[1], p[2], p[3]
        return p[0], p[1], fixed_plus, fixed_minus

    def residuals(p: NDArray) -> NDArray:
        return precession_model(t_ns, *unpack(p)) - y_norm

    def jacobian(p: NDArray) -> NDArray:
        return precession_jacobian(t_ns, *unpack(p), mode=mode)

    initial_rms = float(np.sqrt(np.mean(residuals(p0) ** 2))) * y_scale
    solution = least_squares(
        residuals,
        p0,
        jac=jacobian,
        bounds=(lower, upper),
        method="trf",
        ftol=tolerance,
        xtol=tolerance,
        gtol=tolerance,
        max_nfev=max_iterations,
    )

    jac = solution.jac
    dof = max(1, y.size - p0.size)
    sigma2 = 2.0 * solution.cost / dof
    normal = jac.T @ jac
    if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > 1e14:
        raise ConditioningError(
            f"normal equations are singular at the optimum (cond={np.linalg.cond(normal):.3g}); "
            "fix degenerate parameters or use frequencies-fixed mode"
        )
    covariance = np.linalg.inv(normal) * sigma2
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    amplitude, tau, omega_plus, omega_minus = unpack(solution.x)
    uncertainties = {"amplitude": errors[0] * a_scale, "tau": errors[1] * _NS}
    if mode == MODE_FREE:
        uncertainties["omega_plus"] = errors[2] / _NS
        uncertainties["omega_minus"] = errors[3] / _NS

    result = FitResult(
        amplitude=float(amplitude * a_scale),
        tau=float(tau * _NS),
        omega_plus=float(omega_plus / _NS),
        omega_minus=float(omega_minus / _NS),
        uncertainties=uncertainties,
        residual_rms=float(np.sqrt(np.mean(solution.fun**2))) * y_scale,
        initial_residual_rms=initial_rms,
        converged=bool(solution.status > 0),
        iterations=int(solution.nfev),
        mode=mode,
        message=str(solution.message),
    )
    logger.debug("fit %s: tau=%.4g s converged=%s nfev=%d", mode, result.tau, result.converged, result.iterations)
    return result


def initial_guess(emf: Waveform) -> FitResult:
    """Seed values from the waveform shape: envelope decay and extremum
    spacing, then the amplitude by linear projection."""
    data = emf.window(t_min=0.0)
    t = data.time_axis
    y = data.samples
    magnitude = np.abs(y)
    top = float(magnitude.max())
    if top == 0.0:
        raise HeuristicFailureError("waveform is identically zero; pass explicit initial values")
    # extrema below a fifth of the maximum are mostly noise
    peaks, _ = find_peaks(magnitude, height=0.2 * top, prominence=0.05 * top)
    if peaks.size < 2:
        raise HeuristicFailureError(
            f"found {peaks.size} extrema, need at least 2; pass explicit initial values"
        )

    slope, _ = np.polyfit(t[peaks], np.log(magnitude[peaks]), 1)
    tau = -1.0 / slope if slope < 0.0 else 10.0 * (t[-1] - t[0])

    # |E| peaks twice per period
    half_period = float(np.median(np.diff(t[peaks])))
    omega = math.pi / half_period

    # A enters linearly: project onto the unit-amplitude shape
    shape = precession_model(t, 1.0, tau, omega, omega)
    norm = float(shape @ shape)
    if norm == 0.0:
        raise HeuristicFailureError("seed shape vanishes on the fit window; pass explicit initial values")
    amplitude = float(shape @ y) / norm
    return FitResult.seed(amplitude=amplitude, tau=float(tau), omega_plus=omega)

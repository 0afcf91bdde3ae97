"""Pickup coils: flux from point dipoles, coupling coefficients and EMF synthesis.

A coil is a filamentary loop on an elliptical boundary

    l(phi) = c + a cos(phi) u + b sin(phi) v,      u x v = n,

so the boundary runs counter-clockwise about the normal n. The flux through
it is integrated over a half-ellipsoidal dome spanning the loop on the side
away from the dipole. The dome and the plane section carry the same flux
(div B = 0), but only the dome stays regular when a dipole sits in the coil
plane, which is where the beam crosses both coils.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import IntegrationWarning, dblquad, quad
from scipy.optimize import minimize_scalar

from centrimag_constants import UNIVERSAL
from centrimag_dynamics import CHANNEL_LONGITUDINAL, CHANNEL_TRANSVERSE, MagnetizationTrace
from centrimag_errors import (
    NumericalError,
    RejectedInputError,
    SingularConfigurationError,
    UndersampledError,
)
from centrimag_waveform import UNIT_VOLT, Waveform

logger = logging.getLogger(__name__)

SHAPE_CIRCULAR = "circular"
SHAPE_ELLIPTICAL = "elliptical"

ALIGN_LONGITUDINAL = "longitudinal"
ALIGN_TRANSVERSE = "transverse-tilted"

SURFACE_DOME = "dome"
SURFACE_FLAT = "flat"

# closer than this to the wire (or, flat mode, to the plane) is singular
SINGULAR_DISTANCE = 1.0e-9
MIN_SAMPLES_PER_PERIOD = 8

DEFAULT_TOLERANCE = 1.0e-8

AXIS_X = np.array([1.0, 0.0, 0.0])
AXIS_Y = np.array([0.0, 1.0, 0.0])
AXIS_Z = np.array([0.0, 0.0, 1.0])


def _vector(value: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise RejectedInputError(f"{name} must be a finite 3-vector")
    return arr


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoilGeometry:
    """Elliptical (or circular) loop tilted by ``tilt_alpha`` about z.

    ``semi_axis_a`` lies along -z, ``semi_axis_b`` in the xy plane, and the
    normal is (cos a, sin a, 0), so ``tilt_alpha`` is the angle between the
    normal and the beam. ``center_offset`` is the coil center measured from
    the sample centroid.
    """

    shape: str
    semi_axis_a: float
    semi_axis_b: float
    tilt_alpha: float = 0.0
    turns: int = 1
    center_offset: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    axis_alignment: str = ALIGN_LONGITUDINAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "center_offset", _vector(self.center_offset, "center_offset"))
        if self.shape not in (SHAPE_CIRCULAR, SHAPE_ELLIPTICAL):
            raise RejectedInputError(f"unknown coil shape {self.shape!r}")
        if not (self.semi_axis_a > 0.0 and self.semi_axis_b > 0.0):
            raise RejectedInputError("coil semi-axes must be positive")
        if self.shape == SHAPE_CIRCULAR and not math.isclose(self.semi_axis_a, self.semi_axis_b):
            raise RejectedInputError("a circular coil needs equal semi-axes")
        if not 0.0 <= self.tilt_alpha < math.pi / 2.0:
            raise RejectedInputError("tilt_alpha must lie in [0, pi/2)")
        if int(self.turns) != self.turns or self.turns < 1:
            raise RejectedInputError("turns must be an integer >= 1")
        if self.axis_alignment not in (ALIGN_LONGITUDINAL, ALIGN_TRANSVERSE):
            raise RejectedInputError(f"unknown axis alignment {self.axis_alignment!r}")

    @classmethod
    def transverse_default(cls) -> "CoilGeometry":
        """0.93 x 3.8 mm^2 ellipse tilted by 59 degrees."""
        return cls(
            shape=SHAPE_ELLIPTICAL,
            semi_axis_a=0.465e-3,
            semi_axis_b=1.9e-3,
            tilt_alpha=math.radians(59.0),
            axis_alignment=ALIGN_TRANSVERSE,
        )

    @classmethod
    def longitudinal_default(cls) -> "CoilGeometry":
        """1.2 mm diameter circle with its axis on the beam."""
        return cls(
            shape=SHAPE_CIRCULAR,
            semi_axis_a=0.6e-3,
            semi_axis_b=0.6e-3,
            tilt_alpha=0.0,
            axis_alignment=ALIGN_LONGITUDINAL,
        )

    @classmethod
    def from_config(cls, section: dict | None, *, longitudinal: bool = False) -> "CoilGeometry":
        """Build from a ``coil`` config section; lengths in mm, angle in degrees."""
        base = cls.longitudinal_default() if longitudinal else cls.transverse_default()
        section = section or {}
        a = float(section.get("a_mm", base.semi_axis_a * 1e3)) * 1e-3
        b = float(section.get("b_mm", base.semi_axis_b * 1e3)) * 1e-3
        offset = np.asarray(section.get("offset_mm", [0.0, 0.0, 0.0]), dtype=float) * 1e-3
        return cls(
            shape=str(section.get("shape", base.shape)),
            semi_axis_a=a,
            semi_axis_b=b,
            tilt_alpha=math.radians(float(section.get("alpha_deg", math.degrees(base.tilt_alpha)))),
            turns=int(section.get("turns", base.turns)),
            center_offset=offset,
            axis_alignment=str(section.get("axis_alignment", base.axis_alignment)),
        )

    @property
    def center(self) -> NDArray[np.float64]:
        return self.center_offset

    def frame(self) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """(u, v, n) with u x v = n."""
        ca, sa = math.cos(self.tilt_alpha), math.sin(self.tilt_alpha)
        u = -AXIS_Z
        v = np.array([-sa, ca, 0.0])
        n = np.array([ca, sa, 0.0])
        return u, v, n

    @property
    def normal(self) -> NDArray[np.float64]:
        return self.frame()[2]

    def boundary_point(self, phi: float) -> NDArray[np.float64]:
        u, v, _ = self.frame()
        return self.center + self.semi_axis_a * math.cos(phi) * u + self.semi_axis_b * math.sin(phi) * v

    def with_turns(self, turns: int) -> "CoilGeometry":
        return CoilGeometry(
            self.shape, self.semi_axis_a, self.semi_axis_b, self.tilt_alpha, turns,
            self.center_offset, self.axis_alignment,
        )

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "semi_axis_a_m": self.semi_axis_a,
            "semi_axis_b_m": self.semi_axis_b,
            "tilt_alpha_deg": math.degrees(self.tilt_alpha),
            "turns": self.turns,
            "center_offset_m": [float(x) for x in self.center_offset],
            "axis_alignment": self.axis_alignment,
        }


@dataclass(frozen=True, eq=False)
class SampleModel:
    """Weighted point dipoles standing in for the magnetized column of gas."""

    dipole_positions: NDArray[np.float64]
    weights: NDArray[np.float64]
    extent: float
    beam_radius: float = 0.2e-3

    def __post_init__(self) -> None:
        positions = np.atleast_2d(np.asarray(self.dipole_positions, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "dipole_positions", positions)
        object.__setattr__(self, "weights", weights)
        if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] == 0:
            raise RejectedInputError("dipole_positions must be a non-empty (k, 3) array")
        if weights.shape != (positions.shape[0],):
            raise RejectedInputError("one weight per dipole required")
        if np.any(weights < 0.0) or not math.isclose(float(weights.sum()), 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise RejectedInputError("weights must be >= 0 and sum to 1")
        if not (self.extent > 0.0 and self.beam_radius > 0.0):
            raise RejectedInputError("sample extent and beam radius must be positive")

    @classmethod
    def line(cls, extent: float = 4.0e-3, count: int = 11, beam_radius: float = 0.2e-3) -> "SampleModel":
        """``count`` equal dipoles spaced along the beam over ``extent``."""
        if count < 1:
            raise RejectedInputError("need at least one dipole")
        xs = np.linspace(-extent / 2.0, extent / 2.0, count) if count > 1 else np.zeros(1)
        positions = np.column_stack([xs, np.zeros(count), np.zeros(count)])
        return cls(positions, np.full(count, 1.0 / count), extent, beam_radius)

    @classmethod
    def single(cls, extent: float = 4.0e-3, beam_radius: float = 0.2e-3) -> "SampleModel":
        return cls(np.zeros((1, 3)), np.ones(1), extent, beam_radius)

    @classmethod
    def from_config(cls, section: dict | None) -> "SampleModel":
        section = section or {}
        return cls.line(
            extent=float(section.get("extent_mm", 4.0)) * 1e-3,
            count=int(section.get("count", 11)),
            beam_radius=float(section.get("beam_radius_mm", 0.2)) * 1e-3,
        )

    @property
    def volume(self) -> float:
        """Magnetized volume pi r_beam^2 extent (m^3)."""
        return math.pi * self.beam_radius**2 * self.extent

    def to_dict(self) -> dict:
        return {
            "count": int(self.weights.size),
            "extent_m": self.extent,
            "beam_radius_m": self.beam_radius,
            "volume_m3": self.volume,
        }


@dataclass(frozen=True, slots=True)
class CouplingReport:
    """Coefficient c (A/m per V s) with the flux per unit moment behind it."""

    coefficient: float
    flux_per_moment: float
    error_estimate: float
    axis: Tuple[float, float, float]
    turns: int
    volume: float
    tolerance: float = DEFAULT_TOLERANCE

    def to_dict(self) -> dict:
        return {
            "coefficient_A_per_m_per_V_s": self.coefficient,
            "flux_per_moment_Wb_per_A_m2": self.flux_per_moment,
            "error_estimate": self.error_estimate,
            "moment_axis": list(self.axis),
            "turns": self.turns,
            "volume_m3": self.volume,
            "tolerance": self.tolerance,
        }


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


def dipole_field(point: NDArray, position: NDArray, moment: NDArray) -> NDArray:
    """B at ``point`` from a point dipole (tesla)."""
    r = point - position
    r2 = float(r @ r)
    r_norm = math.sqrt(r2)
    return UNIVERSAL.mu_0 / (4.0 * math.pi) * (3.0 * float(moment @ r) * r - moment * r2) / (r2 * r2 * r_norm)


def dipole_vector_potential(point: NDArray, position: NDArray, moment: NDArray) -> NDArray:
    r = point - position
    r_norm = math.sqrt(float(r @ r))
    return UNIVERSAL.mu_0 / (4.0 * math.pi) * np.cross(moment, r) / r_norm**3


def wire_distance(coil: CoilGeometry, position: ArrayLike) -> float:
    """Shortest distance from ``position`` to the coil boundary."""
    p = _vector(position, "position")
    phis = np.linspace(-math.pi, math.pi, 2049)
    u, v, _ = coil.frame()
    pts = coil.center + np.outer(coil.semi_axis_a * np.cos(phis), u) + np.outer(coil.semi_axis_b * np.sin(phis), v)
    dists = np.linalg.norm(pts - p, axis=1)
    best = phis[int(np.argmin(dists))]
    step = phis[1] - phis[0]
    refined = minimize_scalar(
        lambda phi: float(np.linalg.norm(coil.boundary_point(phi) - p)),
        bounds=(best - step, best + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(min(dists.min(), refined.fun))


def _check_wire(coil: CoilGeometry, position: NDArray) -> None:
    distance = wire_distance(coil, position)
    if distance < SINGULAR_DISTANCE:
        raise SingularConfigurationError(
            f"dipole at {position.tolist()} m lies {distance:.3g} m from the coil wire"
        )


def _run_dblquad(integrand, a, b, gfun, hfun, epsabs, epsrel, position: NDArray) -> Tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            return dblquad(integrand, a, b, gfun, hfun, epsabs=epsabs, epsrel=epsrel)
        except IntegrationWarning as exc:
            raise NumericalError(
                f"flux quadrature for the dipole at {position.tolist()} m did not converge: {exc}"
            ) from exc


def _dome_flux(coil: CoilGeometry, position: NDArray, moment: NDArray, tolerance: float) -> Tuple[float, float]:
    u, v, n = coil.frame()
    a, b = coil.semi_axis_a, coil.semi_axis_b
    height = max(a, b)
    side = -1.0 if float(n @ (position - coil.center)) > 0.0 else 1.0

    def integrand(phi: float, theta: float) -> float:
        st, ct = math.sin(theta), math.cos(theta)
        sp, cp = math.sin(phi), math.cos(phi)
        in_plane = a * cp * u + b * sp * v
        point = coil.center + st * in_plane + side * height * ct * n
        d_theta = ct * in_plane - side * height * st * n
        d_phi = st * (-a * sp * u + b * cp * v)
        return float(dipole_field(point, position, moment) @ np.cross(d_theta, d_phi))

    epsabs = tolerance * UNIVERSAL.mu_0 * float(np.linalg.norm(moment)) / (2.0 * min(a, b))
    # phi runs over [-pi, pi] so the symmetric Kronrod nodes pair phi with -phi
    return _run_dblquad(integrand, 0.0, math.pi / 2.0, -math.pi, math.pi, epsabs, tolerance, position)


def _flat_flux(coil: CoilGeometry, position: NDArray, moment: NDArray, tolerance: float) -> Tuple[float, float]:
    u, v, n = coil.frame()
    a, b = coil.semi_axis_a, coil.semi_axis_b
    d = position - coil.center
    height = float(n @ d)
    radial = (float(u @ d) / a) ** 2 + (float(v @ d) / b) ** 2
    if abs(height) < SINGULAR_DISTANCE and radial <= 1.0 + 1e-12:
        raise SingularConfigurationError(
            f"dipole at {position.tolist()} m lies {abs(height):.3g} m from the coil plane; "
            "use the dome surface"
        )

    def integrand(phi: float, rho: float) -> float:
        point = coil.center + rho * (a * math.cos(phi) * u + b * math.sin(phi) * v)
        return float(dipole_field(point, position, moment) @ n) * a * b * rho

    epsabs = tolerance * UNIVERSAL.mu_0 * float(np.linalg.norm(moment)) / (2.0 * min(a, b))
    return _run_dblquad(integrand, 0.0, 1.0, -math.pi, math.pi, epsabs, tolerance, position)


def _flux_with_error(
    coil: CoilGeometry, position: ArrayLike, moment: ArrayLike, tolerance: float, surface: str
) -> Tuple[float, float]:
    p = _vector(position, "position")
    m = _vector(moment, "moment")
    if not tolerance > 0.0:
        raise RejectedInputError("quadrature tolerance must be positive")
    _check_wire(coil, p)
    if not np.any(m):
        return 0.0, 0.0
    if surface == SURFACE_DOME:
        return _dome_flux(coil, p, m, tolerance)
    if surface == SURFACE_FLAT:
        return _flat_flux(coil, p, m, tolerance)
    raise RejectedInputError(f"unknown spanning surface {surface!r}")


def dipole_flux(
    coil: CoilGeometry,
    position: ArrayLike,
    moment: ArrayLike,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    surface: str = SURFACE_DOME,
) -> float:
    """Flux (Wb) through one turn of ``coil`` from a point dipole (A m^2)."""
    value, _ = _flux_with_error(coil, position, moment, tolerance, surface)
    return value


def dipole_flux_line_integral(coil: CoilGeometry, position: ArrayLike, moment: ArrayLike) -> float:
    """Flux as the circulation of the dipole vector potential along the wire."""
    p = _vector(position, "position")
    m = _vector(moment, "moment")
    _check_wire(coil, p)
    u, v, _ = coil.frame()
    a, b = coil.semi_axis_a, coil.semi_axis_b

    def integrand(phi: float) -> float:
        tangent = -a * math.sin(phi) * u + b * math.cos(phi) * v
        return float(dipole_vector_potential(coil.boundary_point(phi), p, m) @ tangent)

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(integrand, -math.pi, math.pi, epsabs=0.0, epsrel=1e-12, limit=400)
        except IntegrationWarning as exc:
            raise NumericalError(f"line integral for the dipole at {p.tolist()} m did not converge: {exc}") from exc
    return value


# ---------------------------------------------------------------------------
# Coupling and EMF
# ---------------------------------------------------------------------------


def coupling_coefficient(
    coil: CoilGeometry,
    sample: SampleModel,
    moment_axis: ArrayLike,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    surface: str = SURFACE_DOME,
) -> CouplingReport:
    """c = 1 / (turns * Phi_unit * V).

    Phi_unit is the flux from the weighted dipoles carrying a total moment of
    1 A m^2 along ``moment_axis``; V turns magnetization into total moment.
    """
    axis = _vector(moment_axis, "moment_axis")
    norm = float(np.linalg.norm(axis))
    if norm == 0.0:
        raise RejectedInputError("moment_axis must be non-zero")
    axis = axis / norm

    flux, error = 0.0, 0.0
    for position, weight in zip(sample.dipole_positions, sample.weights):
        if weight == 0.0:
            continue
        value, err = _flux_with_error(coil, position, weight * axis, tolerance, surface)
        flux += value
        error += err
    if flux == 0.0:
        raise SingularConfigurationError(
            f"coil picks up no flux from moments along {axis.tolist()}; coupling is undefined"
        )
    coefficient = 1.0 / (coil.turns * flux * sample.volume)
    relative = max(error / abs(flux), tolerance)
    logger.debug("coupling axis=%s: flux/moment=%.6g Wb/(A m^2) c=%.6g", axis.tolist(), flux, coefficient)
    return CouplingReport(
        coefficient=coefficient,
        flux_per_moment=flux,
        error_estimate=abs(coefficient) * relative,
        axis=tuple(float(x) for x in axis),
        turns=coil.turns,
        volume=sample.volume,
        tolerance=tolerance,
    )


def coil_channel(coil: CoilGeometry) -> Tuple[str, NDArray[np.float64]]:
    """Magnetization channel and moment axis a coil is read out on."""
    if coil.axis_alignment == ALIGN_LONGITUDINAL:
        return CHANNEL_LONGITUDINAL, AXIS_X
    return CHANNEL_TRANSVERSE, AXIS_Y


def emf_from_magnetization(
    trace: MagnetizationTrace,
    coil: CoilGeometry,
    sample: SampleModel,
    *,
    coefficient: Optional[float] = None,
    tolerance: float = DEFAULT_TOLERANCE,
) -> Waveform:
    """E(t) = -(1/c) dM/dt on the coil's channel, central differences inside."""
    channel, axis = coil_channel(coil)
    if trace.frequencies is not None and (omega := trace.frequencies.max_omega) > 0.0:
        period = 2.0 * math.pi / omega
        if trace.dt > period / MIN_SAMPLES_PER_PERIOD:
            raise UndersampledError(
                f"dt = {trace.dt:.4g} s gives {period / trace.dt:.3g} samples per period; "
                f"need at least {MIN_SAMPLES_PER_PERIOD} (dt <= {period / MIN_SAMPLES_PER_PERIOD:.4g} s)"
            )
    if coefficient is None:
        coefficient = coupling_coefficient(coil, sample, axis, tolerance=tolerance).coefficient
    if coefficient == 0.0 or not math.isfinite(coefficient):
        raise RejectedInputError("coupling coefficient must be finite and non-zero")

    magnetization = trace.channel(channel)
    emf = -np.gradient(magnetization.samples, trace.dt) / coefficient
    return magnetization.with_samples(emf, unit=UNIT_VOLT, coefficient=coefficient, coil=coil.axis_alignment)

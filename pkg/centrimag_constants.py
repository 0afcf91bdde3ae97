"""Physical constants, O2 molecular constants and energy unit conversions.

Everything downstream computes in SI; spectroscopic units only appear at the
I/O boundary through :func:`convert_energy`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import constants as sp

from centrimag_errors import RejectedInputError

# ---------------------------------------------------------------------------
# Universal constants (CODATA via scipy.constants)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class UniversalConstants:
    """Physical constants in SI units from scipy.constants."""

    # Bohr magneton (J/T)
    mu_B: float = sp.physical_constants["Bohr magneton"][0]

    # Planck constant over 2*pi (J*s)
    hbar: float = sp.hbar

    # Planck constant (J*s)
    h: float = sp.h

    # Boltzmann constant (J/K)
    k_B: float = sp.k

    # Vacuum permeability (T*m/A)
    mu_0: float = sp.mu_0

    # Speed of light (m/s)
    c: float = sp.c


UNIVERSAL = UniversalConstants()

# ---------------------------------------------------------------------------
# Energy units
# ---------------------------------------------------------------------------

# joules per one unit of each tag
_JOULES_PER_UNIT: dict[str, float] = {
    "joule": 1.0,
    "inverse-centimeter": UNIVERSAL.h * UNIVERSAL.c * 100.0,
    "gigahertz": UNIVERSAL.h * 1.0e9,
    "kelvin": UNIVERSAL.k_B,
}

_UNIT_ALIASES: dict[str, str] = {
    "j": "joule",
    "cm-1": "inverse-centimeter",
    "cm^-1": "inverse-centimeter",
    "ghz": "gigahertz",
    "k": "kelvin",
}

ENERGY_UNITS = tuple(_JOULES_PER_UNIT)


def _canonical_unit(tag: str) -> str:
    key = str(tag).strip().lower()
    key = _UNIT_ALIASES.get(key, key)
    if key not in _JOULES_PER_UNIT:
        raise RejectedInputError(
            f"unknown energy unit {tag!r}; expected one of {', '.join(ENERGY_UNITS)}"
        )
    return key


def convert_energy(value: float, from_unit: str, to_unit: str) -> float:
    """Convert an energy between joule, inverse-centimeter, gigahertz and kelvin."""
    src = _canonical_unit(from_unit)
    dst = _canonical_unit(to_unit)
    if src == dst:
        return value
    return value * (_JOULES_PER_UNIT[src] / _JOULES_PER_UNIT[dst])


def bohr_magnetons(moment: float):
    """Express a magnetic moment (J/T) in Bohr magnetons. Works on arrays."""
    return moment / UNIVERSAL.mu_B


def from_bohr_magnetons(value: float):
    return value * UNIVERSAL.mu_B


def bar_to_pascal(value: float) -> float:
    return value * sp.bar


def pascal_to_bar(value: float) -> float:
    return value / sp.bar


# ---------------------------------------------------------------------------
# O2 ground-state constants
# ---------------------------------------------------------------------------

# Standard X 3Sigma_g^- values; the measurement this toolkit models does not
# quote its own, so reports flag these as external.
DEFAULT_GAMMA_GHZ = -0.2526
DEFAULT_LAMBDA_GHZ = 59.501
DEFAULT_G_FACTOR = -2.0023


@dataclass(frozen=True, slots=True)
class MolecularConstants:
    """Spin-rotation (gamma) and spin-spin (lambda_) energies in joule, signed g."""

    gamma: float
    lambda_: float
    g_factor: float = DEFAULT_G_FACTOR
    is_default: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("gamma", "lambda_", "g_factor"):
            if not math.isfinite(getattr(self, name)):
                raise RejectedInputError(f"molecular constant {name} must be finite")
        if self.lambda_ <= 0.0:
            raise RejectedInputError("spin-spin constant lambda must be positive")
        if self.g_factor == 0.0:
            raise RejectedInputError("g_factor must be non-zero")

    @classmethod
    def from_ghz(
        cls,
        gamma_ghz: float = DEFAULT_GAMMA_GHZ,
        lambda_ghz: float = DEFAULT_LAMBDA_GHZ,
        g_factor: float = DEFAULT_G_FACTOR,
    ) -> "MolecularConstants":
        return cls(
            gamma=convert_energy(gamma_ghz, "gigahertz", "joule"),
            lambda_=convert_energy(lambda_ghz, "gigahertz", "joule"),
            g_factor=g_factor,
            is_default=(
                gamma_ghz == DEFAULT_GAMMA_GHZ
                and lambda_ghz == DEFAULT_LAMBDA_GHZ
                and g_factor == DEFAULT_G_FACTOR
            ),
        )

    @classmethod
    def oxygen(cls) -> "MolecularConstants":
        return cls.from_ghz()

    @classmethod
    def from_config(cls, section: dict | None) -> "MolecularConstants":
        """Build from a ``constants`` config section (keys in GHz)."""
        section = section or {}
        return cls.from_ghz(
            gamma_ghz=float(section.get("gamma_ghz", DEFAULT_GAMMA_GHZ)),
            lambda_ghz=float(section.get("lambda_ghz", DEFAULT_LAMBDA_GHZ)),
            g_factor=float(section.get("g_factor", DEFAULT_G_FACTOR)),
        )

    @property
    def abs_g(self) -> float:
        return abs(self.g_factor)

    @property
    def gamma_ghz(self) -> float:
        return convert_energy(self.gamma, "joule", "gigahertz")

    @property
    def lambda_ghz(self) -> float:
        return convert_energy(self.lambda_, "joule", "gigahertz")

    def to_dict(self) -> dict:
        return {
            "gamma_ghz": self.gamma_ghz,
            "lambda_ghz": self.lambda_ghz,
            "g_factor": self.g_factor,
            "source": "standard O2 ground-state values" if self.is_default else "configured",
        }

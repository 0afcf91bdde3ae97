# centrimag_config.py
"""Run configuration: built-in defaults < config.json < --config / SRM_CONFIG < CLI flags."""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np

from centrimag_coil import CoilGeometry, SampleModel
from centrimag_constants import MolecularConstants
from centrimag_dynamics import GasConditions, time_grid
from centrimag_errors import RejectedInputError
from centrimag_io import read_json
from centrimag_spectrum import RotorFieldConfig

ENV_CONFIG = "SRM_CONFIG"
PACKAGE_CONFIG = Path(__file__).with_name("config.json")

DEFAULTS: Dict[str, Any] = {
    "constants": {"gamma_ghz": -0.2526, "lambda_ghz": 59.501, "g_factor": -2.0023},
    "rotor": {"N": 89, "B_T": 1.0, "inverted": False, "method": "exact-spectrum", "tracking_steps": 16},
    "gas": {"pressure_bar": 0.5, "temperature_k": 295.0, "eta": 0.04},
    "coil": {
        "shape": "elliptical",
        "a_mm": 0.465,
        "b_mm": 1.9,
        "alpha_deg": 59.0,
        "turns": 1,
        "axis_alignment": "transverse-tilted",
        "offset_mm": [0.0, 0.0, 0.0],
    },
    "longitudinal_coil": {
        "shape": "circular",
        "a_mm": 0.6,
        "b_mm": 0.6,
        "alpha_deg": 0.0,
        "turns": 1,
        "axis_alignment": "longitudinal",
        "offset_mm": [0.0, 0.0, 0.0],
    },
    "sample": {"extent_mm": 4.0, "count": 11, "beam_radius_mm": 0.2},
    "grid": {"t_start_ns": -2.0, "t_end_ns": 10.0, "dt_ps": 2.0},
    "trace": {
        "amplitude_bohr": 0.4,
        "tau_ns": 3.1,
        "rise_time_ns": None,
        "tau_plus_ns": 3.0,
        "tau_minus_ns": 2.0,
        "snr_db": None,
    },
    # field-free collisional rise at the reference pressure, scaled as P_ref / P
    "dynamics": {"reference_pressure_bar": 0.45, "rise_time_ref_ns": 1.0},
    "fit": {
        "mode": "frequencies-fixed",
        "max_iterations": 200,
        "tolerance": 1e-12,
        "fit_start_ns": 0.0,
        "baseline_end_ns": -1.0,
    },
    "output": {"dir": "out", "log_dir": "log/"},
    "seed": 0,
}

# resolved values of the last load(), read through get_config_value
_config: dict = copy.deepcopy(DEFAULTS)


def get_config_value(setting_name: str, default=None):
    """Retrieve a configuration value by dotted name (``gas.pressure_bar``)."""
    node: Any = _config
    for part in setting_name.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _expand_dotted(data: Mapping[str, Any]) -> Dict[str, Any]:
    """Turn ``{"coil.alpha_deg": 59}`` into ``{"coil": {"alpha_deg": 59}}``."""
    out: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, Mapping):
            value = _expand_dotted(value)
        head, _, rest = str(key).partition(".")
        if rest:
            value = _expand_dotted({rest: value})
        if head in out and isinstance(out[head], dict) and isinstance(value, dict):
            out[head] = _merge(out[head], value, path=head, strict=False)
        else:
            out[head] = value
    return out


def _merge(base: Dict[str, Any], override: Mapping[str, Any], *, path: str = "", strict: bool = True) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        name = f"{path}.{key}" if path else key
        if strict and key not in base:
            raise RejectedInputError(f"unknown configuration key {name!r}")
        if isinstance(merged.get(key), dict):
            if not isinstance(value, Mapping):
                raise RejectedInputError(f"configuration key {name!r} must be a section")
            merged[key] = _merge(merged[key], value, path=name, strict=strict)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Path | str) -> Dict[str, Any]:
    path = Path(path)
    data = read_json(path)
    if not isinstance(data, dict):
        raise RejectedInputError(f"{path}: top level must be an object")
    return _expand_dotted(data)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one command; ``to_dict`` reloads to the same run."""

    constants: Dict[str, Any]
    rotor: Dict[str, Any]
    gas: Dict[str, Any]
    coil: Dict[str, Any]
    longitudinal_coil: Dict[str, Any]
    sample: Dict[str, Any]
    grid: Dict[str, Any]
    trace: Dict[str, Any]
    dynamics: Dict[str, Any]
    fit: Dict[str, Any]
    output: Dict[str, Any]
    seed: int = 0
    sources: tuple = field(default=(), compare=False)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], sources: tuple = ()) -> "RunConfig":
        resolved = _merge(copy.deepcopy(DEFAULTS), _expand_dotted(data))
        seed = resolved["seed"]
        if isinstance(seed, bool) or int(seed) != seed:
            raise RejectedInputError(f"seed must be an integer, got {seed!r}")
        resolved["seed"] = int(seed)
        return cls(**resolved, sources=sources)

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self) if f.name != "sources"}

    def get(self, dotted: str, default=None):
        node: Any = self.to_dict()
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    # -- typed views ---------------------------------------------------------

    def molecular_constants(self) -> MolecularConstants:
        return MolecularConstants.from_config(self.constants)

    def rotor_config(self, N: Optional[int] = None, B: Optional[float] = None) -> RotorFieldConfig:
        return RotorFieldConfig(
            N=int(self.rotor["N"] if N is None else N),
            B=float(self.rotor["B_T"] if B is None else B),
            inverted=bool(self.rotor["inverted"]),
        )

    def gas_conditions(self) -> GasConditions:
        return GasConditions.from_bar(
            float(self.gas["pressure_bar"]), float(self.gas["temperature_k"]), float(self.gas["eta"])
        )

    def coil_geometry(self, longitudinal: bool = False) -> CoilGeometry:
        section = self.longitudinal_coil if longitudinal else self.coil
        return CoilGeometry.from_config(section, longitudinal=longitudinal)

    def sample_model(self) -> SampleModel:
        return SampleModel.from_config(self.sample)

    def time_axis(self) -> np.ndarray:
        return time_grid(
            float(self.grid["t_start_ns"]) * 1e-9,
            float(self.grid["t_end_ns"]) * 1e-9,
            float(self.grid["dt_ps"]) * 1e-12,
        )

    @property
    def snr_db(self) -> float:
        value = self.trace.get("snr_db")
        return math.inf if value is None else float(value)

    @property
    def output_dir(self) -> Path:
        return Path(self.output["dir"])

    @property
    def log_dir(self) -> Path:
        return Path(self.output["log_dir"])


def load(
    config_path: Path | str | None = None,
    overrides: Mapping[str, Any] | None = None,
    *,
    env: Mapping[str, str] | None = None,
    package_config: Path | None = PACKAGE_CONFIG,
) -> RunConfig:
    """Resolve the layered configuration and publish it to :func:`get_config_value`."""
    global _config
    env = os.environ if env is None else env
    resolved = copy.deepcopy(DEFAULTS)
    sources = ["defaults"]

    if package_config is not None and Path(package_config).is_file():
        resolved = _merge(resolved, read_config_file(package_config))
        sources.append(str(package_config))

    explicit = config_path or env.get(ENV_CONFIG)
    if explicit:
        path = Path(explicit)
        if not path.is_file():
            raise RejectedInputError(f"configuration file not found: {path}")
        resolved = _merge(resolved, read_config_file(path))
        sources.append(str(path))

    if overrides:
        given = {key: value for key, value in overrides.items() if value is not None}
        if given:
            resolved = _merge(resolved, _expand_dotted(given))
            sources.append("command line")

    run_config = RunConfig.from_dict(resolved, sources=tuple(sources))
    _config = run_config.to_dict()
    return run_config

"""CSV and JSON files written and read by the command line.

Floats are written with ``repr`` so that rerunning a command reproduces its
files byte for byte.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Sequence

import numpy as np

from centrimag_dynamics import MagnetizationTrace
from centrimag_errors import RejectedInputError
from centrimag_spectrum import SpinRotationSpectrum
from centrimag_logging import run_log_json
from centrimag_waveform import Waveform

TRACE_HEADER = ("time_s", "m_par_A_per_m", "m_perp_A_per_m", "mu_par_bohr", "mu_perp_bohr")
SPECTRUM_HEADER = ("m", "branch", "energy_joule", "energy_ghz")
WAVEFORM_HEADER = ("time_s", "value")


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # JSON has no inf/nan; keep them readable
        return value if math.isfinite(value) else str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, Path):
        return str(value)
    return value


def _prepare(path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _log_written(path: Path, kind: str) -> None:
    run_log_json({"event": "file_written", "kind": kind, "path": str(path)})


def write_json(path: Path | str, data: Mapping[str, Any]) -> Path:
    path = _prepare(path)
    text = json.dumps(_jsonable(data), indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    _log_written(path, "json")
    return path


def read_json(path: Path | str) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RejectedInputError(f"{path}: not valid JSON ({exc})") from exc


def write_rows(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = _prepare(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    _log_written(path, "csv")
    return path


# ---------------------------------------------------------------------------
# Waveforms
# ---------------------------------------------------------------------------


def write_waveform(path: Path | str, wave: Waveform) -> Path:
    """``# key=value`` header lines, then ``time_s,value`` rows."""
    path = _prepare(path)
    meta = {"unit": wave.unit, **{k: v for k, v in wave.meta.items() if k != "unit"}}
    with path.open("w", encoding="utf-8", newline="") as handle:
        for key in sorted(meta):
            value = meta[key]
            if isinstance(value, (list, tuple)):
                value = ";".join(_fmt(v) for v in value)
            handle.write(f"# {key}={_fmt(value)}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(WAVEFORM_HEADER)
        for t, v in zip(wave.time_axis, wave.samples):
            writer.writerow([_fmt(t), _fmt(v)])
    _log_written(path, "waveform")
    return path


def _parse_meta_value(text: str) -> Any:
    if ";" in text:
        return [_parse_meta_value(part) for part in text.split(";") if part]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def read_waveform(path: Path | str) -> Waveform:
    path = Path(path)
    if not path.is_file():
        raise RejectedInputError(f"waveform file not found: {path}")
    meta: dict = {}
    times: List[float] = []
    values: List[float] = []
    header_seen = False
    with path.open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    meta[key.strip()] = _parse_meta_value(value.strip())
                continue
            if not header_seen:
                header_seen = True
                if tuple(c.strip() for c in line.split(",")) != WAVEFORM_HEADER:
                    raise RejectedInputError(f"{path}:{lineno}: expected header {','.join(WAVEFORM_HEADER)}")
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise RejectedInputError(f"{path}:{lineno}: expected two columns")
            try:
                times.append(float(parts[0]))
                values.append(float(parts[1]))
            except ValueError as exc:
                raise RejectedInputError(f"{path}:{lineno}: {exc}") from exc
    unit = str(meta.pop("unit", "volt"))
    if isinstance(meta.get("differenced"), str):
        meta["differenced"] = [meta["differenced"]]
    return Waveform.from_arrays(times, values, unit=unit, meta=meta)


# ---------------------------------------------------------------------------
# Traces and spectra
# ---------------------------------------------------------------------------


def write_trace(path: Path | str, trace: MagnetizationTrace) -> Path:
    bohr = trace.per_molecule_unit
    rows = zip(
        trace.time_axis,
        trace.longitudinal,
        trace.transverse,
        bohr["longitudinal"],
        bohr["transverse"],
    )
    return write_rows(path, TRACE_HEADER, rows)


def write_spectrum(path: Path | str, spectrum: SpinRotationSpectrum) -> Path:
    return write_rows(path, SPECTRUM_HEADER, spectrum.to_rows())

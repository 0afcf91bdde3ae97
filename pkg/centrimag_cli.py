from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import centrimag_config
from centrimag_coil import CoilGeometry, coil_channel, coupling_coefficient, emf_from_magnetization
from centrimag_constants import bar_to_pascal, from_bohr_magnetons
from centrimag_controllers import run_sweep
from centrimag_dynamics import (
    MagnetizationTrace,
    TraceParameters,
    longitudinal_trace_fieldfree,
    longitudinal_trace_infield,
    pressure_scaled,
    transverse_trace,
)
from centrimag_errors import CentrimagError, RejectedInputError
from centrimag_datasets import TAGS, reproduce, resolve_tag
from centrimag_io import write_json, write_rows, write_spectrum, write_trace, write_waveform, read_waveform
from centrimag_logging import init as init_logging, close as close_logging, run_log_json, system_log
from centrimag_spectrum import (
    METHOD_APPROXIMATE,
    METHOD_EXACT,
    diagonalize,
    frequencies,
    frequencies_approximate,
    frequencies_exact,
    oracle_deviation,
)
from centrimag_ui import RichReport
from centrimag_waveform import (
    MODE_FIXED,
    MODE_FREE,
    FitResult,
    Waveform,
    add_noise,
    difference_protocol,
    fit_precession,
    initial_guess,
    integrate_emf,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

CHANNELS = ("transverse", "longitudinal-infield", "longitudinal-fieldfree")
SWEEP_HEADER = (
    "N",
    "B_T",
    "method",
    "omega_plus_rad_per_s",
    "omega_minus_rad_per_s",
    "quarter_period_plus_s",
    "quarter_period_minus_s",
    "m_spread",
)


def _csv_numbers(cast):
    def parse(text: str):
        try:
            return [cast(part) for part in text.split(",") if part.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc

    return parse


def _parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="centrimag",
        description=(
            "Spectra, magnetization traces, pickup-coil EMF and fits for "
            "centrifuge-induced magnetization of O2."
        ),
    )
    parser.add_argument("--config", type=Path, help="JSON config file (falls back to $SRM_CONFIG)")
    parser.add_argument("--seed", type=int, default=None, help="Noise seed")
    parser.add_argument("--out", type=Path, default=None, help="Output directory")
    parser.add_argument("--quiet", action="store_true", help="No console tables")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="Diagonalize the spin-rotation Hamiltonian")
    p.add_argument("--N", type=int)
    p.add_argument("--B", type=float, help="Field magnitude in tesla")
    p.add_argument("--inverted", action="store_true", default=None)
    p.add_argument("--oracle", action="store_true", help="Compare with the brute-force spectrum")

    p = sub.add_parser("synthesize", help="Write magnetization and EMF for one channel")
    p.add_argument("--N", type=int)
    p.add_argument("--B", type=float)
    p.add_argument("--inverted", action="store_true", default=None)
    p.add_argument("--P-bar", dest="pressure_bar", type=float)
    p.add_argument("--channel", choices=CHANNELS, default="transverse")
    p.add_argument("--tau", type=float, help="Decay time in ns")
    p.add_argument("--amplitude-bohr", type=float)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--method", choices=(METHOD_EXACT, METHOD_APPROXIMATE))
    p.add_argument("--sense", type=int, choices=(1, -1), default=1, help="Centrifuge rotation sense")
    p.add_argument("--coefficient", type=float, help="Use this coupling instead of computing it")

    p = sub.add_parser("fit", help="Fit the damped counter-precession model to an EMF waveform")
    p.add_argument("input", nargs="?", type=Path)
    p.add_argument("--plus", type=Path, help="Waveform with the centrifuge turning one way")
    p.add_argument("--minus", type=Path, help="Waveform with the rotation reversed")
    p.add_argument("--plus-inverted", type=Path, help="--plus repeated with the field inverted")
    p.add_argument("--minus-inverted", type=Path, help="--minus repeated with the field inverted")
    p.add_argument("--mode", choices=(MODE_FIXED, MODE_FREE))
    p.add_argument("--N", type=int)
    p.add_argument("--B", type=float)
    p.add_argument("--coefficient", type=float, help="Coupling c; also writes magnetization.csv")
    p.add_argument("--tau-init", type=float, help="Initial decay time in ns")

    p = sub.add_parser("coil", help="Coupling coefficients of the pickup coils")
    p.add_argument("--which", choices=("transverse", "longitudinal", "both"), default="both")
    p.add_argument("--tolerance", type=float, default=1e-8)

    p = sub.add_parser("reproduce", help="Model dataset and headline summary for a named dataset")
    p.add_argument("dataset", choices=TAGS)

    p = sub.add_parser("sweep", help="Precession frequencies over a grid of N and B")
    p.add_argument("--N-values", dest="n_values", type=_csv_numbers(int), required=True)
    p.add_argument("--B-values", dest="b_values", type=_csv_numbers(float), required=True)
    p.add_argument("--method", choices=(METHOD_EXACT, METHOD_APPROXIMATE))
    p.add_argument("--max-workers", type=int, default=None)
    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {
        "seed": "seed",
        "out": "output.dir",
        "N": "rotor.N",
        "B": "rotor.B_T",
        "inverted": "rotor.inverted",
        "method": "rotor.method",
        "pressure_bar": "gas.pressure_bar",
        "tau": "trace.tau_ns",
        "amplitude_bohr": "trace.amplitude_bohr",
        "snr_db": "trace.snr_db",
        "mode": "fit.mode",
    }
    out: Dict[str, Any] = {}
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = str(value) if isinstance(value, Path) else value
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_spectrum(cfg: centrimag_config.RunConfig, args, report: RichReport) -> Tuple[int, List[Path]]:
    constants = cfg.molecular_constants()
    rotor = cfg.rotor_config()
    spectrum = diagonalize(rotor, constants, tracking_steps=int(cfg.rotor["tracking_steps"]))
    exact = frequencies_exact(rotor, constants, tracking_steps=int(cfg.rotor["tracking_steps"]))
    approximate = frequencies_approximate(rotor, constants)
    payload: Dict[str, Any] = {
        "N": rotor.N,
        "B_T": rotor.signed_field,
        "total_states": spectrum.total_states,
        "exact": exact.to_dict(),
        "approximate": approximate.to_dict(),
        "constants": constants.to_dict(),
    }
    if args.oracle:
        deviation = oracle_deviation(rotor, constants)
        payload["oracle_max_relative_deviation"] = deviation
        report.panel(f"max relative deviation vs brute force: {deviation:.3e}", title="Oracle")
    out = cfg.output_dir
    files = [write_spectrum(out / "spectrum.csv", spectrum), write_json(out / "frequencies.json", payload)]
    report.table(
        f"Precession frequencies N={rotor.N} B={rotor.signed_field:g} T",
        ("method", "omega+ (rad/s)", "omega- (rad/s)", "T/4 + (ns)", "T/4 - (ns)"),
        [
            (f.method, f.omega_plus, f.omega_minus, f.quarter_period_plus * 1e9, f.quarter_period_minus * 1e9)
            for f in (exact, approximate)
        ],
    )
    return EXIT_OK, files


def _signed(trace: MagnetizationTrace, sign: float) -> MagnetizationTrace:
    if sign == 1.0:
        return trace
    return replace(
        trace,
        longitudinal=sign * trace.longitudinal,
        transverse=sign * trace.transverse,
        mu_longitudinal=sign * trace.mu_longitudinal,
        mu_transverse=sign * trace.mu_transverse,
    )


def synthesize_trace(cfg: centrimag_config.RunConfig, channel: str) -> Tuple[MagnetizationTrace, CoilGeometry]:
    """Magnetization for one measurement channel as configured."""
    constants = cfg.molecular_constants()
    rotor = cfg.rotor_config()
    gas = cfg.gas_conditions()
    grid = cfg.time_axis()
    trace_cfg = cfg.trace
    rise = trace_cfg.get("rise_time_ns")
    tau = float(trace_cfg["tau_ns"]) * 1e-9
    amplitude = from_bohr_magnetons(float(trace_cfg["amplitude_bohr"]))

    if channel == "longitudinal-fieldfree":
        # collisional rise, given at the reference pressure
        reference = TraceParameters(
            amplitude=0.0,
            tau=math.inf,
            rise_time=float(cfg.get("dynamics.rise_time_ref_ns")) * 1e-9,
            tau_plus=float(trace_cfg["tau_plus_ns"]) * 1e-9,
            tau_minus=float(trace_cfg["tau_minus_ns"]) * 1e-9,
        )
        params = pressure_scaled(reference, gas, bar_to_pascal(float(cfg.get("dynamics.reference_pressure_bar"))))
        trace = longitudinal_trace_fieldfree(params, gas, grid, N=rotor.N, constants=constants)
        return trace, cfg.coil_geometry(longitudinal=True)

    freqs = frequencies(rotor, constants, str(cfg.rotor["method"]))
    if channel == "transverse":
        params = TraceParameters(amplitude=amplitude, tau=tau, frequencies=freqs)
        field_sign = -1.0 if rotor.inverted else 1.0
        trace = transverse_trace(params, gas, grid, g_factor=constants.g_factor, field_sign=field_sign)
        return trace, cfg.coil_geometry(longitudinal=False)
    if channel == "longitudinal-infield":
        params = TraceParameters(
            amplitude=amplitude,
            tau=tau,
            frequencies=freqs,
            rise_time=None if rise is None else float(rise) * 1e-9,
        )
        trace = longitudinal_trace_infield(params, gas, grid, g_factor=constants.g_factor)
        return trace, cfg.coil_geometry(longitudinal=True)
    raise RejectedInputError(f"unknown channel {channel!r}")


def cmd_synthesize(cfg: centrimag_config.RunConfig, args, report: RichReport) -> Tuple[int, List[Path]]:
    trace, coil = synthesize_trace(cfg, args.channel)
    trace = _signed(trace, float(args.sense))
    sample = cfg.sample_model()
    channel, _ = coil_channel(coil)
    rotor = cfg.rotor_config()
    meta = {
        "N": rotor.N,
        "B_T": rotor.signed_field,
        "P_bar": float(cfg.gas["pressure_bar"]),
        "sense": args.sense,
        "channel": args.channel,
    }
    emf = emf_from_magnetization(trace, coil, sample, coefficient=args.coefficient)
    emf = add_noise(emf.with_samples(emf.samples, **meta), cfg.snr_db, cfg.seed)
    out = cfg.output_dir
    files = [
        write_trace(out / "trace.csv", trace),
        write_waveform(out / "magnetization.csv", trace.channel(channel, **meta)),
        write_waveform(out / "emf.csv", emf),
    ]
    report.mapping(
        f"Synthesized {args.channel}",
        {
            "samples": len(trace.time_axis),
            "peak |M| (A/m)": float(max(abs(trace.longitudinal).max(), abs(trace.transverse).max())),
            "peak |EMF| (uV)": float(abs(emf.samples).max()) * 1e6,
            "coefficient": emf.meta.get("coefficient"),
        },
    )
    return EXIT_OK, files


def _fit_input(args) -> Waveform:
    if args.input is not None:
        if args.plus or args.minus:
            raise RejectedInputError("give either INPUT or --plus/--minus, not both")
        return read_waveform(args.input)
    if not (args.plus and args.minus):
        raise RejectedInputError("fit needs INPUT or both --plus and --minus")
    emf = difference_protocol(read_waveform(args.plus), read_waveform(args.minus), "rotation")
    if args.plus_inverted or args.minus_inverted:
        if not (args.plus_inverted and args.minus_inverted):
            raise RejectedInputError("field inversion needs both --plus-inverted and --minus-inverted")
        inverted = difference_protocol(read_waveform(args.plus_inverted), read_waveform(args.minus_inverted), "rotation")
        emf = difference_protocol(emf, inverted, "field")
    return emf


def cmd_fit(cfg: centrimag_config.RunConfig, args, report: RichReport) -> Tuple[int, List[Path]]:
    emf = _fit_input(args)
    constants = cfg.molecular_constants()
    N = args.N if args.N is not None else int(emf.meta.get("N", cfg.rotor["N"]))
    B = args.B if args.B is not None else abs(float(emf.meta.get("B_T", cfg.rotor["B_T"])))
    freqs = frequencies(cfg.rotor_config(N=N, B=B), constants, str(cfg.rotor["method"]))
    fit_cfg = cfg.fit

    guess = initial_guess(emf)
    init = FitResult.seed(
        amplitude=guess.amplitude,
        tau=args.tau_init * 1e-9 if args.tau_init else guess.tau,
        omega_plus=freqs.omega_plus,
        omega_minus=freqs.omega_minus,
    )
    result = fit_precession(
        emf,
        init,
        str(fit_cfg["mode"]),
        fit_start=float(fit_cfg["fit_start_ns"]) * 1e-9,
        max_iterations=int(fit_cfg["max_iterations"]),
        tolerance=float(fit_cfg["tolerance"]),
    )
    out = cfg.output_dir
    payload = {
        "fit": result.to_dict(),
        "N": N,
        "B_T": B,
        "seed_frequencies": freqs.to_dict(),
        "differenced": emf.meta.get("differenced", []),
    }
    files = [write_json(out / "fit.json", payload)]
    if args.coefficient is not None:
        baseline = (-math.inf, float(fit_cfg["baseline_end_ns"]) * 1e-9)
        files.append(write_waveform(out / "magnetization.csv", integrate_emf(emf, args.coefficient, baseline)))
    run_log_json({"event": "fit", **result.to_dict()})
    report.mapping(
        f"Fit ({result.mode})",
        {
            "amplitude": result.amplitude,
            "tau (ns)": result.tau * 1e9,
            "sigma tau (ns)": result.uncertainties.get("tau", math.nan) * 1e9,
            "omega+ (rad/s)": result.omega_plus,
            "omega- (rad/s)": result.omega_minus,
            "residual rms": result.residual_rms,
            "converged": result.converged,
        },
    )
    if not result.converged:
        report.error(f"fit did not converge: {result.message}")
        return EXIT_NOT_CONVERGED, files
    return EXIT_OK, files


def cmd_coil(cfg: centrimag_config.RunConfig, args, report: RichReport) -> Tuple[int, List[Path]]:
    sample = cfg.sample_model()
    which = ("transverse", "longitudinal") if args.which == "both" else (args.which,)
    payload: Dict[str, Any] = {"sample": sample.to_dict()}
    rows = []
    for name in which:
        coil = cfg.coil_geometry(longitudinal=(name == "longitudinal"))
        _, axis = coil_channel(coil)
        coupling = coupling_coefficient(coil, sample, axis, tolerance=args.tolerance)
        payload[name] = {"coil": coil.to_dict(), "coupling": coupling.to_dict()}
        rows.append((name, coupling.coefficient, coupling.flux_per_moment, coupling.error_estimate))
    report.table("Coupling coefficients", ("coil", "c (A/m per V s)", "flux/moment (Wb/A m^2)", "error"), rows)
    return EXIT_OK, [write_json(cfg.output_dir / "coupling.json", payload)]


def cmd_reproduce(cfg: centrimag_config.RunConfig, args, report: RichReport) -> Tuple[int, List[Path]]:
    constants = cfg.molecular_constants()
    kwargs = {}
    if resolve_tag(args.dataset) == "fits":
        kwargs = {"coil": cfg.coil_geometry(), "sample": cfg.sample_model()}
    dataset = reproduce(args.dataset, constants, **kwargs)
    out = cfg.output_dir / args.dataset
    files = [write_trace(out / f"{name}.csv", trace) for name, trace in sorted(dataset.traces.items())]
    files += [write_waveform(out / f"{name}.csv", wave) for name, wave in sorted(dataset.waveforms.items())]
    summary = dataset.to_dict()
    files.append(write_json(out / "summary.json", summary))
    run_log_json({"event": "reproduce", "dataset": args.dataset, "headlines": dataset.headlines})
    report.table(
        f"{args.dataset} headline numbers",
        ("quantity", "model", "reference", "range", "ok"),
        [
            (h["quantity"], h["model"], h["reference"], f"[{h['low']:.4g}, {h['high']:.4g}]", "yes" if h["within"] else "NO")
            for h in dataset.headlines
        ],
    )
    panels = summary["summary"].get("panels", {})
    if any(not panel.get("fit_converged", True) for panel in panels.values()):
        return EXIT_NOT_CONVERGED, files
    return EXIT_OK, files


class SweepCsvSink:
    """Collects ordered sweep rows and writes sweep.csv once at the end."""

    def __init__(self, path: Path, report: RichReport):
        self.path = path
        self.report = report
        self.rows: List[tuple] = []

    def start(self, total: int) -> None:
        self.report.start(total)

    def write(self, key, result) -> None:
        N, B = key
        self.rows.append(
            (
                N,
                B,
                result.method,
                result.omega_plus,
                result.omega_minus,
                result.quarter_period_plus,
                result.quarter_period_minus,
                math.nan if result.m_spread is None else result.m_spread,
            )
        )
        self.report.advance()

    def finalize(self) -> None:
        self.report.stop()
        write_rows(self.path, SWEEP_HEADER, self.rows)


def cmd_sweep(cfg: centrimag_config.RunConfig, args, report: RichReport) -> Tuple[int, List[Path]]:
    constants = cfg.molecular_constants()
    method = str(cfg.rotor["method"])
    base = cfg.rotor_config()
    if not args.n_values or not args.b_values:
        raise RejectedInputError("sweep needs at least one N and one B value")
    points = [(N, B) for N in args.n_values for B in args.b_values]

    def worker(point):
        N, B = point
        return frequencies(replace(base, N=N, B=B), constants, method)

    out = cfg.output_dir
    sink = SweepCsvSink(out / "sweep.csv", report)
    count = run_sweep(points, worker, sink, max_workers=args.max_workers)
    manifest = {
        "method": method,
        "points": [list(p) for p in points],
        "results": count,
        "files": ["sweep.csv"],
        "constants": constants.to_dict(),
    }
    return EXIT_OK, [sink.path, write_json(out / "manifest.json", manifest)]


COMMANDS = {
    "spectrum": cmd_spectrum,
    "synthesize": cmd_synthesize,
    "fit": cmd_fit,
    "coil": cmd_coil,
    "reproduce": cmd_reproduce,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None, report: Optional[RichReport] = None) -> int:
    args = _parse_args(argv)
    report = report or RichReport(quiet=args.quiet)
    status = EXIT_ERROR
    try:
        cfg = centrimag_config.load(args.config, _overrides(args))
        init_logging(f"centrimag_{args.command}", str(cfg.log_dir))
        system_log(f"command {args.command} with config from {', '.join(cfg.sources)}")
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        config_file = write_json(out / "resolved_config.json", cfg.to_dict())
        run_log_json({"event": "start", "command": args.command, "config": cfg.to_dict()})

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", UserWarning)
            status, files = COMMANDS[args.command](cfg, args, report)
        for warning in caught:
            report.warn(str(warning.message))
            system_log(f"warning: {warning.message}")

        report.written([config_file, *files])
        run_log_json({"event": "done", "command": args.command, "status": status, "files": [str(f) for f in files]})
    except (CentrimagError, OSError) as exc:
        report.error(f"{type(exc).__name__}: {exc}")
        system_log(f"{args.command} failed: {type(exc).__name__}: {exc}")
        run_log_json({"event": "error", "command": args.command, "error": type(exc).__name__, "message": str(exc)})
        status = EXIT_ERROR
    finally:
        close_logging()
    return status


if __name__ == "__main__":
    sys.exit(main())

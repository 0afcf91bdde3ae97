import csv
import json

import numpy as np
import pytest
from rich.console import Console

import centrimag_config
from centrimag_cli import EXIT_ERROR, EXIT_OK, main, synthesize_trace
from centrimag_datasets import ALIASES
from centrimag_io import read_waveform
from centrimag_ui import RichReport


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SRM_CONFIG", raising=False)
    return tmp_path


def run(out, *argv):
    return main(["--out", str(out), "--quiet", *argv])


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_spectrum_with_oracle(workdir):
    out = workdir / "spec"
    assert run(out, "spectrum", "--N", "3", "--B", "0.5", "--oracle") == EXIT_OK
    payload = read_json(out / "frequencies.json")
    assert payload["total_states"] == 21
    assert payload["oracle_max_relative_deviation"] <= 1e-10
    with (out / "spectrum.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["m", "branch", "energy_joule", "energy_ghz"]
    assert len(rows) == 22
    assert read_json(out / "resolved_config.json")["rotor"]["N"] == 3


def test_logs_are_written(workdir):
    assert run(workdir / "o", "spectrum", "--N", "3") == EXIT_OK
    events = [json.loads(line) for line in (workdir / "log" / "centrimag_spectrum.jsonl").read_text().splitlines()]
    kinds = [event["event"] for event in events]
    assert "start" in kinds and "file_written" in kinds
    assert kinds[-1] == "done"
    assert all(event["timestamp"].endswith("Z") for event in events)


def test_rejected_input_exits_with_error(workdir):
    assert run(workdir / "bad", "spectrum", "--N", "3", "--B", "-1") == EXIT_ERROR
    events = (workdir / "log" / "centrimag_spectrum.jsonl").read_text()
    assert "RejectedInputError" in events


def test_unknown_config_key_exits_with_error(workdir):
    config = workdir / "extra.json"
    config.write_text(json.dumps({"rotor": {"spin": 2}}))
    assert main(["--config", str(config), "--out", str(workdir / "x"), "--quiet", "spectrum"]) == EXIT_ERROR


def test_errors_are_printed_even_when_quiet(workdir):
    console = Console(record=True, width=200)
    status = main(["--out", str(workdir / "x"), "--quiet", "spectrum", "--N", "0"], report=RichReport(console, quiet=True))
    assert status == EXIT_ERROR
    assert "RejectedInputError" in console.export_text()


def test_synthesize_then_fit(workdir):
    out = workdir / "syn"
    assert run(out, "synthesize", "--N", "71", "--B", "1", "--tau", "3.1", "--coefficient", "4e6") == EXIT_OK
    emf = read_waveform(out / "emf.csv")
    assert emf.meta["N"] == 71
    assert emf.meta["coefficient"] == 4e6

    fitted = workdir / "fit"
    assert run(fitted, "fit", str(out / "emf.csv"), "--coefficient", "4e6") == EXIT_OK
    payload = read_json(fitted / "fit.json")
    assert payload["N"] == 71
    assert payload["fit"]["tau_s"] == pytest.approx(3.1e-9, rel=0.01)
    assert (fitted / "magnetization.csv").is_file()


def test_fit_differences_rotation_senses(workdir):
    common = ("--N", "61", "--B", "1", "--tau", "2.4", "--coefficient", "4e6")
    assert run(workdir / "plus", "synthesize", *common, "--sense", "1") == EXIT_OK
    assert run(workdir / "minus", "synthesize", *common, "--sense", "-1") == EXIT_OK
    out = workdir / "fit"
    status = run(out, "fit", "--plus", str(workdir / "plus" / "emf.csv"), "--minus", str(workdir / "minus" / "emf.csv"))
    assert status == EXIT_OK
    payload = read_json(out / "fit.json")
    assert payload["differenced"] == ["rotation"]
    assert payload["fit"]["tau_s"] == pytest.approx(2.4e-9, rel=0.01)


def test_fit_needs_an_input(workdir):
    assert run(workdir / "f", "fit") == EXIT_ERROR


def test_synthesize_is_reproducible_with_noise(workdir):
    for name in ("a", "b"):
        args = ("synthesize", "--N", "89", "--snr-db", "20", "--coefficient", "4e6")
        assert main(["--out", str(workdir / name), "--quiet", "--seed", "5", *args]) == EXIT_OK
    assert (workdir / "a" / "emf.csv").read_bytes() == (workdir / "b" / "emf.csv").read_bytes()


def test_fieldfree_channel(workdir):
    out = workdir / "ff"
    assert run(out, "synthesize", "--channel", "longitudinal-fieldfree", "--N", "33", "--B", "0", "--coefficient", "4e6") == EXIT_OK
    with (out / "trace.csv").open() as handle:
        rows = list(csv.DictReader(handle))
    assert max(float(row["mu_par_bohr"]) for row in rows) > 0.0


def test_coil_command(workdir):
    out = workdir / "coil"
    assert run(out, "coil", "--which", "longitudinal") == EXIT_OK
    payload = read_json(out / "coupling.json")
    assert payload["longitudinal"]["coupling"]["coefficient_A_per_m_per_V_s"] > 0.0
    assert "transverse" not in payload


def test_sweep_writes_rows_in_order(workdir):
    out = workdir / "sweep"
    status = run(out, "sweep", "--N-values", "3,5", "--B-values", "0.5,1", "--max-workers", "2")
    assert status == EXIT_OK
    with (out / "sweep.csv").open() as handle:
        rows = list(csv.DictReader(handle))
    assert [(row["N"], row["B_T"]) for row in rows] == [("3", "0.5"), ("3", "1.0"), ("5", "0.5"), ("5", "1.0")]
    assert read_json(out / "manifest.json")["results"] == 4


def test_reproduce_command(workdir):
    out = workdir / "rep"
    assert run(out, "reproduce", "magnitudes") == EXIT_OK
    summary = read_json(out / "magnitudes" / "summary.json")
    assert summary["all_within_tolerance"]
    assert (out / "magnitudes" / "transverse.csv").is_file()


@pytest.mark.slow
@pytest.mark.parametrize("tag", ["fig2", "fig3", "fig4", "fig5"])
def test_reproduce_accepts_short_tags(workdir, tag):
    out = workdir / "rep"
    assert run(out, "reproduce", tag) == EXIT_OK
    summary = read_json(out / tag / "summary.json")
    assert summary["dataset"] == ALIASES[tag]
    assert summary["all_within_tolerance"]


@pytest.mark.slow
@pytest.mark.parametrize("tag", ["fieldfree", "fits", "pressure"])
def test_reproduce_named_datasets(workdir, tag):
    out = workdir / "rep"
    assert run(out, "reproduce", tag) == EXIT_OK
    assert read_json(out / tag / "summary.json")["all_within_tolerance"]


def test_reproduce_rejects_unknown_tag(workdir):
    with pytest.raises(SystemExit):
        run(workdir / "rep", "reproduce", "fig9")


def fieldfree_moment(pressure_bar):
    cfg = centrimag_config.load(
        None, {"gas.pressure_bar": pressure_bar, "rotor.N": 33, "rotor.B_T": 0.0}, env={}, package_config=None
    )
    trace, _ = synthesize_trace(cfg, "longitudinal-fieldfree")
    return trace.time_axis, trace.mu_longitudinal


def test_fieldfree_rise_shortens_with_pressure():
    t, low = fieldfree_moment(0.45)
    _, high = fieldfree_moment(0.9)
    early = (t > 0.0) & (t <= 3e-9)
    expected = np.expm1(-t[early] / 1e-9) / np.expm1(-t[early] / 0.5e-9)
    np.testing.assert_allclose(low[early] / high[early], expected, rtol=1e-9)
    assert np.all(low[t <= 0.0] == 0.0)


def test_fieldfree_traces_differ_between_pressures(workdir):
    peaks = {}
    for bar in ("0.45", "0.9"):
        out = workdir / bar
        argv = ("synthesize", "--channel", "longitudinal-fieldfree", "--P-bar", bar)
        assert run(out, *argv, "--N", "33", "--B", "0", "--coefficient", "4e6") == EXIT_OK
        with (out / "trace.csv").open() as handle:
            rows = [row for row in csv.DictReader(handle) if float(row["time_s"]) > 0.0]
        peaks[bar] = [float(row["mu_par_bohr"]) for row in rows]
    assert peaks["0.45"] != peaks["0.9"]
    # slower rise at the lower pressure
    assert peaks["0.45"][0] < peaks["0.9"][0]

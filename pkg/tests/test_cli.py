from __future__ import annotations

import json

import pytest

from inclusion_spectra import cli
from inclusion_spectra.experiments import ExperimentReport, InvariantViolation

SMALL = """\
master_seed = 11
output_dir = {out}
experiment.box_sides = 1
experiment.realizations = 2
experiment.h = 0.0625
experiment.resolution = ignore
experiment.n_eigs = 3
experiment.energies = 60
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_file_echoes_defaults(tmp_path):
    m = cli.parse_config(_write(tmp_path, "# defaults only\n"))
    assert m.resolved["model.epsilon"] == 0.25
    assert m.resolved["experiment.realizations"] == 10
    assert m.master_seed == 0
    assert set(cli.EXPERIMENT_KEYS) <= set(m.resolved)


def test_round_trip(tmp_path):
    text = SMALL.format(out=tmp_path / "o") + "model.density.kind = PolynomialThin\nmodel.density.kappa = 2\nexperiment.window = 10, 40\n"
    m = cli.parse_config(_write(tmp_path, text))
    again = cli.parse_config_text(cli.emit_manifest(m))
    assert again.resolved == m.resolved and again.config == m.config


@pytest.mark.parametrize(
    "text,line",
    [
        ("model.epsilon = 0.25\nmodel.omega_plus = 0.3\n", 2),
        ("\nbogus.key = 1\n", 2),
        ("experiment.box_sides = 1.1\n", 1),
        ("experiment.realizations = many\n", 1),
        ("no equals sign\n", 1),
    ],
)
def test_config_errors_carry_line(tmp_path, text, line):
    with pytest.raises(cli.ConfigFileError) as info:
        cli.parse_config(_write(tmp_path, text))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_omega_plus_message_names_bound(tmp_path):
    with pytest.raises(cli.ConfigFileError, match="1/4"):
        cli.parse_config(_write(tmp_path, "model.omega_plus = 0.3\n"))


def test_duplicate_key_last_wins(tmp_path):
    m = cli.parse_config(_write(tmp_path, "experiment.realizations = 3\nexperiment.realizations = 4\n"))
    assert m.config.realizations == 4
    assert any("duplicate" in w and "line 2" in w for w in m.warnings)


def test_missing_file():
    with pytest.raises(cli.ConfigFileError):
        cli.parse_config("/nonexistent/run.cfg")


def test_exit_codes(tmp_path, monkeypatch):
    cfg = _write(tmp_path, SMALL.format(out=tmp_path / "o"))
    assert cli.main(["wegner", "-c", str(cfg)]) == cli.EXIT_OK
    assert cli.main(["nonsense", "-c", str(cfg)]) == cli.EXIT_CONFIG
    assert cli.main(["wegner"]) == cli.EXIT_CONFIG
    bad = _write(tmp_path, "model.omega_plus = 0.3\n", "bad.cfg")
    assert cli.main(["squeeze", "-c", str(bad)]) == cli.EXIT_CONFIG

    def broken(config):
        rep = ExperimentReport("squeeze", config.to_dict(), [{"realization": 0}], {}, [])
        raise InvariantViolation("squeeze violated 1 times", report=rep)

    monkeypatch.setitem(cli.DRIVERS, "squeeze", broken)
    assert cli.main(["squeeze", "-c", str(cfg)]) == cli.EXIT_VIOLATION
    assert (tmp_path / "o" / "squeeze_report.json").exists()


def test_selftest_exit_zero():
    assert cli.dispatch("selftest", None, log=lambda *_: None) == cli.EXIT_OK


def test_report_embeds_manifest_and_plotdata(tmp_path):
    cfg = _write(tmp_path, SMALL.format(out=tmp_path / "o"))
    assert cli.main(["wegner", "-c", str(cfg)]) == 0
    out = tmp_path / "o"
    report = json.loads((out / "wegner_report.json").read_text(encoding="utf-8"))
    assert report["manifest"]["master_seed"] == 11
    assert report["manifest"]["resolved"]["experiment.h"] == 0.0625
    tsv = (out / "wegner_1_delta-E60.tsv").read_text().splitlines()
    assert tsv[0] == "# driver: wegner"
    assert any(line.startswith("# fit.delta_slope") for line in tsv)
    assert "delta\tmean_count\tci_low\tci_high" in tsv
    assert (out / "wegner_records.csv").read_text().startswith("# driver: wegner")


def test_combes_thomas_plotdata_columns(tmp_path):
    cfg = _write(tmp_path, SMALL.format(out=tmp_path / "o").replace("box_sides = 1", "box_sides = 2") + "experiment.realizations = 1\n")
    assert cli.main(["combes-thomas", "-c", str(cfg)]) == 0
    lines = (tmp_path / "o" / "combes-thomas_2_g0.5.tsv").read_text().splitlines()
    assert "distance\tlog_norm" in lines


def test_empty_sweep_gives_header_only(tmp_path):
    rep = ExperimentReport("wegner", {}, [], {}, [{"L": 1.0, "sweep": "none", "columns": ["delta", "mean_count"], "rows": [], "fit": {}}])
    (path,) = cli.emit_plotdata(rep, "wegner", tmp_path)
    assert path.name == "wegner_1_none.tsv"
    lines = path.read_text().splitlines()
    assert lines[-1] == "delta\tmean_count"
    assert all(line.startswith("#") for line in lines[:-1])


def test_oracle_dense_flag(tmp_path):
    cfg = _write(tmp_path, SMALL.format(out=tmp_path / "o"))
    assert cli.main(["wegner", "-c", str(cfg), "--oracle-dense", "-o", str(tmp_path / "p")]) == 0
    report = json.loads((tmp_path / "p" / "wegner_report.json").read_text())
    assert report["manifest"]["resolved"]["experiment.oracle_dense"] is True

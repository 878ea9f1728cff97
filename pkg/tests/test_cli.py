import csv
import json

import numpy as np
import pytest

from constrained_qm.cli import EXIT_CONFIG, EXIT_OK, EXIT_THRESHOLD, fmt, load_config, main

SMALL = ["--set", "residual.hbar_list=[0.08, 0.06, 0.04]"]


def read_csv(path):
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    body = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return header, body[0], body[1:]


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.float64(1.0) / 3) == "0.33333333333333331"
    assert fmt(3) == "3" and fmt(True) == "true"


def test_scenarios_command(tmp_path, capsys):
    assert main(["scenarios", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "scenarios.json").read_text())
    assert len(data["scenarios"]) == 6
    assert data["header"]["scenario"] == "standard"
    assert "magnetic-trap" in capsys.readouterr().out


@pytest.mark.parametrize("sid,passed", [("circle", True), ("sextic", False)])
def test_validate_command(tmp_path, capsys, sid, passed):
    assert main(["validate", "--out", str(tmp_path), "--set", f"scenario.id={sid}"]) == EXIT_OK
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert rep["passed"] is passed
    assert json.loads(capsys.readouterr().out)["scenario"] == sid


def test_spectrum_harmonic(tmp_path):
    assert main(["spectrum", "--out", str(tmp_path), "--set", "spectrum.count=5"]) == EXIT_OK
    header, cols, rows = read_csv(tmp_path / "spectrum.csv")
    assert header[0].startswith("# constrained-qm ")
    assert header[1].startswith("# config-hash ") and header[2] == "# scenario standard"
    assert cols[:4] == ["s", "E0_closed", "E0_numeric", "E0_diff"]
    diffs = np.array([[float(r[i]) for i in (3, 6, 9)] for r in rows])
    assert np.max(np.abs(diffs)) < 1e-6


def test_config_file_and_override(tmp_path):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text("scenario:\n  id: circle\nspectrum:\n  count: 3\n")
    cfg = load_config(cfg_path, ["spectrum.count=4"])
    assert cfg["scenario"]["id"] == "circle" and cfg["spectrum"]["count"] == 4
    assert cfg["compare"]["threshold"] == 0.45


def test_deterministic_output(tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["spectrum", "--out", str(d), "--set", "spectrum.count=3"]) == EXIT_OK
        outs.append((d / "spectrum.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["compare", "--set", "compare.hbar_list=[0.08, 0.04]"],
        ["compare", "--set", "compare.hbar_list=[0.04, 0.08, 0.02]"],
        ["spectrum", "--set", "spectrum.s_min=1.0", "--set", "spectrum.s_max=1.0"],
        ["validate", "--set", "scenario.id=torus"],
        ["takens", "--set", "takens.v_star=[0.0, 0.0]"],
        ["validate", "--set", "scenario.radius=-2.0", "--set", "scenario.id=circle"],
        ["frobnicate"],
        ["spectrum", "--threads", "0"],
    ],
)
def test_configuration_errors(tmp_path, argv, capsys):
    argv = argv[:1] + ["--out", str(tmp_path)] + argv[1:]
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_CONFIG
    assert not list(tmp_path.glob("*.csv"))


def test_missing_config_file(tmp_path):
    assert main(["spectrum", "--out", str(tmp_path), "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_takens_command(tmp_path):
    assert main(["takens", "--out", str(tmp_path), "--set", "takens.splits=3", "--set", "takens.dt=0.01"]) == EXIT_OK
    summary = json.loads((tmp_path / "takens_summary.json").read_text())
    assert summary["quantum_selection_gradient_max_diff"] < 1e-8
    _, cols, rows = read_csv(tmp_path / "takens.csv")
    assert cols[0] == "split" and {r[0] for r in rows} == {"0", "1", "2", "quantum"}


def test_residual_threshold_exit(tmp_path, capsys):
    assert main(["residual", "--out", str(tmp_path), *SMALL, "--set", "residual.threshold=2.0"]) == EXIT_THRESHOLD
    s = json.loads((tmp_path / "residual_summary.json").read_text())
    assert 1.2 < s["slope"] < 2.0
    _, cols, rows = read_csv(tmp_path / "residual.csv")
    assert cols == ["hbar", "residual_norm", "residual_norm_uncorrected"] and len(rows) == 3


def test_classical_command(tmp_path):
    assert main(["classical", "--out", str(tmp_path), "--set", "classical.dt=0.01"]) == EXIT_OK
    _, cols, rows = read_csv(tmp_path / "classical.csv")
    assert cols[-2:] == ["energy_drift", "condition_residual"]
    assert max(abs(float(r[-2])) for r in rows) < 1e-8
    assert max(float(r[-1]) for r in rows) < 1e-10

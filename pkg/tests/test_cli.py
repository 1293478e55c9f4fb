import subprocess
import sys

import numpy as np
import pytest

from dsbmcp.cli import main
from dsbmcp.netcore import load_series_binary, load_series_text


CONFIG = """\
[scenario]
name = "II"
m = 16
n = 10
tau = 0.5
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "scenario.toml"
    path.write_text(CONFIG)
    return path


def test_simulate_text_and_binary(tmp_path, config_file):
    out_txt = tmp_path / "series.txt"
    assert main(["simulate", "--config", str(config_file), "--out", str(out_txt), "--seed", "3"]) == 0
    series = load_series_text(out_txt)
    assert (series.m, series.n, series.tau_index) == (16, 10, 5)

    out_bin = tmp_path / "series.bin"
    assert (
        main(
            ["simulate", "--config", str(config_file), "--out", str(out_bin), "--seed", "3", "--format", "binary"]
        )
        == 0
    )
    assert np.array_equal(load_series_binary(out_bin).matrices, series.matrices)


def test_simulate_multiple_replicates(tmp_path, config_file):
    out = tmp_path / "series.txt"
    assert main(["simulate", "--config", str(config_file), "--out", str(out), "--reps", "3"]) == 0
    files = sorted(tmp_path.glob("series_r*.txt"))
    assert len(files) == 3
    a, b = load_series_text(files[0]), load_series_text(files[1])
    assert not np.array_equal(a.matrices, b.matrices)


def test_flags_override_config(tmp_path, config_file, capsys):
    out = tmp_path / "series.txt"
    main(["simulate", "--config", str(config_file), "--out", str(out), "--m", "12", "--n", "8"])
    series = load_series_text(out)
    assert (series.m, series.n) == (12, 8)


def test_detect_with_truth(tmp_path, config_file, capsys):
    out = tmp_path / "series.txt"
    main(["simulate", "--config", str(config_file), "--out", str(out), "--seed", "1"])
    truth = tmp_path / "z.txt"
    truth.write_text(" ".join(["1"] * 8 + ["2"] * 8))
    code = main(
        [
            "detect",
            "--series",
            str(out),
            "--method",
            "2step",
            "--method",
            "known",
            "--K",
            "2",
            "--truth-z",
            str(truth),
            "--truth-w",
            str(truth),
            "--out-prefix",
            str(tmp_path / "det"),
        ]
    )
    assert code == 0
    assert (tmp_path / "det_fits.csv").exists()
    assert (tmp_path / "det_trajectory_2step.csv").exists()
    assert (tmp_path / "det_trajectory_known.csv").exists()
    assert "misclassification" in capsys.readouterr().out


def test_bench_command(tmp_path, config_file, capsys):
    report = tmp_path / "report.csv"
    code = main(
        [
            "bench",
            "--config",
            str(config_file),
            "--methods",
            "2step",
            "known",
            "--reps",
            "4",
            "--seed",
            "2",
            "--threads",
            "2",
            "--out",
            str(report),
        ]
    )
    assert code == 0
    lines = report.read_text().strip().splitlines()
    assert len(lines) == 3
    assert "F_n=" in capsys.readouterr().out


def test_bootstrap_command(tmp_path, config_file, capsys):
    out = tmp_path / "series.txt"
    main(["simulate", "--config", str(config_file), "--out", str(out), "--seed", "5"])
    code = main(
        [
            "bootstrap",
            "--series",
            str(out),
            "--K",
            "2",
            "--R",
            "20",
            "--out-prefix",
            str(tmp_path / "bs"),
        ]
    )
    assert code == 0
    assert (tmp_path / "bs_samples.csv").exists()
    assert (tmp_path / "bs_quantiles.csv").exists()
    assert "tau interval" in capsys.readouterr().out


def test_diagnose_command(tmp_path, config_file, capsys):
    csv_out = tmp_path / "diag.csv"
    assert main(["diagnose", "--config", str(config_file), "--out", str(csv_out)]) == 0
    text = capsys.readouterr().out
    assert "F_n" in text and "nu_m" in text
    assert csv_out.exists()


def test_missing_scenario_settings_exit(tmp_path):
    with pytest.raises(SystemExit):
        main(["simulate", "--out", str(tmp_path / "x.txt")])


def test_console_script_entry_point(tmp_path, config_file):
    proc = subprocess.run(
        [sys.executable, "-m", "dsbmcp.cli", "diagnose", "--config", str(config_file)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "F_n" in proc.stdout

"""End-to-end CLI behavior: verbs, exit codes, artifacts, env overrides."""

import os

import pytest

from saturnlab.cli import main
from saturnlab.reporting import CSV_HEADER, parse_report

CONFIG = """
[dataset]
n = 200
d = 12
classes = 4
flip_prob = 0.1

[model]
hidden = 16

[run]
seed = 3
epochs = 3
batch_size = 32
"""

DESIGN_A = CONFIG.replace("hidden = 16", "hidden = 16\nhead_design = design_a") + (
    "sweep_r1 = 0.5, 1.0\nsweep_d = 1.0\n\n[srcm]\nr1 = 1.0\nd = 1.0\n"
)


def write_config(directory, text=CONFIG, name="lab.ini"):
    path = directory / name
    path.write_text(text)
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_run")
    cfg = write_config(root)
    out = root / "out"
    assert main(["run", "-c", cfg, "-o", str(out), "--no-figures"]) == 0
    return out


def test_run_writes_artifacts(run_dir):
    for name in ("report.txt", "table.csv", "config_echo.ini",
                 "seed3_member_bins.csv", "seed3_nonmember_bins.csv",
                 "seed3_target.ckpt", "seed3_shadow.ckpt"):
        assert (run_dir / name).is_file(), name

    table = (run_dir / "table.csv").read_text().splitlines()
    assert table[0] == CSV_HEADER
    assert len(table) == 2


def test_run_stdout_matches_table(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "-c", cfg, "-o", str(out), "--no-figures"]) == 0
    stdout = capsys.readouterr().out.splitlines()
    assert stdout[0] == CSV_HEADER
    table = (out / "table.csv").read_text().splitlines()
    assert stdout[1] == table[1]
    assert any(line.startswith("artifacts in") for line in stdout)


def test_run_renders_figures(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "-c", cfg, "-o", str(out)]) == 0
    assert (out / "seed3_magnitude_margin.png").is_file()
    assert (out / "training_curves.png").is_file()


def test_bad_config_content_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, text="[run]\nepochs = soon\n")
    assert main(["run", "-c", cfg, "--no-figures"]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["run", "-c", str(tmp_path / "absent.ini"), "--no-figures"]) == 2
    assert "cannot read config file" in capsys.readouterr().err


def test_missing_data_file_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path, text="[dataset]\nsource = file\npath = gone.csv\n")
    assert main(["run", "-c", cfg, "-o", str(tmp_path / "out"), "--no-figures"]) == 3
    assert "split" in capsys.readouterr().err


def test_attack_verb_reproduces_stored_values(run_dir, capsys):
    assert main(["attack", "-d", str(run_dir)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "seed," + CSV_HEADER
    seed, *values = lines[1].split(",")
    assert seed == "3"
    stored = parse_report((run_dir / "report.txt").read_text())
    for field, value in zip(CSV_HEADER.split(","), values):
        assert stored[f"seed3.{field}"] == value, field


def test_attack_missing_dir_exits_3(tmp_path, capsys):
    assert main(["attack", "-d", str(tmp_path / "nope")]) == 3
    assert "completed run" in capsys.readouterr().err


def test_diagnose_verb(run_dir, tmp_path, capsys):
    out = tmp_path / "diag"
    assert main(["diagnose", "-d", str(run_dir), "-o", str(out), "--no-figures"]) == 0
    stdout = capsys.readouterr().out
    assert "member pearson" in stdout
    assert (out / "seed3_member_bins.csv").is_file()
    assert (out / "seed3_nonmember_bins.csv").is_file()


def test_bench_verb_with_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path, text=DESIGN_A)
    out = tmp_path / "bench_out"
    code = main(["bench", "-c", cfg, "-o", str(out), "--no-figures",
                 "--iters", "10", "--warmup", "1", "--batch", "8"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "overhead ratio vs vanilla:" in stdout
    lines = (out / "bench.csv").read_text().splitlines()
    assert lines[0] == "head,mean_ms,std_ms"
    assert len(lines) == 3  # design_a row + vanilla row


def test_bench_without_out_dir_writes_nothing(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("LAB_OUT_DIR", raising=False)
    cfg = write_config(tmp_path)
    before = set(os.listdir(tmp_path))
    code = main(["bench", "-c", cfg, "--iters", "10", "--warmup", "1", "--batch", "8"])
    assert code == 0
    assert "bench artifacts" not in capsys.readouterr().out
    assert set(os.listdir(tmp_path)) == before


def test_sweep_verb(tmp_path, capsys):
    cfg = write_config(tmp_path, text=DESIGN_A)
    out = tmp_path / "sweep_out"
    assert main(["sweep", "-c", cfg, "-o", str(out), "--no-figures"]) == 0
    stdout = capsys.readouterr().out.splitlines()
    assert stdout[0] == "r1,d," + CSV_HEADER
    assert stdout[1].startswith("0.5,1,")
    assert (out / "trend.csv").is_file()
    assert (out / "r1_0.5_d_1" / "report.txt").is_file()


def test_lab_out_dir_env_override(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path)
    ignored = tmp_path / "ignored"
    actual = tmp_path / "env_out"
    monkeypatch.setenv("LAB_OUT_DIR", str(actual))
    assert main(["run", "-c", cfg, "-o", str(ignored), "--no-figures"]) == 0
    assert (actual / "report.txt").is_file()
    assert not ignored.exists()

import csv
import json
import subprocess
import sys

import pytest

from qapm.cli import main
from qapm.graphgen import read_dataset, record_to_sample


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_generate_count(capsys):
    assert main(["generate", "--model", "er", "--n", "50", "--p", "0.2", "--pe", "0.05",
                 "--count", "10", "--seed", "7"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10
    g1, g2, pi = record_to_sample(json.loads(lines[0]))
    assert g1.n == 50 and sorted(pi) == list(range(50))


def test_generate_to_file(tmp_path):
    assert main(["generate", "--model", "regular", "--n", "12", "--deg", "3", "--count", "4",
                 "--seed", "1", "--out", str(tmp_path / "d.jsonl")]) == 0
    assert len(list(read_dataset(tmp_path / "d.jsonl"))) == 4


def test_moments(capsys):
    assert main(["landscape", "moments", "--m", "4"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("argv", [
    ["eval", "--seed", "1"],                    # no checkpoint
    ["train", "--n", "10"],                     # no seed
    ["train", "--seed", "1", "--bogus"],        # unknown flag
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_runtime_errors(tmp_path, capsys):
    assert main(["generate", "--p", "2", "--count", "1", "--seed", "0"]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json"), "--seed", "1"]) == 2
    assert "qapm:" in capsys.readouterr().err


def test_bad_config_file_is_usage_error(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert main(["baseline", "--config", str(tmp_path / "c.json")]) == 1


def test_train_eval_report_pipeline(tmp_path, capsys):
    run = tmp_path / "run"
    common = ["--n", "12", "--p", "0.3", "--seed", "4"]
    assert main(["train", *common, "--layers", "2", "--feat", "4", "--J", "1", "--train-size", "8",
                 "--epochs", "2", "--batch", "4", "--fixed-corpus", "--out-dir", str(run)]) == 0
    assert len(rows(run / "metrics.csv")) == 3
    cfg = json.loads((run / "config.json").read_text())
    assert cfg["stream"] is False and cfg["gnn"]["layers"] == 2

    out = tmp_path / "rec.csv"
    assert main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--config", str(run / "config.json"),
                 "--pe", "0", "0.05", "--trials", "3", "--seed", "4", "--out", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["method", "p_e", "mean_recovery", "std", "trials", "seed"]
    assert {r[0] for r in table[1:]} == {"gnn", "umeyama", "lowrank"} and len(table) == 7

    base = tmp_path / "base.csv"
    assert main(["baseline", *common, "--pe", "0.1", "--trials", "3", "--baselines", "umeyama",
                 "--out", str(base)]) == 0
    capsys.readouterr()
    assert main(["report", str(out), str(base)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "p_e,gnn,lowrank,umeyama" and len(lines) == 4


def test_landscape_sweeps(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["landscape", "sweep", "--sizes", "30", "60", "--trials", "3", "--out", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["n", "d", "k", "trial_count", "metric_name", "mean", "std", "seed"] and len(table) == 3
    assert main(["landscape", "gradgap", "--sizes", "30", "60", "--trials", "3", "--out", str(out)]) == 0
    assert len(rows(out)) == 9


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qapm", "landscape", "moments", "--m", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and float(proc.stdout) == pytest.approx(1.0)

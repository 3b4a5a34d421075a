"""The htl command: exit codes, outputs and reproducibility."""
import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from htl.cli import EXPERIMENTS, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", str(CONFIGS / f"{name}.toml"), "--out-dir", str(out), *extra])
    return code, out


def test_pass_exits_zero(tmp_path):
    code, out = _run(tmp_path, "delta_subexp_pareto")
    assert code == 0
    doc = json.loads((out / "verdict.json").read_text())
    assert doc["status"] == "pass" and doc["exit_code"] == 0


def test_failed_assertion_exits_one(tmp_path):
    code, out = _run(tmp_path, "example1_window1")
    assert code == 1
    doc = json.loads((out / "verdict.json").read_text())
    assert doc["status"] == "fail"
    assert any(s["verdict"] == "oscillating" for s in doc["series"])


def test_invalid_config_exits_two(tmp_path, capsys):
    code, out = _run(tmp_path, "bad_window")
    assert code == 2
    assert "config error" in capsys.readouterr().err
    assert json.loads((out / "verdict.json").read_text())["status"] == "config_error"


def test_missing_file_exits_two(tmp_path):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2


def test_bad_overrides_exit_two(tmp_path):
    cfg = str(CONFIGS / "delta_subexp_pareto.toml")
    assert main(["run", cfg, "--seed", "-1"]) == 2
    assert main(["run", cfg, "--tol", "0"]) == 2


def test_stochastic_needs_seed(tmp_path):
    text = (CONFIGS / "ladder.toml").read_text().replace("n_paths = 1000000", "n_paths = 100")
    lines = [ln for ln in text.splitlines() if not ln.startswith("seed")]
    p = tmp_path / "noseed.toml"
    p.write_text("\n".join(lines) + "\n")
    assert main(["run", str(p), "--out-dir", str(tmp_path / "o")]) == 2


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(EXPERIMENTS)
    assert any(ln.startswith("krt") for ln in lines)


def test_list_filter(capsys):
    assert main(["list", "--filter", "renewal"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all("renewal" in ln.lower() for ln in lines)
    assert main(["list", "--filter", "no-such-experiment"]) == 0
    assert capsys.readouterr().out == ""


def test_outputs_reproducible(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    text = (CONFIGS / "ladder.toml").read_text()
    small = tmp_path / "small.toml"
    small.write_text(text.replace("n_paths = 1000000", "n_paths = 20000")
                     .replace("barrier = 5000.0", "barrier = 500.0")
                     .replace("x_max = 1000.0", "x_max = 100.0"))
    cfg = str(small)
    assert main(["run", cfg, "--out-dir", str(a)]) == main(["run", cfg, "--out-dir", str(b)])
    for f in ("ratios.csv", "plotdata.csv", "verdict.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_config_hash_on_every_row(tmp_path):
    _, out = _run(tmp_path, "delta_subexp_pareto")
    h = json.loads((out / "verdict.json").read_text())["config_hash"]
    with open(out / "ratios.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["config_hash"] == h for r in rows)


def test_seed_override_changes_hash(tmp_path):
    _, a = _run(tmp_path, "delta_subexp_pareto")
    code = main(["run", str(CONFIGS / "delta_subexp_pareto.toml"), "--seed", "5",
                 "--out-dir", str(tmp_path / "s")])
    assert code == 0
    ha = json.loads((a / "verdict.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "s" / "verdict.json").read_text())["config_hash"]
    assert ha != hb


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "htl.cli", "list", "--filter", "krt"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and "krt" in r.stdout

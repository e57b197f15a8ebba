import json
import subprocess
import sys

import pytest

from gridplan.cli import main
from gridplan.grid import load_instance, validate


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_plan_writes_reports(tmp_path, capsys):
    assert run(tmp_path, "plan", "--instance", "ring4", "--epsilon", "1e-7") == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert plan["objective"] == pytest.approx(67.5)
    assert plan["status"] == "converged"
    for name in ("trace.csv", "timing.csv", "wcd.json", "wcd.txt"):
        assert (tmp_path / name).exists()
    assert "DR objective" in capsys.readouterr().out


def test_evaluate_from_plan(tmp_path):
    assert run(tmp_path, "plan", "--instance", "ring4", "--mode", "ro") == 0
    assert run(tmp_path, "evaluate", "--instance", "ring4", "--plan", str(tmp_path / "plan.json"),
               "--samples", "3", "--draws", "100") == 0
    rep = json.loads((tmp_path / "evaluation.json").read_text())
    assert rep["wcs"] == pytest.approx(250.0)


def test_exit_code_infeasible(tmp_path, capsys):
    assert run(tmp_path, "plan", "--instance", "ring4", "--budget", "10") == 3
    assert "infeasible" in capsys.readouterr().err


def test_exit_code_nonconvergence(tmp_path):
    code = run(tmp_path, "plan", "--instance", "twin7", "--n-z", "2", "--mode", "ro",
               "--max-iter", "1", "--seed-pool", "ones", "--epsilon", "1e-9")
    assert code == 2


def test_oracle_command(tmp_path):
    assert run(tmp_path, "oracle", "--instance", "ring4") == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert abs(doc["delta"]) < 1e-4
    assert doc["distribution"]


def test_generate_command(tmp_path):
    assert run(tmp_path, "generate", "--nodes", "12", "--substations", "1", "--periods", "3",
               "--seed", "4", "--name", "g.json") == 0
    inst = load_instance(tmp_path / "g.json")
    assert inst.periods == 3 and validate(inst) == []


def test_sweep_and_compare(tmp_path):
    assert run(tmp_path, "sweep", "--instance", "ring4", "--budget-factors", "1.0,1.4", "--nz", "1,2") == 0
    assert (tmp_path / "violations.txt").read_text() == ""
    assert run(tmp_path, "compare", "--instance", "ring4", "--samples", "2", "--draws", "100") == 0
    assert "reduction" in (tmp_path / "summary.txt").read_text() or "increase" in (tmp_path / "summary.txt").read_text()


def test_missing_instance_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit):
        run(tmp_path, "plan")


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gridplan.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()

import json
import shutil
import subprocess

import pytest

from conftest import CYLINDER, MINIMAL
from machina.cli import main

from test_lts import MINIMAL_AUT

MIN_MODEL = str(MINIMAL)
CYL_MODEL = str(CYLINDER / "cylinder.cmdl")


def test_validate(capsys):
    assert main(["validate", CYL_MODEL]) == 0
    assert capsys.readouterr().out.strip().endswith(": ok")


def test_validate_json(capsys):
    assert main(["validate", MIN_MODEL, "--json"]) == 0
    assert json.loads(capsys.readouterr().out) == []


def test_invalid_model(tmp_path, capsys):
    bad = tmp_path / "bad.cmdl"
    bad.write_text("machinepart X (1) {")
    assert main(["validate", str(bad)]) == 2
    assert "SYNTAX" in capsys.readouterr().err


def test_missing_model(capsys):
    assert main(["validate", "/nonexistent.cmdl"]) == 2


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["explore"])
    assert exc.value.code == 2


def test_explore_minimal(tmp_path, capsys):
    out = tmp_path / "m.aut"
    assert main(["explore", MIN_MODEL, "--out", str(out)]) == 0
    assert out.read_text() == MINIMAL_AUT
    assert capsys.readouterr().out.strip() == "states: 11  edges: 22  depth: 10"


def test_explore_tau(tmp_path):
    out = tmp_path / "m.aut"
    assert main(["explore", MIN_MODEL, "--out", str(out), "--tau-no-trans"]) == 0
    assert "(10,tau,5)" in out.read_text()


def test_explore_limit(capsys):
    assert main(["explore", CYL_MODEL, "--max-states", "10"]) == 2
    assert "LIMIT_EXCEEDED" in capsys.readouterr().err


def test_replay_fig10(capsys):
    assert main(["replay", CYL_MODEL, str(CYLINDER / "fig10.script")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# replay")
    assert "Disabled=Disabled.Conditioning.InitialState" in lines[-1]


def test_replay_empty(tmp_path, capsys):
    script = tmp_path / "empty.script"
    script.write_text("# nothing\n")
    assert main(["replay", CYL_MODEL, str(script)]) == 0
    assert capsys.readouterr().out.splitlines() == [f"# replay {CYL_MODEL}: 0 choices"]


def test_replay_rejected_choice(tmp_path, capsys):
    script = tmp_path / "bad.script"
    script.write_text("inputs tt tt\nfreecmd NO_SUCH\n")
    assert main(["replay", CYL_MODEL, str(script)]) in (1, 2)
    assert capsys.readouterr().err


def test_emit(tmp_path):
    out = tmp_path / "m.mcrl2"
    assert main(["emit", MIN_MODEL, "--out", str(out)]) == 0
    assert "init P_main" in out.read_text()


def test_check_formula(tmp_path, capsys):
    good = tmp_path / "good.mcf"
    good.write_text("[true*]<true>true")
    bad = tmp_path / "bad.mcf"
    bad.write_text("[true*]<trans(1)>true")
    out = tmp_path / "out"
    code = main(["check", MIN_MODEL, "--formula", str(good), "--formula", str(bad),
                 "--out", str(out), "--json"])
    assert code == 1
    report = json.loads((out / "report.json").read_text())
    assert json.loads(capsys.readouterr().out) == report
    assert set(report) == {"model", "results", "lts", "total_ms"}
    good_r, bad_r = report["results"]
    assert (good_r["name"], good_r["holds"]) == ("good", True)
    assert (bad_r["name"], bad_r["holds"]) == ("bad", False)
    trace = (out / "bad.trace").read_text().splitlines()
    assert trace and bad_r["witness_path"].endswith("bad.trace")


def test_check_formula_error(tmp_path):
    f = tmp_path / "broken.mcf"
    f.write_text("mu X .")
    assert main(["check", MIN_MODEL, "--formula", str(f), "--out", str(tmp_path)]) == 2


@pytest.mark.skipif(shutil.which("machina") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["machina", "explore", MIN_MODEL], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("states: 11")

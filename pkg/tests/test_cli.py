import json
import shutil
import subprocess

import numpy as np
import pytest

from mcflab.cli import main

SMALL = """\
schema: 1
name: small-circle
shape:
  type: Circle
  r0: 1.0
resolution: 64
flow:
  stop_factor: 20
  snapshot_stride: 200
verify:
  graph_anchors: 8
  ball_pairs: 3
"""


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    scen = base / "small.scenario"
    scen.write_text(SMALL)
    out = base / "out"
    assert main(["simulate", str(scen), "--stages", "all", "--out", str(out)]) == 0
    return out


def test_simulate_all_writes_artifacts(run_dir):
    for name in ("analysis.json", "verification.json", "rescale.json", "trajectory/index.json",
                 "trajectory/diagnostics.csv", "rescaled/level_01.csv"):
        assert (run_dir / name).is_file(), name
    ver = json.loads((run_dir / "verification.json").read_text())
    assert ver["summary"]["all_pass"] and ver["summary"]["failed"] == 0
    ana = json.loads((run_dir / "analysis.json").read_text())
    assert ana["classification"] == "TypeI"
    assert ana["T_est"] == pytest.approx(0.5, rel=1e-2)


def test_stage_commands(run_dir, tmp_path, capsys):
    traj = run_dir / "trajectory"
    assert main(["analyze", str(traj), "--out", str(tmp_path)]) == 0
    assert main(["verify", str(traj), "--checks", "identities,evolution", "--out",
                 str(tmp_path)]) == 0
    assert main(["rescale", str(traj), "--levels", "3", "--out", str(tmp_path)]) == 0
    resc = json.loads((tmp_path / "rescale.json").read_text())
    assert resc["levels_available"] == [1, 2, 3]
    capsys.readouterr()
    assert main(["report", str(run_dir), "--out", str(tmp_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["all_pass"] and rep["trajectory"]["scenario_id"] == "small-circle"


def test_check_failure_exits_1(run_dir, tmp_path):
    d = tmp_path / "trajectory"
    shutil.copytree(run_dir / "trajectory", d)
    snap = d / "snapshot_00001.csv"
    lines = snap.read_text().splitlines()
    header = lines[0].split(",")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    rows[:, header.index("x0")] += 5.0  # teleport the curve: displacement exceeds max|H| t
    snap.write_text("\n".join([lines[0]] + [",".join("%.17g" % x for x in r) for r in rows]) + "\n")
    assert main(["verify", str(d), "--checks", "displacement_bound", "--out", str(tmp_path)]) == 1
    ver = json.loads((tmp_path / "verification.json").read_text())
    assert ver["summary"]["failed"] == 1


def test_runtime_errors_exit_2(tmp_path, capsys):
    assert main(["verify", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) == 2
    assert "TrajectoryIOError" in capsys.readouterr().err
    bad = tmp_path / "bad.scenario"
    bad.write_text(SMALL.replace("flow:\n", "flow:\n  viscosity: 1\n"))
    assert main(["simulate", str(bad), "--out", str(tmp_path)]) == 2
    assert "flow.viscosity" in capsys.readouterr().err
    assert main(["simulate", "circle", "--stages", "simulate,plot", "--out", str(tmp_path)]) == 2
    assert main(["report", str(tmp_path / "empty")]) == 2


def test_unknown_check_id_exits_2(run_dir, tmp_path):
    assert main(["verify", str(run_dir / "trajectory"), "--checks", "curvature_bound",
                 "--out", str(tmp_path)]) == 2


def test_console_script():
    exe = shutil.which("mcflab")
    if exe is None:
        pytest.skip("console script not installed")
    out = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout

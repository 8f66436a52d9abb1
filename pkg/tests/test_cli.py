import filecmp
import json

import pytest

from msgraph.cli import main
from msgraph.sgraph import SituationalGraph

RUN_FILES = {"graph.json", "trajectory_semantic.txt", "trajectory_baseline.txt", "ground_truth.txt",
             "metrics.txt", "report.json"}


@pytest.fixture(scope="module")
def seq01_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run1")
    assert main(["run", "--scene", "seq01", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_run_writes_artifacts(seq01_run):
    assert {p.name for p in seq01_run.iterdir()} == RUN_FILES
    metrics = (seq01_run / "metrics.txt").read_text()
    rows = [l.split()[0] for l in metrics.splitlines() if l and not l.startswith(("ATE", "Method", "-", " "))]
    assert rows == ["odometry-only", "semantic[markers,walls,spaces,doorways]"] * 2
    report = json.loads((seq01_run / "report.json").read_text())
    assert report["runs"]["semantic"]["ate_aligned"]["rmse"] < report["runs"]["baseline"]["ate_aligned"]["rmse"]


def test_run_is_deterministic(seq01_run, tmp_path):
    assert main(["run", "--scene", "seq01", "--seed", "3", "--out", str(tmp_path)]) == 0
    cmp = filecmp.dircmp(seq01_run, tmp_path)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert all(filecmp.cmp(seq01_run / f, tmp_path / f, shallow=False) for f in RUN_FILES)


def test_spaces_without_walls_is_a_validation_error(tmp_path, capsys):
    assert main(["run", "--layers", "markers,spaces", "--out", str(tmp_path)]) == 1
    assert "requires" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["simulate", "--scene", "seq99", "--out", "x"],
    ["run", "--max-iters", "-1", "--out", "x"],
    ["run", "--info.odometry", "1,2", "--out", "x"],
    ["run", "--noise.odom_rot_sigma", "-1", "--out", "x"],
    ["bogus"],
    ["evaluate", "missing.txt", "also-missing.txt"],
    ["export", "missing.json"],
])
def test_invalid_input_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1


def test_export_roundtrip_and_formats(seq01_run, tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["export", str(seq01_run / "graph.json"), "--out", str(out)]) == 0
    assert out.read_text() == (seq01_run / "graph.json").read_text()
    assert SituationalGraph.from_json(out.read_text()).to_json() == out.read_text()
    assert main(["export", str(out), "--format", "dot"]) == 0
    dot = capsys.readouterr().out
    assert dot.startswith("graph sgraph {") and "room" in dot
    assert main(["export", str(out), "--format", "summary"]) == 0
    assert "keyframe" in capsys.readouterr().out


def test_export_reports_file_on_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["export", str(bad)]) == 1
    assert str(bad) in capsys.readouterr().err


def test_evaluate(seq01_run, capsys):
    assert main(["evaluate", str(seq01_run / "trajectory_semantic.txt"), str(seq01_run / "ground_truth.txt"),
                 "--format", "json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    report = json.loads((seq01_run / "report.json").read_text())
    assert rep["rmse"] == pytest.approx(report["runs"]["semantic"]["ate_aligned"]["rmse"], abs=1e-12)
    assert main(["evaluate", str(seq01_run / "ground_truth.txt"), str(seq01_run / "ground_truth.txt"),
                 "--no-align"]) == 0
    assert "rmse=0.000000" in capsys.readouterr().out


def test_simulate_then_run_from_dataset(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--scene", "seq06", "--seed", "1", "--noise.odom_trans_sigma", "0.02",
                 "--out", str(sim)]) == 0
    assert {p.name for p in sim.iterdir()} == {"scene.json", "dictionary.json", "dataset.json", "ground_truth.txt"}
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--dataset", str(sim / "dataset.json"), "--out", str(a)]) == 0
    assert main(["run", "--scene", "seq06", "--seed", "1", "--noise.odom_trans_sigma", "0.02",
                 "--out", str(b)]) == 0
    assert (a / "report.json").read_text() == (b / "report.json").read_text()
    # scene files round-trip too
    c = tmp_path / "c"
    assert main(["run", "--scene", str(sim / "scene.json"), "--seed", "1",
                 "--noise.odom_trans_sigma", "0.02", "--out", str(c)]) == 0
    assert (c / "graph.json").read_text() == (b / "graph.json").read_text()


def test_info_override_recorded(tmp_path):
    assert main(["run", "--scene", "seq06", "--layers", "markers", "--info.marker_obs", "50",
                 "--max-iters", "3", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["information"]["marker_obs"] == [50.0] * 6
    assert report["layers"] == ["markers"]

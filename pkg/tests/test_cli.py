import csv
import filecmp
import json
import subprocess
import sys

import pytest

from stereotwin import cli


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _run(*argv):
    return cli.main(["--quiet", *map(str, argv)])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert _run("--out-dir", out, "synth") == 0
    return out


@pytest.fixture(scope="module")
def pipeline_run(synth_dir):
    assert _run("pipeline", synth_dir / "pipeline.json") == 0
    return synth_dir / "run"


def test_synth_writes_all_inputs(synth_dir):
    for name in ("left.pgm", "right.pgm", "observations_left.json", "observations_right.json", "landmarks.csv",
                 "reference_landmarks.json", "ground_truth.csv", "selection.json", "pipeline.json", "gt_disparity.txt"):
        assert (synth_dir / name).is_file(), name
    gt = _rows(synth_dir / "ground_truth.csv")
    assert [r["axis"] for r in gt] == ["L", "W", "H"]


def test_pipeline_recovers_box_within_two_percent(pipeline_run):
    rows = _rows(pipeline_run / "report.csv")
    assert len(rows) == 3
    for r in rows:
        assert float(r["error_percent"]) < 2.0, r
    summary = json.loads((pipeline_run / "report_summary.json").read_text())
    assert summary["count"] == 3 and summary["meta"]["std"] == "population"


def test_pipeline_equals_manual_composition(synth_dir, pipeline_run, tmp_path):
    s, m = synth_dir, tmp_path
    steps = [
        ("--out-dir", m, "calibrate", s / "observations_left.json", "-o", "calibration_left.json"),
        ("--out-dir", m, "calibrate", s / "observations_right.json", "-o", "calibration_right.json"),
        ("--out-dir", m, "stereo-pose", m / "calibration_left.json", m / "calibration_right.json"),
        ("--out-dir", m, "rectify", m / "rig.json", s / "left.pgm", s / "right.pgm"),
    ]
    for argv in steps:
        assert _run(*argv) == 0, argv
    disp = json.loads((s / "pipeline.json").read_text())["disparity"]
    assert _run("--out-dir", m, "disparity", m / "left_rect.pgm", m / "right_rect.pgm",
                "--d-min", disp["d_min"], "--d-max", disp["d_max"], "--window-radius", disp["window_radius"],
                "--left-mask", m / "left_valid.pgm", "--right-mask", m / "right_valid.pgm",
                "--mask-threshold", cli.DEFAULT_MASK_THRESHOLD) == 0
    assert _run("--out-dir", m, "reconstruct", m / "disparity.txt", m / "rectified.json",
                "--image", m / "left_rect.pgm", "--landmarks", s / "landmarks.csv") == 0
    assert _run("--out-dir", m, "mesh", m / "cloud.ply") == 0
    assert _run("--out-dir", m, "align", m / "cloud.ply", m / "landmarks_3d.json", s / "reference_landmarks.json") == 0
    assert _run("--out-dir", m, "measure", m / "aligned.ply", s / "selection.json") == 0
    assert _run("--out-dir", m, "report", "--ground-truth", s / "ground_truth.csv", "--measurements", m / "measurements.csv") == 0
    for name in ("rig.json", "disparity.txt", "cloud.ply", "mesh.ply", "aligned.ply", "measurements.csv", "report.csv"):
        assert filecmp.cmp(m / name, pipeline_run / name, shallow=False), name


def test_pipeline_rerun_is_byte_identical(synth_dir, pipeline_run, tmp_path):
    assert _run("--out-dir", tmp_path, "pipeline", synth_dir / "pipeline.json") == 0
    names = sorted(p.name for p in pipeline_run.iterdir())
    assert names == sorted(p.name for p in tmp_path.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(pipeline_run, tmp_path, names, shallow=False)
    assert mismatch == [] and errors == []


def test_synth_is_deterministic(synth_dir, tmp_path):
    assert _run("synth", "--out-dir", tmp_path) == 0  # global flag after the subcommand
    for name in ("left.pgm", "right.pgm", "observations_left.json", "gt_disparity.txt", "pipeline.json"):
        assert filecmp.cmp(synth_dir / name, tmp_path / name, shallow=False), name


def test_reference_tables_report(tmp_path):
    assert _run("--out-dir", tmp_path, "report", "--reference-tables") == 0
    rows = _rows(tmp_path / "report.csv")
    printed = _rows(cli.reference_tables_path())
    assert len(rows) == len(printed) == 57
    for got, ref in zip(rows, printed):
        assert abs(float(got["error_percent"]) - float(ref["printed_error"])) <= 0.01 + 1e-9, (got, ref)


def test_missing_input_is_usage_error(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert cli.main(["calibrate", str(missing)]) == cli.EXIT_USAGE
    assert str(missing) in capsys.readouterr().err
    assert cli.main(["pipeline", str(missing)]) == cli.EXIT_USAGE


def test_bad_arguments_are_usage_errors(tmp_path):
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["report"]) == cli.EXIT_USAGE
    assert cli.main(["synth", "--noise", "-1", "--out-dir", str(tmp_path)]) == cli.EXIT_USAGE
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["pipeline", str(cfg)]) == cli.EXIT_USAGE


def test_processing_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "obs.json"
    bad.write_text("{broken")
    assert cli.main(["--out-dir", str(tmp_path), "calibrate", str(bad)]) == cli.EXIT_PROCESSING
    assert "invalid JSON" in capsys.readouterr().err
    few = tmp_path / "few.json"
    few.write_text(json.dumps([{"view_id": "a", "board_points": [[0, 0]], "image_points": [[1, 1]]}]))
    assert cli.main(["--out-dir", str(tmp_path), "calibrate", str(few)]) == cli.EXIT_PROCESSING


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "stereotwin", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("stereotwin ")

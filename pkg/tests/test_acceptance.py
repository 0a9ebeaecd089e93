"""Acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict; the lines are printed in the
terminal summary (see conftest.py) and when this file is run as a script.
"""
import csv
import filecmp
import time

import numpy as np
import pytest

from helpers import points_in_front, random_pose, verged_rig
from stereotwin import cli
from stereotwin.calibration import calibrate_intrinsics, fundamental_matrix, stereo_relative_pose
from stereotwin.evaluation import aggregate_errors, percent_error, read_table
from stereotwin.geometry import CameraIntrinsics, CameraPose, compose_pose, project_points
from stereotwin.rectification import RectifiedRig, apply_homography, compute_rectifying_transforms, epipolar_residual
from stereotwin.reconstruction import triangulate_arrays, triangulate_rectified
from stereotwin.synthetic import FRONT_RACK_EXTENTS, Board, default_board_poses, project_board

VERDICTS = {}


def record(n, ok, detail):
    VERDICTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    assert ok, VERDICTS[n]


def _printed_table():
    with open(cli.reference_tables_path(), newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_criterion_1_table_reproduction():
    t0 = time.perf_counter()
    rows = _printed_table()
    worst = max(abs(percent_error(float(r["actual"]), float(r["measured"])) - float(r["printed_error"])) for r in rows)
    elapsed = time.perf_counter() - t0
    record(1, len(rows) == 57 and worst <= 0.01 + 1e-9 and elapsed < 1.0,
           f"{len(rows)} cells, worst deviation {worst:.4f} pp, {elapsed:.3f} s")


def test_criterion_2_aggregates():
    t0 = time.perf_counter()
    s = aggregate_errors(read_table(cli.reference_tables_path()))
    elapsed = time.perf_counter() - t0
    ok = s.count == 57 and abs(s.mean_percent - 4.97) <= 0.25 and abs(s.std_percent - 5.54) <= 0.5 and elapsed < 1.0
    record(2, ok, f"mean {s.mean_percent:.3f}%, population std {s.std_percent:.3f}%, {elapsed:.3f} s")


def test_criterion_3_calibration():
    truth = CameraIntrinsics(800.0, 780.0, 0.0, 320.0, 240.0)
    board = Board(7, 9, 1.0)
    poses = default_board_poses(board, 5)
    names = ("alpha_u", "alpha_v", "u0", "v0")

    def views(noise, seed):
        return [project_board(board, truth, p, noise_sigma=noise, seed=seed * 100 + i, view_id=f"v{i}")
                for i, p in enumerate(poses)]

    def rel_errors(b):
        errs = [abs(getattr(b, n) - getattr(truth, n)) / getattr(truth, n) for n in names]
        return errs + [abs(b.gamma) / truth.alpha_u]

    t0 = time.perf_counter()
    clean = max(rel_errors(calibrate_intrinsics(views(0.0, 0)).intrinsics))
    noisy, rms = [], []
    for seed in range(20):
        res = calibrate_intrinsics(views(0.1, seed))
        noisy.append(rel_errors(res.intrinsics)[:4])
        rms.append(res.rms_reprojection_error)
    elapsed = time.perf_counter() - t0
    noisy_mean = float(np.mean(noisy, axis=0).max())
    ok = clean < 1e-4 and noisy_mean < 0.01 and np.mean(rms) <= 0.2 and elapsed < 10.0
    record(3, ok, f"noiseless {clean:.2e}, noisy mean {noisy_mean:.2e}, rms {np.mean(rms):.3f} px, {elapsed:.2f} s")


def test_criterion_4_stereo_pose():
    rng = np.random.default_rng(4)
    left, right = random_pose(rng), random_pose(rng)
    n0, e0 = stereo_relative_pose(left, right)
    drift = 0.0
    for _ in range(100):
        world = random_pose(rng)
        n1, e1 = stereo_relative_pose(compose_pose(world, left), compose_pose(world, right))
        drift = max(drift, np.abs(n1 - n0).max(), np.abs(e1 - e0).max())
    oracle_n = right.rotation @ left.rotation.T
    oracle_e = right.translation - oracle_n @ left.translation
    exact = max(np.abs(n0 - oracle_n).max(), np.abs(e0 - oracle_e).max())
    record(4, drift < 1e-10 and exact <= 1e-12, f"frame drift {drift:.1e}, oracle deviation {exact:.1e}")


def test_criterion_5_epipolar_and_rectification():
    rng = np.random.default_rng(5)
    rig = verged_rig(5.0)
    pts = points_in_front(rng, 500)
    pl = project_points(rig.left_intrinsics, CameraPose.identity(), pts)
    pr = project_points(rig.right_intrinsics, rig.relative_pose, pts)
    res = epipolar_residual(fundamental_matrix(rig), np.column_stack([pl, pr]))
    rect = compute_rectifying_transforms(rig)
    dv = np.abs(apply_homography(rect.left_transform, pl)[:, 1] - apply_homography(rect.right_transform, pr)[:, 1]).max()
    record(5, res.max < 1e-9 and dv < 1e-6, f"max epipolar residual {res.max:.1e}, max |v_l - v_r| {dv:.1e} px")


def test_criterion_6_triangulation():
    rng = np.random.default_rng(6)
    rig = verged_rig(5.0)
    rect = compute_rectifying_transforms(rig)
    pts = points_in_front(rng, 1000)
    pl = apply_homography(rect.left_transform, project_points(rig.left_intrinsics, CameraPose.identity(), pts))
    pr = apply_homography(rect.right_transform, project_points(rig.right_intrinsics, rig.relative_pose, pts))
    rec = triangulate_arrays(pl[:, 0], pl[:, 1], pl[:, 0] - pr[:, 0], rect) @ rect.rotation
    worst = float(np.max(np.linalg.norm(rec - pts, axis=1) / np.linalg.norm(pts, axis=1)))
    example = triangulate_rectified(100, 50, 60, RectifiedRig.parallel(CameraIntrinsics(1000, 1000, 0, 0, 0), 0.2, 1000))
    ok = worst < 1e-9 and tuple(example) == (0.5, 0.25, 5.0)
    record(6, ok, f"round trip {worst:.1e} relative, worked example {tuple(example)}")


@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    t0 = time.perf_counter()
    codes = [cli.main(["--quiet", "--out-dir", str(root / "a"), "synth"]),
             cli.main(["--quiet", "pipeline", str(root / "a" / "pipeline.json")])]
    return root, codes, time.perf_counter() - t0


def test_criterion_7_end_to_end(end_to_end):
    root, codes, elapsed = end_to_end
    assert codes == [0, 0]
    with open(root / "a" / "run" / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    actual = tuple(float(r["actual"]) for r in rows)
    errors = [float(r["error_percent"]) for r in rows]
    ok = actual == FRONT_RACK_EXTENTS and max(errors) < 2.0 and elapsed < 60.0
    detail = ", ".join(f"{r['axis']} {e:.2f}%" for r, e in zip(rows, errors))
    record(7, ok, f"{detail}, {elapsed:.1f} s at 640x480")


def test_criterion_8_determinism(end_to_end):
    root, codes, _ = end_to_end
    assert codes == [0, 0]
    assert cli.main(["--quiet", "--out-dir", str(root / "b"), "synth"]) == 0
    assert cli.main(["--quiet", "pipeline", str(root / "b" / "pipeline.json")]) == 0
    files = sorted(p.relative_to(root / "a") for p in (root / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(root / "b") for p in (root / "b").rglob("*") if p.is_file())
    same = [f for f in files if filecmp.cmp(root / "a" / f, root / "b" / f, shallow=False)] if files == files_b else []
    record(8, files == files_b and len(same) == len(files), f"{len(same)}/{len(files)} output files byte-identical")


if __name__ == "__main__":
    import sys

    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)

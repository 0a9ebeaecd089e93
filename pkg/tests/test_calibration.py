import warnings

import numpy as np
import pytest

from helpers import points_in_front, random_pose, verged_rig
from stereotwin.calibration import (
    CalibrationConvergenceWarning,
    PlanarObservation,
    calibrate_intrinsics,
    estimate_homography,
    estimate_view_pose,
    fundamental_matrix,
    intrinsics_from_homographies,
    refine_calibration,
    rig_from_calibrations,
    stereo_relative_pose,
)
from stereotwin.errors import (
    DegenerateConfigurationError,
    InsufficientPointsError,
    InsufficientViewsError,
    SingularTransformError,
    ZeroBaselineError,
)
from stereotwin.geometry import CameraIntrinsics, CameraPose, StereoRig, compose_pose, project_points
from stereotwin.synthetic import Board, default_board_poses, project_board

TRUE_B = CameraIntrinsics(800.0, 780.0, 0.0, 320.0, 240.0)
BOARD = Board(7, 9, 1.0)


def synthetic_views(b=TRUE_B, n=5, noise=0.0, seed=0):
    return [
        project_board(BOARD, b, pose, noise_sigma=noise, seed=seed * 100 + i, view_id=f"v{i}")
        for i, pose in enumerate(default_board_poses(BOARD, n))
    ]


def rel(a, b):
    return abs(a - b) / abs(b)


def test_homography_identity_on_unit_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    h = estimate_homography(sq, sq)
    assert np.allclose(h / h[2, 2], np.eye(3), atol=1e-12)
    assert np.linalg.norm(h) == pytest.approx(1.0)
    assert h[2, 2] >= 0


def test_homography_recovers_known_matrix(rng):
    h0 = np.diag([2.0, 2.0, 1.0])
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.3]], float)
    h = estimate_homography(pts, pts * 2)
    assert np.allclose(h / h[2, 2], h0, atol=1e-9)
    # general projective map
    g = np.array([[1.1, 0.2, 3.0], [-0.1, 0.9, 2.0], [1e-3, 2e-3, 1.0]])
    src = rng.uniform(0, 10, size=(12, 2))
    dst_h = np.column_stack([src, np.ones(12)]) @ g.T
    dst = dst_h[:, :2] / dst_h[:, 2:]
    h = estimate_homography(src, dst)
    assert np.allclose(h / h[2, 2], g, atol=1e-9)


def test_homography_degenerate_inputs():
    line = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], float)
    with pytest.raises(DegenerateConfigurationError):
        estimate_homography(line, line)
    with pytest.raises(InsufficientPointsError):
        estimate_homography(line[:3], line[:3])


def test_closed_form_intrinsics_before_refinement():
    obs = synthetic_views()
    hs = [estimate_homography(o.board_points, o.image_points) for o in obs]
    b = intrinsics_from_homographies(hs)
    for name in ("alpha_u", "alpha_v", "u0", "v0"):
        assert rel(getattr(b, name), getattr(TRUE_B, name)) < 1e-6
    assert abs(b.gamma) / TRUE_B.alpha_u < 1e-6


def test_calibrate_noiseless_five_views():
    res = calibrate_intrinsics(synthetic_views(), refine=True)
    b = res.intrinsics
    for name in ("alpha_u", "alpha_v", "u0", "v0"):
        assert rel(getattr(b, name), getattr(TRUE_B, name)) < 1e-4
    assert abs(b.gamma) / TRUE_B.alpha_u < 1e-4
    assert res.rms_reprojection_error < 1e-6
    assert set(res.view_poses) == {f"v{i}" for i in range(5)}


def test_calibrate_recovers_view_poses():
    poses = default_board_poses(BOARD, 5)
    res = calibrate_intrinsics(synthetic_views(), refine=True)
    for i, p in enumerate(poses):
        q = res.view_poses[f"v{i}"]
        assert np.allclose(q.rotation, p.rotation, atol=1e-7)
        assert np.allclose(q.translation, p.translation, atol=1e-6)


def test_calibrate_with_noise_mean_over_seeds():
    errs, rms = [], []
    for seed in range(20):
        res = calibrate_intrinsics(synthetic_views(noise=0.1, seed=seed))
        b = res.intrinsics
        errs.append([rel(getattr(b, n), getattr(TRUE_B, n)) for n in ("alpha_u", "alpha_v", "u0", "v0")])
        rms.append(res.rms_reprojection_error)
    assert np.mean(errs, axis=0).max() < 0.01
    assert np.mean(rms) <= 0.2


def test_refinement_never_increases_rms():
    for seed in range(5):
        res = calibrate_intrinsics(synthetic_views(noise=0.3, seed=seed))
        assert res.rms_reprojection_error <= res.initial_rms + 1e-12


def test_view_count_feasibility():
    # two tilted views; a fronto-parallel view says nothing about focal length
    obs = synthetic_views(n=3)[1:]
    res = calibrate_intrinsics(obs, fix_skew=True)
    assert res.intrinsics.gamma == 0.0
    assert rel(res.intrinsics.alpha_u, TRUE_B.alpha_u) < 1e-4
    with pytest.raises(InsufficientViewsError):
        calibrate_intrinsics(obs)


def test_nonconvergence_warns_and_returns_best_iterate():
    obs = synthetic_views(noise=0.5, seed=3)
    hs = [estimate_homography(o.board_points, o.image_points) for o in obs]
    b0 = intrinsics_from_homographies(hs)
    poses = [estimate_view_pose(h, b0) for h in hs]
    b, _, history, iterations, converged = refine_calibration(b0, poses, obs, max_iterations=1)
    assert iterations == 1 and not converged
    assert history[-1] <= history[0]


def test_estimate_view_pose_examples():
    b = CameraIntrinsics(1, 1, 0, 0, 0)
    h = np.column_stack([[1, 0, 0], [0, 1, 0], [0, 0, 5]]).astype(float)
    pose = estimate_view_pose(h, b)
    assert np.allclose(pose.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(pose.translation, [0, 0, 5], atol=1e-9)
    pose = estimate_view_pose(TRUE_B.matrix, TRUE_B)
    assert np.allclose(pose.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(pose.translation, [0, 0, 1], atol=1e-12)
    # sign of H is irrelevant: the board is put in front of the camera
    pose = estimate_view_pose(-TRUE_B.matrix, TRUE_B)
    assert pose.translation[2] > 0
    with pytest.raises(SingularTransformError):
        estimate_view_pose(np.zeros((3, 3)), b)


def test_stereo_relative_pose_examples():
    p = CameraPose.identity()
    n, e = stereo_relative_pose(p, p)
    assert np.array_equal(n, np.eye(3)) and np.array_equal(e, np.zeros(3))
    n, e = stereo_relative_pose(p, CameraPose(np.eye(3), [-0.1, 0, 0]))
    assert np.array_equal(n, np.eye(3))
    assert e.tolist() == [-0.1, 0, 0]


def test_stereo_relative_pose_composition_oracle(rng):
    left, right = random_pose(rng), random_pose(rng)
    n, e = stereo_relative_pose(left, right)
    for x in rng.normal(size=(100, 3)) * 3:
        via_left = n @ left.apply(x) + e
        assert np.allclose(via_left, right.apply(x), atol=1e-12)


def test_stereo_relative_pose_world_frame_invariance(rng):
    for _ in range(100):
        left, right, world = random_pose(rng), random_pose(rng), random_pose(rng)
        n0, e0 = stereo_relative_pose(left, right)
        n1, e1 = stereo_relative_pose(compose_pose(world, left), compose_pose(world, right))
        assert np.abs(n1 - n0).max() < 1e-10
        assert np.abs(e1 - e0).max() < 1e-10


def test_rig_from_calibrations():
    rig0 = verged_rig()
    obs_l, obs_r = [], []
    for i, pose in enumerate(default_board_poses(BOARD, 4, distance=16)):
        obs_l.append(project_board(BOARD, rig0.left_intrinsics, pose, view_id=f"v{i}"))
        obs_r.append(project_board(BOARD, rig0.right_intrinsics, rig0.right_pose(pose), view_id=f"v{i}"))
    rig = rig_from_calibrations(calibrate_intrinsics(obs_l), calibrate_intrinsics(obs_r))
    assert np.allclose(rig.relative_rotation, rig0.relative_rotation, atol=1e-8)
    assert np.allclose(rig.relative_translation, rig0.relative_translation, atol=1e-7)


def test_fundamental_matrix_examples():
    eye = CameraIntrinsics(1, 1, 0, 0, 0)
    f = fundamental_matrix(StereoRig(eye, eye, np.eye(3), [1, 0, 0]))
    expected = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]]) / np.sqrt(2)
    assert np.allclose(f, expected, atol=1e-15) or np.allclose(f, -expected, atol=1e-15)
    with pytest.raises(ZeroBaselineError):
        fundamental_matrix(StereoRig(eye, eye, np.eye(3), [0, 0, 0]))


def test_fundamental_matrix_projection_oracle(rng):
    rig = verged_rig()
    f = fundamental_matrix(rig)
    assert np.linalg.svd(f, compute_uv=False)[-1] < 1e-9
    assert np.linalg.norm(f) == pytest.approx(1.0)
    pts = points_in_front(rng, 100)
    pl = project_points(rig.left_intrinsics, CameraPose.identity(), pts)
    pr = project_points(rig.right_intrinsics, rig.relative_pose, pts)
    for a, b in zip(pl, pr):
        ha = np.append(a, 1.0)
        hb = np.append(b, 1.0)
        assert abs(hb / np.linalg.norm(hb) @ f @ (ha / np.linalg.norm(ha))) < 1e-9


def test_observation_validation():
    from stereotwin.errors import StereoTwinError

    with pytest.raises(StereoTwinError):
        PlanarObservation("x", [[0, 0], [1, 0]], [[0, 0]])
    obs = synthetic_views(n=3)
    obs[1] = PlanarObservation("v0", obs[1].board_points, obs[1].image_points)
    with pytest.raises(StereoTwinError):
        calibrate_intrinsics(obs)


def test_no_warning_on_clean_data():
    with warnings.catch_warnings():
        warnings.simplefilter("error", CalibrationConvergenceWarning)
        calibrate_intrinsics(synthetic_views())

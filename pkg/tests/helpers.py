"""Shared builders for the test suite."""
import numpy as np

from stereotwin.geometry import CameraIntrinsics, CameraPose, StereoRig, rodrigues, rotation_about


def random_rotation(rng):
    return rodrigues(rng.normal(size=3) * rng.uniform(0.1, 2.5))


def random_pose(rng, scale=5.0):
    return CameraPose(random_rotation(rng), rng.normal(size=3) * scale)


def verged_rig(angle_deg=5.0, baseline=0.2, left=None, right=None):
    """Two cameras toed in by ``angle_deg`` each towards a point ahead of the midpoint."""
    left = left or CameraIntrinsics(800.0, 780.0, 0.0, 320.0, 240.0)
    right = right or CameraIntrinsics(810.0, 795.0, 0.0, 316.0, 244.0)
    a = np.radians(angle_deg)
    pose_l = CameraPose(rotation_about("y", -a), np.zeros(3))
    centre_r = np.array([baseline, 0.0, 0.0])
    r_r = rotation_about("y", a)
    pose_r = CameraPose(r_r, -r_r @ centre_r)
    rel = pose_r.rotation @ pose_l.rotation.T
    t = pose_r.translation - rel @ pose_l.translation
    return StereoRig(left, right, rel, t)


def points_in_front(rng, n, depth=(2.0, 6.0), spread=0.8):
    z = rng.uniform(*depth, size=n)
    xy = rng.uniform(-spread, spread, size=(n, 2)) * z[:, None] * 0.5
    return np.column_stack([xy, z])


def textured(h, w, seed=0, cell=3.0):
    """Smooth value-noise image in [0.1, 0.9]."""
    rng = np.random.default_rng(seed)
    gh, gw = int(h / cell) + 3, int(w / cell) + 3
    grid = rng.random((gh, gw))
    ys, xs = np.mgrid[0:h, 0:w] / cell
    y0, x0 = np.floor(ys).astype(int), np.floor(xs).astype(int)
    ty, tx = ys - y0, xs - x0
    sy, sx = ty * ty * (3 - 2 * ty), tx * tx * (3 - 2 * tx)
    top = grid[y0, x0] * (1 - sx) + grid[y0, x0 + 1] * sx
    bot = grid[y0 + 1, x0] * (1 - sx) + grid[y0 + 1, x0 + 1] * sx
    return 0.1 + 0.8 * (top * (1 - sy) + bot * sy)

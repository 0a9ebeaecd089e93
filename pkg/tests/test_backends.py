"""The numba kernels and their numpy fallbacks must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from helpers import textured
from stereotwin import _accel, synthetic
from stereotwin.correspondence import DisparityParams, compute_disparity, zncc_cost_volume
from stereotwin.rectification import RasterImage, warp_image

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _both(fn):
    with _accel.use_backend("numpy"):
        a = fn()
    with _accel.use_backend("numba"):
        b = fn()
    return a, b


def test_zncc_volume_matches(rng):
    left = textured(40, 60, 1)
    right = np.roll(left, -5, axis=1) + 0.01 * rng.normal(size=left.shape)
    mask_l = rng.random(left.shape) > 0.1
    mask_r = rng.random(left.shape) > 0.1
    params = DisparityParams(window_radius=3, d_min=0, d_max=12)
    a, b = _both(lambda: zncc_cost_volume(left, right, mask_l, mask_r, params))
    assert a.shape == b.shape
    assert np.array_equal(np.isfinite(a), np.isfinite(b))
    fin = np.isfinite(a)
    assert np.abs(a[fin] - b[fin]).max() < 1e-9


def test_disparity_maps_match():
    left = textured(48, 64, 4)
    right = np.ascontiguousarray(np.hstack([left[:, 6:], left[:, :6]]))
    params = DisparityParams(window_radius=4, d_min=0, d_max=10)
    a, b = _both(lambda: compute_disparity(left, right, params))
    assert np.array_equal(a.valid, b.valid)
    assert np.abs(a.values[a.valid] - b.values[b.valid]).max() < 1e-9


def test_warp_matches(rng):
    img = RasterImage(textured(30, 40, 2))
    h = np.array([[1.02, 0.03, -2.5], [-0.01, 0.98, 1.7], [1e-4, -2e-4, 1.0]])
    (ia, va), (ib, vb) = _both(lambda: warp_image(img, h, 44, 33))
    assert np.array_equal(va, vb)
    assert np.abs(ia.samples - ib.samples).max() < 1e-12


def test_render_matches():
    spec = synthetic.front_rack_scene(160, 120)
    faces = [f for obj in spec.objects for f in obj.faces()]
    tables = synthetic._texture_tables(len(faces), spec.texture_seed)
    (da, fa, sa), (db, fb, sb) = _both(
        lambda: synthetic.render_view(faces, spec.rig.left_intrinsics, spec.left_pose, 160, 120, tables, spec.texture_cell)
    )
    assert np.array_equal(fa, fb)
    hit = fa >= 0
    assert hit.sum() > 100
    assert np.abs(da[hit] - db[hit]).max() < 1e-9
    assert np.abs(sa - sb).max() < 1e-9


@pytest.mark.parametrize("value, expected", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(value, expected):
    env = dict(os.environ, STEREOTWIN_DISABLE_NUMBA=value)
    out = subprocess.run(
        [sys.executable, "-c", "from stereotwin import _accel; print(_accel.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")

"""Stereo rectification and bilinear image warping."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import EmptyInputError, SingularTransformError, StereoTwinError, ZeroBaselineError
from .geometry import CameraIntrinsics, StereoRig, _frozen


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Row-major intensities in [0, 1], shape ``(height, width)`` or ``(height, width, 3)``."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim not in (2, 3) or (s.ndim == 3 and s.shape[2] not in (1, 3)):
            raise StereoTwinError(f"image samples must be (h, w) or (h, w, 3), got {s.shape}")
        if s.ndim == 3 and s.shape[2] == 1:
            s = s[:, :, 0]
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise StereoTwinError("image must be at least 1x1")
        object.__setattr__(self, "samples", s)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3

    def gray(self) -> np.ndarray:
        if self.channels == 1:
            return self.samples
        return self.samples @ np.array([0.299, 0.587, 0.114])

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RectifiedRig:
    """Result of rectification.

    ``left_transform``/``right_transform`` take original pixels to rectified
    pixels. Both rectified cameras share ``new_intrinsics`` and the rotation
    ``rotation`` (rectified-from-original-left); the right one sits
    ``baseline_G`` along the rectified +x axis.
    """

    left_transform: np.ndarray
    right_transform: np.ndarray
    new_intrinsics: CameraIntrinsics
    baseline_G: float
    focal_O: float
    rotation: np.ndarray

    def __post_init__(self):
        for name in ("left_transform", "right_transform", "rotation"):
            m = np.asarray(getattr(self, name), dtype=float).reshape(3, 3)
            if abs(np.linalg.det(m)) < 1e-300 or not np.all(np.isfinite(m)):
                raise SingularTransformError(f"{name} is singular")
            object.__setattr__(self, name, _frozen(m))
        if not self.baseline_G > 0:
            raise ZeroBaselineError("rectified baseline must be positive")
        if not self.focal_O > 0:
            raise StereoTwinError("rectified focal length must be positive")

    @classmethod
    def parallel(cls, intrinsics: CameraIntrinsics, baseline: float, focal: float | None = None) -> "RectifiedRig":
        """An already-rectified rig with identity transforms."""
        return cls(np.eye(3), np.eye(3), intrinsics, float(baseline), float(focal or intrinsics.alpha_u), np.eye(3))

    def to_dict(self) -> dict:
        return {
            "left_transform": [float(x) for x in self.left_transform.reshape(-1)],
            "right_transform": [float(x) for x in self.right_transform.reshape(-1)],
            "intrinsics": self.new_intrinsics.to_dict(),
            "baseline_G": float(self.baseline_G),
            "focal_O": float(self.focal_O),
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RectifiedRig":
        return cls(
            np.asarray(d["left_transform"], dtype=float).reshape(3, 3),
            np.asarray(d["right_transform"], dtype=float).reshape(3, 3),
            CameraIntrinsics.from_dict(d["intrinsics"]),
            float(d["baseline_G"]),
            float(d["focal_O"]),
            np.asarray(d.get("rotation", np.eye(3).reshape(-1)), dtype=float).reshape(3, 3),
        )


def compute_rectifying_transforms(rig: StereoRig) -> RectifiedRig:
    """Rectifying homographies for a calibrated rig.

    The new common orientation has its x axis along the baseline (left to
    right optical centre) and its z axis as close as possible to the mean of
    the two original optical axes. Both cameras receive the same zero-skew
    intrinsics: per-axis geometric mean of the focal lengths and the average
    principal point.
    """
    baseline = rig.baseline
    if baseline == 0:
        raise ZeroBaselineError("stereo rig has a zero baseline")
    n_rl = rig.relative_rotation
    # everything below is expressed in the original left camera frame
    c_right = -n_rl.T @ rig.relative_translation
    x_axis = c_right / np.linalg.norm(c_right)
    mean_z = np.array([0.0, 0.0, 1.0]) + n_rl.T[:, 2]
    y_axis = np.cross(mean_z, x_axis)
    if np.linalg.norm(y_axis) < 1e-12:
        raise StereoTwinError("baseline is parallel to the viewing direction; cannot rectify")
    y_axis /= np.linalg.norm(y_axis)
    z_axis = np.cross(x_axis, y_axis)
    r_new = np.vstack([x_axis, y_axis, z_axis])

    bl, br = rig.left_intrinsics, rig.right_intrinsics
    new_b = CameraIntrinsics(
        math.sqrt(bl.alpha_u * br.alpha_u),
        math.sqrt(bl.alpha_v * br.alpha_v),
        0.0,
        0.5 * (bl.u0 + br.u0),
        0.5 * (bl.v0 + br.v0),
    )
    k_new = new_b.matrix
    h_left = k_new @ r_new @ bl.inverse
    h_right = k_new @ r_new @ n_rl.T @ br.inverse
    return RectifiedRig(h_left, h_right, new_b, baseline, new_b.alpha_u, r_new)


def apply_homography(h: np.ndarray, points) -> np.ndarray:
    """Map ``(n, 2)`` pixel coordinates through a 3x3 homography."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hom = pts @ h[:, :2].T + h[:, 2]
    return hom[:, :2] / hom[:, 2:3]


@njit(parallel=True)
def _warp_numba(src, hinv, out_h, out_w):
    h, w, c = src.shape
    out = np.zeros((out_h, out_w, c))
    valid = np.zeros((out_h, out_w), dtype=np.bool_)
    for y in prange(out_h):
        for x in range(out_w):
            sx = hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]
            sy = hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]
            sw = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
            if sw == 0.0:
                continue
            sx = sx / sw
            sy = sy / sw
            if not (sx >= 0.0 and sx <= w - 1 and sy >= 0.0 and sy <= h - 1):
                continue
            x0 = min(int(math.floor(sx)), max(w - 2, 0))
            y0 = min(int(math.floor(sy)), max(h - 2, 0))
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = sx - x0
            fy = sy - y0
            valid[y, x] = True
            for k in range(c):
                top = (1.0 - fx) * src[y0, x0, k] + fx * src[y0, x1, k]
                bot = (1.0 - fx) * src[y1, x0, k] + fx * src[y1, x1, k]
                out[y, x, k] = (1.0 - fy) * top + fy * bot
    return out, valid


def _warp_numpy(src, hinv, out_h, out_w):
    h, w, c = src.shape
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    sx = hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]
    sy = hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]
    sw = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    nz = sw != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = np.where(nz, sx / np.where(nz, sw, 1.0), -1.0)
        sy = np.where(nz, sy / np.where(nz, sw, 1.0), -1.0)
    valid = (sx >= 0.0) & (sx <= w - 1) & (sy >= 0.0) & (sy <= h - 1)
    sxv = np.where(valid, sx, 0.0)
    syv = np.where(valid, sy, 0.0)
    x0 = np.minimum(np.floor(sxv).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(syv).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sxv - x0)[..., None]
    fy = (syv - y0)[..., None]
    top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
    bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
    out = (1.0 - fy) * top + fy * bot
    out[~valid] = 0.0
    return out, valid


def warp_image(src: RasterImage, h, out_width: int | None = None, out_height: int | None = None):
    """Warp ``src`` by the forward homography ``h`` with bilinear sampling.

    Each destination pixel centre is pulled back through ``h^-1``. Pixels
    whose source position falls outside ``[0, w-1] x [0, h-1]`` are set to 0
    and reported ``False`` in the returned validity mask.

    Returns
    -------
    (RasterImage, numpy.ndarray)
        The warped image and a boolean ``(out_height, out_width)`` mask.
    """
    h = np.asarray(h, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(h)):
        raise SingularTransformError("warp matrix is not finite")
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-12 * sv[0]:
        raise SingularTransformError("warp matrix is singular")
    hinv = np.linalg.inv(h)
    out_w = src.width if out_width is None else int(out_width)
    out_h = src.height if out_height is None else int(out_height)
    if out_w < 1 or out_h < 1:
        raise StereoTwinError("output size must be positive")
    samples = src.samples if src.channels == 3 else src.samples[:, :, None]
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    if _accel.backend() == "numba":
        out, valid = _warp_numba(samples, hinv, out_h, out_w)
    else:
        out, valid = _warp_numpy(samples, hinv, out_h, out_w)
    if src.channels == 1:
        out = out[:, :, 0]
    return RasterImage(out), valid


def warp_mask(mask: np.ndarray, h, out_width: int, out_height: int) -> np.ndarray:
    """Nearest-neighbour pull-back of a boolean mask (used for foreground masks)."""
    hinv = np.linalg.inv(np.asarray(h, dtype=float))
    ys, xs = np.mgrid[0:out_height, 0:out_width].astype(np.float64)
    hom = np.stack([xs, ys, np.ones_like(xs)], axis=-1) @ hinv.T
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = np.rint(hom[..., 0] / hom[..., 2])
        sy = np.rint(hom[..., 1] / hom[..., 2])
    ok = np.isfinite(sx) & np.isfinite(sy) & (sx >= 0) & (sx <= mask.shape[1] - 1) & (sy >= 0) & (sy <= mask.shape[0] - 1)
    out = np.zeros((out_height, out_width), dtype=bool)
    out[ok] = mask[sy[ok].astype(int), sx[ok].astype(int)]
    return out


@dataclass(frozen=True)
class EpipolarResidual:
    mean: float
    max: float
    per_pair: np.ndarray


def epipolar_residual(f, pairs) -> EpipolarResidual:
    """Distance (pixels) of each right point from the epipolar line ``F p_l``.

    The algebraic residual ``p_r^T F p_l`` is normalised by the gradient of
    the line, which makes it a true point-to-line distance in the right image.
    """
    pts = np.asarray(pairs, dtype=float)
    if pts.size == 0:
        raise EmptyInputError("no point pairs given")
    pts = pts.reshape(-1, 4)
    f = np.asarray(f, dtype=float).reshape(3, 3)
    pl = np.column_stack([pts[:, 0:2], np.ones(len(pts))])
    pr = np.column_stack([pts[:, 2:4], np.ones(len(pts))])
    lines = pl @ f.T
    algebraic = np.einsum("ij,ij->i", pr, lines)
    norm = np.hypot(lines[:, 0], lines[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(norm > 0, np.abs(algebraic) / norm, np.abs(algebraic))
    return EpipolarResidual(float(d.mean()), float(d.max()), d)

"""Dense disparity by masked zero-mean normalised cross-correlation.

Images are assumed rectified: a left pixel ``(x, y)`` is compared with right
pixels ``(x - d, y)`` for integer ``d`` in ``[d_min, d_max]``. Optional
validity masks (warp coverage, foreground masks) remove pixels from every
window statistic, so windows straddling a mask boundary only correlate the
pixels that are actually valid on both sides.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import DimensionMismatchError, InvalidRangeError, StereoTwinError
from .rectification import RasterImage

NO_MATCH = -np.inf


@dataclass(frozen=True)
class DisparityParams:
    window_radius: int = 4
    d_min: int = 0
    d_max: int = 64
    min_texture: float = 1e-4
    uniqueness_ratio: float = 0.9
    lr_tolerance: float = 1.0
    min_support: float = 0.25
    """Minimum fraction of the window that must be valid on both sides."""

    def __post_init__(self):
        if int(self.window_radius) != self.window_radius or self.window_radius < 0:
            raise InvalidRangeError("window_radius must be a non-negative integer")
        if int(self.d_min) != self.d_min or int(self.d_max) != self.d_max:
            raise InvalidRangeError("disparity bounds must be integers")
        if self.d_min > self.d_max:
            raise InvalidRangeError(f"d_min {self.d_min} exceeds d_max {self.d_max}")
        if not 0 < self.uniqueness_ratio <= 1:
            raise InvalidRangeError("uniqueness_ratio must lie in (0, 1]")
        if self.min_texture < 0 or self.lr_tolerance < 0 or not 0 < self.min_support <= 1:
            raise InvalidRangeError("thresholds must be non-negative and min_support in (0, 1]")


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Per-pixel ``x_l - x_r`` on the left rectified grid; NaN where invalid."""

    values: np.ndarray
    valid: np.ndarray
    d_min: float
    d_max: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise DimensionMismatchError("disparity values and validity must be equal 2D arrays")
        values = np.where(valid, values, np.nan)
        v = values[valid]
        if v.size and (v.min() < self.d_min or v.max() > self.d_max):
            raise InvalidRangeError(f"valid disparities must lie in [{self.d_min}, {self.d_max}]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def invalid(cls, width: int, height: int, d_min: float = 0, d_max: float = 0) -> "DisparityMap":
        return cls(np.full((height, width), np.nan), np.zeros((height, width), bool), d_min, d_max)


def _integral(a: np.ndarray) -> np.ndarray:
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(a, axis=1, out=s[1:, 1:])
    np.cumsum(s[1:, 1:], axis=0, out=s[1:, 1:])
    return s


def _box_sum_numpy(a: np.ndarray, r: int) -> np.ndarray:
    h, w = a.shape
    s = _integral(a)
    y1 = np.clip(np.arange(h) - r, 0, h)
    y2 = np.clip(np.arange(h) + r + 1, 0, h)
    x1 = np.clip(np.arange(w) - r, 0, w)
    x2 = np.clip(np.arange(w) + r + 1, 0, w)
    return s[np.ix_(y2, x2)] - s[np.ix_(y1, x2)] - s[np.ix_(y2, x1)] + s[np.ix_(y1, x1)]


def _cost_volume_numpy(left, right, mask_l, mask_r, r, d_min, d_max, min_count, min_texture):
    h, w = left.shape
    n_d = d_max - d_min + 1
    vol = np.full((n_d, h, w), NO_MATCH, dtype=np.float32)
    ml = mask_l.astype(np.float64)
    lm = left * ml
    llm = left * lm
    for k in range(n_d):
        d = d_min + k
        rs = np.zeros((h, w))
        mrs = np.zeros((h, w))
        lo, hi = max(d, 0), min(w + d, w)
        if hi <= lo:
            continue
        rs[:, lo:hi] = right[:, lo - d : hi - d]
        mrs[:, lo:hi] = mask_r[:, lo - d : hi - d]
        m = ml * mrs
        n = _box_sum_numpy(m, r)
        s_l = _box_sum_numpy(lm * mrs, r)
        s_ll = _box_sum_numpy(llm * mrs, r)
        rm = rs * m
        s_r = _box_sum_numpy(rm, r)
        s_rr = _box_sum_numpy(rs * rm, r)
        s_lr = _box_sum_numpy(left * rm, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            mean_l = s_l / n
            mean_r = s_r / n
            var_l = s_ll / n - mean_l * mean_l
            var_r = s_rr / n - mean_r * mean_r
            cov = s_lr / n - mean_l * mean_r
            ok = (m > 0) & (n >= min_count) & (var_l >= min_texture) & (var_r >= min_texture) & (var_l > 0) & (var_r > 0)
            score = np.clip(cov / np.sqrt(var_l * var_r), -1.0, 1.0)
        vol[k] = np.where(ok, score, NO_MATCH)
    return vol


@njit(parallel=True)
def _cost_volume_numba(left, right, mask_l, mask_r, r, d_min, d_max, min_count, min_texture):
    h, w = left.shape
    n_d = d_max - d_min + 1
    vol = np.full((n_d, h, w), -np.inf, dtype=np.float32)
    integ = np.zeros((6, h + 1, w + 1))
    for k in range(n_d):
        d = d_min + k
        lo = max(d, 0)
        hi = min(w + d, w)
        if hi <= lo:
            continue
        # row prefix sums of the six masked moments
        for y in prange(h):
            acc = np.zeros(6)
            for x in range(w):
                if x >= lo and x < hi and mask_l[y, x] and mask_r[y, x - d]:
                    lv = left[y, x]
                    rv = right[y, x - d]
                    acc[0] += 1.0
                    acc[1] += lv
                    acc[2] += lv * lv
                    acc[3] += rv
                    acc[4] += rv * rv
                    acc[5] += lv * rv
                for q in range(6):
                    integ[q, y + 1, x + 1] = acc[q]
        for x in prange(w):
            for y in range(h):
                for q in range(6):
                    integ[q, y + 1, x + 1] += integ[q, y, x + 1]
        for y in prange(h):
            y1 = max(y - r, 0)
            y2 = min(y + r + 1, h)
            for x in range(lo, hi):
                if not (mask_l[y, x] and mask_r[y, x - d]):
                    continue
                x1 = max(x - r, 0)
                x2 = min(x + r + 1, w)
                s = np.empty(6)
                for q in range(6):
                    s[q] = integ[q, y2, x2] - integ[q, y1, x2] - integ[q, y2, x1] + integ[q, y1, x1]
                n = s[0]
                if n < min_count:
                    continue
                mean_l = s[1] / n
                mean_r = s[3] / n
                var_l = s[2] / n - mean_l * mean_l
                var_r = s[4] / n - mean_r * mean_r
                if var_l < min_texture or var_r < min_texture or var_l <= 0.0 or var_r <= 0.0:
                    continue
                score = (s[5] / n - mean_l * mean_r) / math.sqrt(var_l * var_r)
                vol[k, y, x] = min(1.0, max(-1.0, score))
    return vol


def zncc_cost_volume(left, right, mask_l, mask_r, params: DisparityParams) -> np.ndarray:
    """ZNCC score for every pixel and candidate disparity; ``-inf`` marks no candidate."""
    r = int(params.window_radius)
    min_count = max(1.0, math.ceil(params.min_support * (2 * r + 1) ** 2))
    args = (
        np.ascontiguousarray(left, dtype=np.float64),
        np.ascontiguousarray(right, dtype=np.float64),
        np.ascontiguousarray(mask_l, dtype=np.bool_),
        np.ascontiguousarray(mask_r, dtype=np.bool_),
        r,
        int(params.d_min),
        int(params.d_max),
        float(min_count),
        float(params.min_texture),
    )
    if _accel.backend() == "numba":
        return _cost_volume_numba(*args)
    return _cost_volume_numpy(*args)


def _window_variance(img: np.ndarray, mask: np.ndarray, r: int) -> np.ndarray:
    m = mask.astype(np.float64)
    n = _box_sum_numpy(m, r)
    s = _box_sum_numpy(img * m, r)
    ss = _box_sum_numpy(img * img * m, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = s / n
        var = ss / n - mean * mean
    return np.where(n > 0, var, 0.0)


def _as_gray(img) -> np.ndarray:
    if isinstance(img, RasterImage):
        return img.gray()
    return np.asarray(img, dtype=np.float64)


def compute_disparity(
    left: RasterImage,
    right: RasterImage,
    params: DisparityParams | None = None,
    left_mask: np.ndarray | None = None,
    right_mask: np.ndarray | None = None,
    **overrides,
) -> DisparityMap:
    """Winner-take-all ZNCC block matching with parabolic subpixel refinement.

    A left pixel is kept only if its window variance reaches ``min_texture``,
    its best score beats the best non-adjacent candidate by the uniqueness
    ratio (compared as ``1 - score`` costs), and the right image's own best
    match maps back within ``lr_tolerance`` pixels. Ties go to the smallest
    disparity.
    """
    if params is None:
        params = DisparityParams(**overrides)
    elif overrides:
        params = DisparityParams(**{**params.__dict__, **overrides})
    gl, gr = _as_gray(left), _as_gray(right)
    if gl.shape != gr.shape:
        raise DimensionMismatchError(f"left image is {gl.shape[::-1]}, right image is {gr.shape[::-1]}")
    h, w = gl.shape
    ml = np.ones((h, w), bool) if left_mask is None else np.asarray(left_mask, bool)
    mr = np.ones((h, w), bool) if right_mask is None else np.asarray(right_mask, bool)
    if ml.shape != gl.shape or mr.shape != gr.shape:
        raise DimensionMismatchError("masks must match the image dimensions")

    vol = zncc_cost_volume(gl, gr, ml, mr, params)
    n_d = vol.shape[0]
    r = int(params.window_radius)
    d_min = int(params.d_min)

    best_k = np.argmax(vol, axis=0)
    best = np.take_along_axis(vol, best_k[None], axis=0)[0].astype(np.float64)
    valid = np.isfinite(best) & ml
    valid &= _window_variance(gl, ml, r) >= params.min_texture

    second = np.full((h, w), NO_MATCH)
    for k in range(n_d):
        far = np.abs(best_k - k) > 1
        second = np.where(far & (vol[k] > second), vol[k], second)
    with np.errstate(invalid="ignore"):
        unique = ~np.isfinite(second) | ((1.0 - best) <= params.uniqueness_ratio * (1.0 - second))
    valid &= unique

    # right-to-left best match read from the same volume
    right_best = np.full((h, w), NO_MATCH)
    right_k = np.full((h, w), -1, dtype=np.int64)
    for k in range(n_d):
        d = d_min + k
        shifted = np.full((h, w), NO_MATCH)
        lo, hi = max(-d, 0), min(w - d, w)
        if hi > lo:
            shifted[:, lo:hi] = vol[k][:, lo + d : hi + d]
        better = shifted > right_best
        right_best = np.where(better, shifted, right_best)
        right_k = np.where(better, k, right_k)
    xs = np.broadcast_to(np.arange(w), (h, w))
    xr = xs - (best_k + d_min)
    inside = (xr >= 0) & (xr < w)
    xr_c = np.clip(xr, 0, w - 1)
    back_k = np.take_along_axis(right_k, xr_c, axis=1)
    consistent = inside & (back_k >= 0) & (np.abs(back_k - best_k) <= params.lr_tolerance)
    valid &= consistent

    # three-point parabola on the scores, interior candidates only
    km = np.clip(best_k - 1, 0, n_d - 1)
    kp = np.clip(best_k + 1, 0, n_d - 1)
    s_m = np.take_along_axis(vol, km[None], axis=0)[0].astype(np.float64)
    s_p = np.take_along_axis(vol, kp[None], axis=0)[0].astype(np.float64)
    interior = (best_k > 0) & (best_k < n_d - 1) & np.isfinite(s_m) & np.isfinite(s_p)
    with np.errstate(invalid="ignore", divide="ignore"):
        denom = s_m - 2.0 * best + s_p
        offset = np.where(interior & (denom < 0), 0.5 * (s_m - s_p) / denom, 0.0)
    offset = np.clip(np.nan_to_num(offset), -0.5, 0.5)
    values = best_k + d_min + offset
    return DisparityMap(values, valid, params.d_min, params.d_max)


class LandmarkPair(NamedTuple):
    name: str
    u_l: float
    v_l: float
    u_r: float
    v_r: float


def match_landmarks(path) -> list[LandmarkPair]:
    """Read hand-picked correspondences from a CSV with columns name, u_l, v_l, u_r, v_r."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        missing = {"name", "u_l", "v_l", "u_r", "v_r"} - set(reader.fieldnames or [])
        if missing:
            raise StereoTwinError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rows.append(
                LandmarkPair(row["name"], float(row["u_l"]), float(row["v_l"]), float(row["u_r"]), float(row["v_r"]))
            )
    return rows


def write_landmarks(path, pairs, header: list[str] | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "u_l", "v_l", "u_r", "v_r"])
        for p in pairs:
            writer.writerow([p.name, repr(float(p.u_l)), repr(float(p.v_l)), repr(float(p.u_r)), repr(float(p.v_r))])

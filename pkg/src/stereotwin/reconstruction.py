"""Rectified-stereo triangulation, point clouds and surface meshing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .correspondence import DisparityMap
from .errors import (
    DegenerateConfigurationError,
    InsufficientPointsError,
    NonPositiveDisparityError,
    StereoTwinError,
)
from .geometry import WorldPoint
from .rectification import RectifiedRig, apply_homography

EDGE_THRESHOLD_FACTOR = 5.0
MIN_TRIANGLE_AREA = 1e-12


@dataclass(eq=False)
class PointCloud:
    """``points`` is ``(n, 3)``; ``colors`` ``(n, 3)`` in [0, 1]; ``pixels`` ``(n, 2)`` source pixels."""

    points: np.ndarray
    colors: np.ndarray | None = None
    pixels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise StereoTwinError("point coordinates must be finite")
        n = len(self.points)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != n:
                raise StereoTwinError("colors must match the number of points")
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
            if len(self.pixels) != n:
                raise StereoTwinError("pixels must match the number of points")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), None, np.zeros((0, 2)))

    def transformed(self, fn) -> "PointCloud":
        """Copy with ``fn`` applied to the ``(n, 3)`` coordinates."""
        return PointCloud(fn(self.points), self.colors, self.pixels)

    def subset(self, index) -> "PointCloud":
        idx = np.asarray(index)
        return PointCloud(
            self.points[idx],
            None if self.colors is None else self.colors[idx],
            None if self.pixels is None else self.pixels[idx],
        )


@dataclass(eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise StereoTwinError("triangle index out of range")

    def edge_lengths(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return np.stack(
            [
                np.linalg.norm(v[:, 1] - v[:, 0], axis=1),
                np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
                np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
            ],
            axis=1,
        )

    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def triangulate_rectified(x_l: float, y_l: float, x_r: float, rig: RectifiedRig) -> WorldPoint:
    """Space point from one rectified correspondence, in the rectified left camera frame."""
    disparity = x_l - x_r
    if not disparity > 0:
        raise NonPositiveDisparityError(f"disparity {disparity!r} must be positive")
    b = rig.new_intrinsics
    g, o = rig.baseline_G, rig.focal_O
    return WorldPoint(
        g * o * (x_l - b.u0) / (b.alpha_u * disparity),
        g * o * (y_l - b.v0) / (b.alpha_v * disparity),
        g * o / disparity,
    )


def triangulate_arrays(x_l, y_l, disparity, rig: RectifiedRig) -> np.ndarray:
    """Vectorised triangulation; returns ``(n, 3)``. Disparities must all be positive."""
    x_l = np.asarray(x_l, dtype=np.float64)
    y_l = np.asarray(y_l, dtype=np.float64)
    d = np.asarray(disparity, dtype=np.float64)
    if np.any(~(d > 0)):
        raise NonPositiveDisparityError("all disparities must be positive")
    b = rig.new_intrinsics
    go = rig.baseline_G * rig.focal_O
    return np.column_stack([go * (x_l - b.u0) / (b.alpha_u * d), go * (y_l - b.v0) / (b.alpha_v * d), go / d])


def cloud_from_disparity(dmap: DisparityMap, rig: RectifiedRig, image=None) -> PointCloud:
    """One point per valid pixel with positive disparity.

    ``image`` (a ``RasterImage`` on the same rectified grid) supplies point
    colours when given.
    """
    keep = dmap.valid & (np.nan_to_num(dmap.values, nan=0.0) > 0)
    ys, xs = np.nonzero(keep)
    if len(xs) == 0:
        return PointCloud.empty()
    pts = triangulate_arrays(xs, ys, dmap.values[ys, xs], rig)
    colors = None
    if image is not None:
        s = image.samples[ys, xs]
        colors = np.repeat(s[:, None], 3, axis=1) if s.ndim == 1 else s
    return PointCloud(pts, colors, np.column_stack([xs, ys]).astype(np.float64))


def triangulate_landmarks(pairs, rig: RectifiedRig, rectified: bool = False) -> dict[str, np.ndarray]:
    """Triangulate named pixel pairs; raw-image pairs are first mapped through the rectifying homographies."""
    out = {}
    for p in pairs:
        left = np.array([[p.u_l, p.v_l]])
        right = np.array([[p.u_r, p.v_r]])
        if not rectified:
            left = apply_homography(rig.left_transform, left)
            right = apply_homography(rig.right_transform, right)
        try:
            out[p.name] = np.array(triangulate_rectified(left[0, 0], left[0, 1], right[0, 0], rig))
        except NonPositiveDisparityError as exc:
            raise NonPositiveDisparityError(f"landmark {p.name!r}: {exc}") from None
    return out


def _orient(a, b, c) -> float:
    return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _canonical_cocircular(pts2d: np.ndarray, tris: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Resolve cocircular quadrilaterals to the diagonal with the smallest vertex index pair.

    ``tris`` must be counter-clockwise. Each pass flips a non-overlapping set
    of eligible edges; passes repeat until nothing changes.
    """
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    n = len(pts2d)
    for _ in range(64):
        if len(tris) < 2:
            break
        a = tris.reshape(-1)
        b = np.roll(tris, -1, axis=1).reshape(-1)
        c = np.roll(tris, -2, axis=1).reshape(-1)
        owner = np.repeat(np.arange(len(tris)), 3)
        key = np.minimum(a, b) * n + np.maximum(a, b)
        order = np.argsort(key, kind="stable")
        ks = key[order]
        dup = np.nonzero(ks[1:] == ks[:-1])[0]
        if len(dup) == 0:
            break
        h1, h2 = order[dup], order[dup + 1]
        ea, eb, ec = a[h1], b[h1], c[h1]
        ed = c[h2]
        lo, hi = np.minimum(ec, ed), np.maximum(ec, ed)
        smaller = (lo < np.minimum(ea, eb)) | ((lo == np.minimum(ea, eb)) & (hi < np.maximum(ea, eb)))
        if not smaller.any():
            break
        # incircle determinant of (a, b, c) against d, translated to d
        pa, pb, pc = pts2d[ea] - pts2d[ed], pts2d[eb] - pts2d[ed], pts2d[ec] - pts2d[ed]
        la = (pa**2).sum(1)
        lb = (pb**2).sum(1)
        lc = (pc**2).sum(1)
        det = (
            pa[:, 0] * (pb[:, 1] * lc - lb * pc[:, 1])
            - pa[:, 1] * (pb[:, 0] * lc - lb * pc[:, 0])
            + la * (pb[:, 0] * pc[:, 1] - pb[:, 1] * pc[:, 0])
        )
        scale2 = np.maximum(np.maximum(la, lb), lc)
        eligible = smaller & (np.abs(det) <= rel_tol * scale2 * scale2)
        cand = np.nonzero(eligible)[0]
        if len(cand) == 0:
            break
        cand = cand[np.lexsort((ks[dup][cand],))]
        used = np.zeros(len(tris), dtype=bool)
        flipped = 0
        for i in cand:
            t1, t2 = owner[h1[i]], owner[h2[i]]
            if used[t1] or used[t2]:
                continue
            used[t1] = used[t2] = True
            tris[t1] = (ea[i], ed[i], ec[i])
            tris[t2] = (ed[i], eb[i], ec[i])
            flipped += 1
        if not flipped:
            break
    return tris


def _plane_coordinates(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def mesh_from_cloud(cloud: PointCloud, edge_factor: float = EDGE_THRESHOLD_FACTOR) -> SurfaceMesh:
    """2.5D Delaunay surface over the source pixels (or the dominant plane).

    Triangles with an edge longer than ``edge_factor`` times the median edge
    length are dropped so depth discontinuities are not bridged, as are
    triangles with area below ``1e-12``.
    """
    pts = cloud.points
    if len(pts) < 3:
        raise InsufficientPointsError(f"meshing needs at least 3 points, got {len(pts)}")
    uv = cloud.pixels if cloud.pixels is not None else _plane_coordinates(pts)
    centered = uv - uv.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0 or s[-1] <= 1e-12 * s[0]:
        raise DegenerateConfigurationError("points are collinear in the meshing plane")
    tri = Delaunay(uv)
    simplices = np.array(tri.simplices, dtype=np.int64)
    # orient counter-clockwise in the 2D domain before the tie-break pass
    for t in simplices:
        if _orient(uv[t[0]], uv[t[1]], uv[t[2]]) < 0:
            t[1], t[2] = t[2], t[1]
    simplices = _canonical_cocircular(uv, simplices)
    mesh = SurfaceMesh(pts, simplices)
    if len(simplices) == 0:
        return mesh
    lengths = mesh.edge_lengths()
    threshold = edge_factor * float(np.median(lengths))
    keep = (lengths.max(axis=1) <= threshold) & (mesh.areas() >= MIN_TRIANGLE_AREA)
    kept = simplices[keep]
    # deterministic order: sort by sorted vertex triple
    order = np.lexsort(np.sort(kept, axis=1).T[::-1])
    return SurfaceMesh(pts, kept[order])

"""Synthetic ground truth: board observations and rendered stereo pairs.

Scenes are built from planar rectangles (boxes contribute six). Rendering
samples every pixel centre once, keeps the nearest surface (a z-buffer over
faces) and textures it with seeded value noise attached to the surface, so
both cameras see the same pattern. Ground-truth disparity and points are
evaluated on the rectified left grid directly from the geometry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _accel
from ._accel import njit, prange
from .calibration import PlanarObservation
from .correspondence import DisparityMap, LandmarkPair
from .errors import PointBehindCameraError, StereoTwinError
from .geometry import CameraIntrinsics, CameraPose, StereoRig, compose_pose, project_points, rotation_about
from .rectification import RasterImage, RectifiedRig, compute_rectifying_transforms
from .reconstruction import PointCloud

TEXTURE_NOISE = 0
TEXTURE_CHECKER = 1
LATTICE = 256
_LOW, _HIGH = 0.2, 0.95

# Front Rack ground-truth extents of the capping station, used by the default box scene.
FRONT_RACK_EXTENTS = (29.155, 2.34375, 20.65625)


def _rotation(value) -> np.ndarray:
    r = np.eye(3) if value is None else np.asarray(value, dtype=float).reshape(3, 3)
    return r


@dataclass
class Rectangle:
    """Planar rectangle ``size[0] x size[1]`` centred at ``center``; local x/y follow ``rotation`` columns 0/1."""

    size: tuple[float, float]
    center: Sequence[float] = (0.0, 0.0, 0.0)
    rotation: np.ndarray | None = None
    name: str = "plane"
    texture: int = TEXTURE_NOISE

    def __post_init__(self):
        if min(self.size) <= 0:
            raise StereoTwinError("rectangle size must be positive")

    def faces(self):
        r = _rotation(self.rotation)
        c = np.asarray(self.center, dtype=float)
        eu = r[:, 0] * self.size[0]
        ev = r[:, 1] * self.size[1]
        return [(c - 0.5 * eu - 0.5 * ev, eu, ev, self.texture)]

    def corners(self) -> np.ndarray:
        o, eu, ev, _ = self.faces()[0]
        return np.array([o, o + eu, o + ev, o + eu + ev])

    def to_dict(self) -> dict:
        return {
            "type": "plane",
            "name": self.name,
            "size": [float(x) for x in self.size],
            "center": [float(x) for x in self.center],
            "rotation": [float(x) for x in _rotation(self.rotation).reshape(-1)],
        }


@dataclass
class Box:
    """Axis-aligned (in its own frame) box with extents (L, W, H) along local x, y, z."""

    extents: tuple[float, float, float]
    center: Sequence[float] = (0.0, 0.0, 0.0)
    rotation: np.ndarray | None = None
    name: str = "box"

    def __post_init__(self):
        if min(self.extents) <= 0:
            raise StereoTwinError("box extents must be positive")

    def corners(self) -> np.ndarray:
        r = _rotation(self.rotation)
        half = 0.5 * np.asarray(self.extents, dtype=float)
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return (signs * half) @ r.T + np.asarray(self.center, dtype=float)

    def corner_names(self) -> list[str]:
        return [f"{self.name}:{'-+'[sx > 0]}{'-+'[sy > 0]}{'-+'[sz > 0]}" for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]

    def faces(self):
        """Six faces as ``(origin, edge_u, edge_v, texture)``; edge_u x edge_v is the outward normal."""
        r = _rotation(self.rotation)
        c = np.asarray(self.center, dtype=float)
        ex, ey, ez = (r[:, i] * self.extents[i] for i in range(3))
        out = []
        for axis, (a, b) in enumerate(((ey, ez), (ez, ex), (ex, ey))):
            n = (ex, ey, ez)[axis]
            # +axis face: a x b points along +n
            out.append((c + 0.5 * n - 0.5 * a - 0.5 * b, a, b, TEXTURE_NOISE))
            out.append((c - 0.5 * n - 0.5 * a - 0.5 * b, b, a, TEXTURE_NOISE))
        return out

    def face_corner_ids(self) -> list[list[int]]:
        """Corner indices (into ``corners()``) of each face, in ``faces()`` order."""
        ids = []
        signs = [(sx, sy, sz) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
        for axis in range(3):
            for s in (1, -1):
                ids.append([i for i, sg in enumerate(signs) if sg[axis] == s])
        return ids

    def surface_samples(self, per_edge: int = 16) -> np.ndarray:
        """Points on all six faces, corners included, in world coordinates."""
        t = np.linspace(0.0, 1.0, per_edge)
        pts = []
        for o, eu, ev, _ in self.faces():
            ss, tt = np.meshgrid(t, t)
            pts.append(o + ss.reshape(-1, 1) * eu + tt.reshape(-1, 1) * ev)
        return np.vstack(pts)

    def to_dict(self) -> dict:
        return {
            "type": "box",
            "name": self.name,
            "extents": [float(x) for x in self.extents],
            "center": [float(x) for x in self.center],
            "rotation": [float(x) for x in _rotation(self.rotation).reshape(-1)],
        }


@dataclass
class Board:
    """Calibration board: ``rows x cols`` inner corners spaced ``square`` apart on the board's Z=0 plane."""

    rows: int
    cols: int
    square: float

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise StereoTwinError("board needs at least 2 rows and 2 columns")
        if not self.square > 0:
            raise StereoTwinError("square size must be positive")

    def points(self) -> np.ndarray:
        r, c = np.mgrid[0 : self.rows, 0 : self.cols]
        return np.column_stack([c.reshape(-1) * self.square, r.reshape(-1) * self.square]).astype(float)

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.cols - 1) * self.square / 2, (self.rows - 1) * self.square / 2])

    def as_rectangle(self, pose: CameraPose, name: str = "board") -> Rectangle:
        """Renderable checker rectangle for a board placed by ``pose`` (board -> world)."""
        world_from_board = pose
        r = world_from_board.rotation
        center = r @ np.array([*self.center, 0.0]) + world_from_board.translation
        size = ((self.cols + 1) * self.square, (self.rows + 1) * self.square)
        return Rectangle(size, center, r, name, TEXTURE_CHECKER)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "square": self.square}


def project_board(
    board: Board,
    intrinsics: CameraIntrinsics,
    view_pose: CameraPose,
    *,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    view_id: str = "view",
) -> PlanarObservation:
    """Exact pinhole projections of the board corners, plus optional Gaussian pixel noise."""
    pts = board.points()
    xyz = np.column_stack([pts, np.zeros(len(pts))])
    try:
        image = project_points(intrinsics, view_pose, xyz)
    except PointBehindCameraError as exc:
        raise PointBehindCameraError(f"board view {view_id!r}: {exc}") from None
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        image = image + rng.normal(0.0, noise_sigma, size=image.shape)
    return PlanarObservation(view_id, pts, image)


def default_board_poses(board: Board, n_views: int = 5, distance: float | None = None) -> list[CameraPose]:
    """Board-to-camera poses with distinct tilts, each centred on the optical axis."""
    if distance is None:
        distance = 2.2 * max(board.rows, board.cols) * board.square
    tilts = [(0.0, 0.0, 0.0), (0.45, 0.0, 0.1), (0.0, 0.45, -0.1), (-0.35, 0.3, 0.2), (0.3, -0.4, -0.2)]
    extra = [(0.25 * math.sin(1.7 * i), 0.25 * math.cos(1.3 * i), 0.1 * math.sin(i)) for i in range(5, n_views)]
    poses = []
    offset = np.array([*board.center, 0.0])
    for ax, ay, az in (tilts + extra)[:n_views]:
        r = rotation_about("x", ax) @ rotation_about("y", ay) @ rotation_about("z", az)
        poses.append(CameraPose(r, np.array([0.0, 0.0, distance]) - r @ offset))
    return poses


@dataclass
class SceneSpec:
    """Objects, a stereo rig placed in the world, image size and texture settings."""

    rig: StereoRig
    left_pose: CameraPose
    width: int = 640
    height: int = 480
    objects: list = field(default_factory=list)
    texture_seed: int = 0
    texture_cell: float = 0.25

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise StereoTwinError("image dimensions must be positive")
        if not self.texture_cell > 0:
            raise StereoTwinError("texture cell must be positive")

    @property
    def right_pose(self) -> CameraPose:
        return self.rig.right_pose(self.left_pose)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "texture_seed": self.texture_seed,
            "texture_cell": self.texture_cell,
            "rig": self.rig.to_dict(),
            "left_pose": self.left_pose.to_dict(),
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        objects = []
        for o in d.get("objects", []):
            rot = np.asarray(o.get("rotation", np.eye(3).reshape(-1)), float).reshape(3, 3)
            if o["type"] == "box":
                objects.append(Box(tuple(o["extents"]), tuple(o["center"]), rot, o.get("name", "box")))
            elif o["type"] == "plane":
                objects.append(Rectangle(tuple(o["size"]), tuple(o["center"]), rot, o.get("name", "plane")))
            else:
                raise StereoTwinError(f"unknown scene object type {o['type']!r}")
        return cls(
            StereoRig.from_dict(d["rig"]),
            CameraPose.from_dict(d["left_pose"]),
            int(d.get("width", 640)),
            int(d.get("height", 480)),
            objects,
            int(d.get("texture_seed", 0)),
            float(d.get("texture_cell", 0.25)),
        )


def _scene_faces(objects):
    faces = []
    for obj in objects:
        faces.extend(obj.faces())
    return faces


def _face_arrays(faces, pose: CameraPose):
    """Faces transformed into a camera frame plus their in-plane metric lengths."""
    n = len(faces)
    origins = np.zeros((n, 3))
    eus = np.zeros((n, 3))
    evs = np.zeros((n, 3))
    kinds = np.zeros(n, dtype=np.int64)
    for i, (o, eu, ev, kind) in enumerate(faces):
        origins[i] = pose.rotation @ o + pose.translation
        eus[i] = pose.rotation @ eu
        evs[i] = pose.rotation @ ev
        kinds[i] = kind
    return origins, eus, evs, kinds


def _texture_tables(n_faces: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((max(n_faces, 1), LATTICE, LATTICE))


@njit
def _shade_numba(kind, table, a, b):
    if kind == TEXTURE_CHECKER:
        if (math.floor(a) + math.floor(b)) % 2 == 0:
            return 0.85
        return 0.15
    fa = math.floor(a)
    fb = math.floor(b)
    ta = a - fa
    tb = b - fb
    ia = int(fa) % LATTICE
    ib = int(fb) % LATTICE
    ja = (ia + 1) % LATTICE
    jb = (ib + 1) % LATTICE
    sa = ta * ta * (3.0 - 2.0 * ta)
    sb = tb * tb * (3.0 - 2.0 * tb)
    top = table[ib, ia] * (1.0 - sa) + table[ib, ja] * sa
    bot = table[jb, ia] * (1.0 - sa) + table[jb, ja] * sa
    v = top * (1.0 - sb) + bot * sb
    return _LOW + (_HIGH - _LOW) * v


@njit(parallel=True)
def _render_numba(kinv, width, height, origins, eus, evs, kinds, tables, cell):
    n_faces = origins.shape[0]
    depth = np.full((height, width), np.inf)
    face = np.full((height, width), -1, dtype=np.int64)
    shade = np.zeros((height, width))
    for y in prange(height):
        for x in range(width):
            dx = kinv[0, 0] * x + kinv[0, 1] * y + kinv[0, 2]
            dy = kinv[1, 0] * x + kinv[1, 1] * y + kinv[1, 2]
            dz = kinv[2, 0] * x + kinv[2, 1] * y + kinv[2, 2]
            best = np.inf
            best_f = -1
            best_a = 0.0
            best_b = 0.0
            for f in range(n_faces):
                ox, oy, oz = origins[f, 0], origins[f, 1], origins[f, 2]
                ux, uy, uz = eus[f, 0], eus[f, 1], eus[f, 2]
                vx, vy, vz = evs[f, 0], evs[f, 1], evs[f, 2]
                nx = uy * vz - uz * vy
                ny = uz * vx - ux * vz
                nz = ux * vy - uy * vx
                den = nx * dx + ny * dy + nz * dz
                if den == 0.0:
                    continue
                t = (nx * ox + ny * oy + nz * oz) / den
                if t <= 0.0:
                    continue
                px = t * dx - ox
                py = t * dy - oy
                pz = t * dz - oz
                guu = ux * ux + uy * uy + uz * uz
                gvv = vx * vx + vy * vy + vz * vz
                guv = ux * vx + uy * vy + uz * vz
                ru = px * ux + py * uy + pz * uz
                rv = px * vx + py * vy + pz * vz
                det = guu * gvv - guv * guv
                s = (ru * gvv - rv * guv) / det
                q = (rv * guu - ru * guv) / det
                if s < 0.0 or s > 1.0 or q < 0.0 or q > 1.0:
                    continue
                z = t * dz
                if z < best:
                    best = z
                    best_f = f
                    best_a = s * math.sqrt(guu) / cell
                    best_b = q * math.sqrt(gvv) / cell
            if best_f >= 0:
                depth[y, x] = best
                face[y, x] = best_f
                shade[y, x] = _shade_numba(kinds[best_f], tables[best_f], best_a, best_b)
    return depth, face, shade


def _shade_numpy(kind, table, a, b):
    if kind == TEXTURE_CHECKER:
        return np.where((np.floor(a) + np.floor(b)) % 2 == 0, 0.85, 0.15)
    fa, fb = np.floor(a), np.floor(b)
    ta, tb = a - fa, b - fb
    ia = fa.astype(np.int64) % LATTICE
    ib = fb.astype(np.int64) % LATTICE
    ja, jb = (ia + 1) % LATTICE, (ib + 1) % LATTICE
    sa = ta * ta * (3.0 - 2.0 * ta)
    sb = tb * tb * (3.0 - 2.0 * tb)
    top = table[ib, ia] * (1.0 - sa) + table[ib, ja] * sa
    bot = table[jb, ia] * (1.0 - sa) + table[jb, ja] * sa
    v = top * (1.0 - sb) + bot * sb
    return _LOW + (_HIGH - _LOW) * v


def _render_numpy(kinv, width, height, origins, eus, evs, kinds, tables, cell):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = kinv[0, 0] * xs + kinv[0, 1] * ys + kinv[0, 2]
    dy = kinv[1, 0] * xs + kinv[1, 1] * ys + kinv[1, 2]
    dz = kinv[2, 0] * xs + kinv[2, 1] * ys + kinv[2, 2]
    depth = np.full((height, width), np.inf)
    face = np.full((height, width), -1, dtype=np.int64)
    fa = np.zeros((height, width))
    fb = np.zeros((height, width))
    for f in range(origins.shape[0]):
        ox, oy, oz = origins[f]
        ux, uy, uz = eus[f]
        vx, vy, vz = evs[f]
        nx = uy * vz - uz * vy
        ny = uz * vx - ux * vz
        nz = ux * vy - uy * vx
        den = nx * dx + ny * dy + nz * dz
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (nx * ox + ny * oy + nz * oz) / den
        px = t * dx - ox
        py = t * dy - oy
        pz = t * dz - oz
        guu = ux * ux + uy * uy + uz * uz
        gvv = vx * vx + vy * vy + vz * vz
        guv = ux * vx + uy * vy + uz * vz
        ru = px * ux + py * uy + pz * uz
        rv = px * vx + py * vy + pz * vz
        det = guu * gvv - guv * guv
        s = (ru * gvv - rv * guv) / det
        q = (rv * guu - ru * guv) / det
        z = t * dz
        with np.errstate(invalid="ignore"):
            hit = (den != 0.0) & (t > 0.0) & (s >= 0.0) & (s <= 1.0) & (q >= 0.0) & (q <= 1.0) & (z < depth)
        depth = np.where(hit, z, depth)
        face = np.where(hit, f, face)
        fa = np.where(hit, s * math.sqrt(guu) / cell, fa)
        fb = np.where(hit, q * math.sqrt(gvv) / cell, fb)
    shade = np.zeros((height, width))
    for f in range(origins.shape[0]):
        sel = face == f
        if sel.any():
            shade[sel] = _shade_numpy(kinds[f], tables[f], fa[sel], fb[sel])
    return depth, face, shade


def render_view(faces, intrinsics: CameraIntrinsics, pose: CameraPose, width: int, height: int, tables, cell: float):
    """Depth (camera z, ``inf`` for background), face index and intensity for one camera."""
    origins, eus, evs, kinds = _face_arrays(faces, pose)
    args = (intrinsics.inverse, int(width), int(height), origins, eus, evs, kinds, tables, float(cell))
    if len(faces) == 0:
        return np.full((height, width), np.inf), np.full((height, width), -1, np.int64), np.zeros((height, width))
    if _accel.backend() == "numba":
        return _render_numba(*args)
    return _render_numpy(*args)


@dataclass
class StereoRender:
    left: RasterImage
    right: RasterImage
    disparity: DisparityMap
    cloud: PointCloud
    rectified: RectifiedRig
    left_mask: np.ndarray
    right_mask: np.ndarray
    reference_cloud: PointCloud

    def __iter__(self):
        return iter((self.left, self.right, self.disparity, self.cloud))


def render_stereo_pair(spec: SceneSpec) -> StereoRender:
    """Render both views and the analytic ground truth.

    Images are taken by the raw (possibly verged) cameras. Ground-truth
    disparity and points are evaluated on the rectified left grid and
    expressed in the rectified left camera frame, the frame that
    ``cloud_from_disparity`` produces. ``reference_cloud`` holds analytic
    surface samples of every object in world coordinates.
    """
    faces = _scene_faces(spec.objects)
    tables = _texture_tables(len(faces), spec.texture_seed)
    rig = spec.rig
    _, _, shade_l = render_view(faces, rig.left_intrinsics, spec.left_pose, spec.width, spec.height, tables, spec.texture_cell)
    _, _, shade_r = render_view(faces, rig.right_intrinsics, spec.right_pose, spec.width, spec.height, tables, spec.texture_cell)
    rect = compute_rectifying_transforms(rig)
    rect_pose = compose_pose(spec.left_pose, CameraPose(rect.rotation, np.zeros(3)))
    depth, _, _ = render_view(faces, rect.new_intrinsics, rect_pose, spec.width, spec.height, tables, spec.texture_cell)
    hit = np.isfinite(depth)
    go = rect.baseline_G * rect.focal_O
    disparity = np.where(hit, go / np.where(hit, depth, 1.0), np.nan)
    dmap = DisparityMap(disparity, hit, float(np.nanmin(disparity)) if hit.any() else 0.0, float(np.nanmax(disparity)) if hit.any() else 0.0)
    ys, xs = np.nonzero(hit)
    b = rect.new_intrinsics
    z = depth[ys, xs]
    pts = np.column_stack([z * (xs - b.u0) / b.alpha_u, z * (ys - b.v0) / b.alpha_v, z])
    cloud = PointCloud(pts, None, np.column_stack([xs, ys]).astype(float))
    refs = [o.surface_samples() if isinstance(o, Box) else o.corners() for o in spec.objects]
    reference = PointCloud(np.vstack(refs) if refs else np.zeros((0, 3)))
    left_mask = shade_l > 0
    right_mask = shade_r > 0
    return StereoRender(RasterImage(shade_l), RasterImage(shade_r), dmap, cloud, rect, left_mask, right_mask, reference)


def visible_corners(box: Box, pose: CameraPose) -> list[int]:
    """Indices of box corners on at least one face turned towards the camera."""
    cam = pose.center
    ids = set()
    for (o, eu, ev, _), corner_ids in zip(box.faces(), box.face_corner_ids()):
        normal = np.cross(eu, ev)
        if normal @ (cam - o) > 1e-12:
            ids.update(corner_ids)
    return sorted(ids)


def box_landmarks(spec: SceneSpec, box: Box) -> tuple[list[LandmarkPair], dict[str, np.ndarray]]:
    """Pixel pairs (raw images) and world positions of corners visible in both views."""
    left_ids = set(visible_corners(box, spec.left_pose))
    both = [i for i in visible_corners(box, spec.right_pose) if i in left_ids]
    corners = box.corners()
    names = box.corner_names()
    pl = project_points(spec.rig.left_intrinsics, spec.left_pose, corners[both])
    pr = project_points(spec.rig.right_intrinsics, spec.right_pose, corners[both])
    pairs = [LandmarkPair(names[i], *pl[k], *pr[k]) for k, i in enumerate(both)]
    return pairs, {names[i]: corners[i] for i in both}


def front_rack_scene(width: int = 640, height: int = 480, texture_seed: int = 7) -> SceneSpec:
    """Default box scene: a Front Rack sized box seen by a parallel rig.

    World axes: x along the length, y along the (thin) width, z up. The
    cameras sit in the x-z plane, 45 degrees above the box, with the
    baseline along world y. Depth is then constant along each scanline of
    both visible faces, and depth errors do not leak into the thin W axis.
    A small roll keeps the long silhouette edges off the pixel grid.
    """
    box = Box(FRONT_RACK_EXTENTS, (0.0, 0.0, 0.0), np.eye(3), "Front Rack")
    intr = CameraIntrinsics(600.0, 600.0, 0.0, (width - 1) / 2, (height - 1) / 2)
    elev, roll, dist = math.radians(45.0), math.radians(4.0), 50.0
    center = dist * np.array([math.cos(elev), 0.0, math.sin(elev)])
    up = math.cos(roll) * np.array([-math.sin(elev), 0.0, math.cos(elev)]) + math.sin(roll) * np.array([0.0, 1.0, 0.0])
    pose = CameraPose.look_at(center, [0.0, 0.0, 0.0], up=tuple(up))
    rig = StereoRig(intr, intr, np.eye(3), np.array([-6.0, 0.0, 0.0]))
    return SceneSpec(rig, pose, width, height, [box], texture_seed, 0.2)

"""Pinhole camera model: intrinsics, rigid poses and point projection.

Conventions: rotations are full 3x3 matrices, a pose ``(N, e)`` maps a world
point ``P`` to camera coordinates ``N @ P + e``, pixel centres sit on integer
coordinates, and units are whatever the caller uses (never converted).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import PointBehindCameraError, StereoTwinError

ORTHONORMAL_TOL = 1e-9


class PixelPoint(NamedTuple):
    u: float
    v: float


class WorldPoint(NamedTuple):
    x: float
    y: float
    z: float


def _finite_vector(values, size: int | None = None, name: str = "value") -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise StereoTwinError(f"{name} must have {size} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise StereoTwinError(f"{name} must be finite")
    return arr


def homogenize(p: Sequence[float]) -> np.ndarray:
    """Append a trailing 1 to a pixel or world point."""
    arr = _finite_vector(p, name="point")
    return np.append(arr, 1.0)


def dehomogenize(h: Sequence[float]) -> np.ndarray:
    arr = np.asarray(h, dtype=float).reshape(-1)
    if arr[-1] == 0:
        raise StereoTwinError("cannot dehomogenize a point at infinity")
    if arr[-1] == 1.0:
        return arr[:-1].copy()
    return arr[:-1] / arr[-1]


def skew_symmetric(e: Sequence[float]) -> np.ndarray:
    """Cross-product matrix: ``skew_symmetric(e) @ v == np.cross(e, v)``."""
    x, y, z = _finite_vector(e, 3, "vector")
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Closest proper rotation in Frobenius norm (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def rotation_drift(r: np.ndarray) -> float:
    return max(float(np.max(np.abs(r.T @ r - np.eye(3)))), abs(float(np.linalg.det(r)) - 1.0))


def _checked_rotation(r, name: str = "rotation") -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    if arr.size != 9:
        raise StereoTwinError(f"{name} must be 3x3")
    arr = arr.reshape(3, 3)
    if not np.all(np.isfinite(arr)):
        raise StereoTwinError(f"{name} must be finite")
    if rotation_drift(arr) > ORTHONORMAL_TOL:
        raise StereoTwinError(f"{name} is not a proper orthonormal matrix")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def rotation_about(axis: str, angle: float) -> np.ndarray:
    """Right-handed rotation by ``angle`` radians about the x, y or z axis."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)
    raise ValueError(f"axis must be x, y or z, got {axis!r}")


def rodrigues(rotvec: Sequence[float]) -> np.ndarray:
    """Rotation matrix for an axis-angle vector."""
    w = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(w))
    k = skew_symmetric(w)
    if theta < 1e-12:
        return np.eye(3) + k + 0.5 * k @ k
    return np.eye(3) + np.sin(theta) / theta * k + (1 - np.cos(theta)) / theta**2 * k @ k


@dataclass(frozen=True)
class CameraIntrinsics:
    alpha_u: float
    alpha_v: float
    gamma: float = 0.0
    u0: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        vals = (self.alpha_u, self.alpha_v, self.gamma, self.u0, self.v0)
        if not all(np.isfinite(vals)):
            raise StereoTwinError("intrinsics must be finite")
        if self.alpha_u <= 0 or self.alpha_v <= 0:
            raise StereoTwinError("pixel focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.alpha_u, self.gamma, self.u0], [0.0, self.alpha_v, self.v0], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        au, av, g, u0, v0 = self.alpha_u, self.alpha_v, self.gamma, self.u0, self.v0
        return np.array(
            [
                [1 / au, -g / (au * av), (g * v0 - av * u0) / (au * av)],
                [0.0, 1 / av, -v0 / av],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_matrix(cls, k) -> "CameraIntrinsics":
        k = np.asarray(k, dtype=float)
        k = k / k[2, 2]
        return cls(k[0, 0], k[1, 1], k[0, 1], k[0, 2], k[1, 2])

    def to_dict(self) -> dict:
        return {
            "alpha_u": float(self.alpha_u),
            "alpha_v": float(self.alpha_v),
            "gamma": float(self.gamma),
            "u0": float(self.u0),
            "v0": float(self.v0),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["alpha_u"]), float(d["alpha_v"]), float(d["gamma"]), float(d["u0"]), float(d["v0"]))


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rigid transform ``X_cam = rotation @ X + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(_checked_rotation(self.rotation)))
        object.__setattr__(self, "translation", _frozen(_finite_vector(self.translation, 3, "translation")))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, center, target, up=(0.0, -1.0, 0.0)) -> "CameraPose":
        """Camera at ``center`` whose optical axis points at ``target``.

        ``up`` is the world direction that should appear towards the top of
        the image (image v grows downwards).
        """
        center = np.asarray(center, dtype=float)
        z = np.asarray(target, dtype=float) - center
        z /= np.linalg.norm(z)
        x = np.cross(-np.asarray(up, dtype=float), z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        r = np.vstack([x, y, z])
        return cls(r, -r @ center)

    @property
    def center(self) -> np.ndarray:
        """Optical centre in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def matrix(self) -> np.ndarray:
        """The 3x4 block ``[N | e]``."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def to_dict(self) -> dict:
        return {
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(np.asarray(d["rotation"], dtype=float).reshape(3, 3), np.asarray(d["translation"], dtype=float))


def _pose_from_raw(rotation: np.ndarray, translation: np.ndarray) -> CameraPose:
    if rotation_drift(rotation) > ORTHONORMAL_TOL:
        rotation = nearest_rotation(rotation)
    return CameraPose(rotation, translation)


def compose_pose(a: CameraPose, b: CameraPose) -> CameraPose:
    """Pose mapping world -> frame ``a`` -> frame ``b``.

    ``a`` takes world points into frame A; ``b`` takes frame-A points into
    frame B. The product is re-projected onto SO(3) if round-off pushes it
    past the orthonormality tolerance.
    """
    return _pose_from_raw(b.rotation @ a.rotation, b.rotation @ a.translation + b.translation)


def invert_pose(a: CameraPose) -> CameraPose:
    rt = a.rotation.T
    return _pose_from_raw(rt, -rt @ a.translation)


def project_point(b: CameraIntrinsics, pose: CameraPose, point) -> PixelPoint:
    """Project a world point (3-vector, or homogeneous 4-vector) to pixels.

    Raises
    ------
    PointBehindCameraError
        If the camera-frame depth is not strictly positive.
    """
    p = np.asarray(point, dtype=float).reshape(-1)
    if p.size == 3:
        xc = pose.rotation @ p + pose.translation
        depth = xc[2]
    elif p.size == 4:
        if p[3] == 0:
            raise PointBehindCameraError("point at infinity has no finite projection")
        xc = pose.rotation @ p[:3] + pose.translation * p[3]
        depth = xc[2] / p[3]
    else:
        raise StereoTwinError("world point must have 3 or 4 coordinates")
    if not np.all(np.isfinite(xc)):
        raise StereoTwinError("world point must be finite")
    if not depth > 0:
        raise PointBehindCameraError(f"point depth {depth:.6g} is not in front of the camera")
    scaled = b.matrix @ xc
    return PixelPoint(float(scaled[0] / scaled[2]), float(scaled[1] / scaled[2]))


def project_points(b: CameraIntrinsics, pose: CameraPose, points) -> np.ndarray:
    """Vectorised ``project_point`` for an ``(n, 3)`` array; returns ``(n, 2)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xc = pose.apply(pts)
    if np.any(xc[:, 2] <= 0):
        raise PointBehindCameraError("at least one point is not in front of the camera")
    scaled = xc @ b.matrix.T
    return scaled[:, :2] / scaled[:, 2:3]


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Two cameras and the pose of the right camera relative to the left.

    ``X_right = relative_rotation @ X_left + relative_translation``. A zero
    baseline is accepted here and rejected by the operations that need one.
    """

    left_intrinsics: CameraIntrinsics
    right_intrinsics: CameraIntrinsics
    relative_rotation: np.ndarray
    relative_translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "relative_rotation", _frozen(_checked_rotation(self.relative_rotation, "relative_rotation")))
        object.__setattr__(
            self, "relative_translation", _frozen(_finite_vector(self.relative_translation, 3, "relative_translation"))
        )

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.relative_translation))

    @property
    def relative_pose(self) -> CameraPose:
        return CameraPose(self.relative_rotation, self.relative_translation)

    def right_pose(self, left_pose: CameraPose) -> CameraPose:
        """World-to-right-camera pose given the left camera's world pose."""
        return compose_pose(left_pose, self.relative_pose)

    def to_dict(self) -> dict:
        return {
            "left": self.left_intrinsics.to_dict(),
            "right": self.right_intrinsics.to_dict(),
            "relative_rotation": [float(x) for x in self.relative_rotation.reshape(-1)],
            "relative_translation": [float(x) for x in self.relative_translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StereoRig":
        return cls(
            CameraIntrinsics.from_dict(d["left"]),
            CameraIntrinsics.from_dict(d["right"]),
            np.asarray(d["relative_rotation"], dtype=float).reshape(3, 3),
            np.asarray(d["relative_translation"], dtype=float),
        )


def calibration_to_dict(b: CameraIntrinsics, pose: CameraPose) -> dict:
    """Flat calibration record: the five intrinsics plus row-major rotation and translation."""
    return {**b.to_dict(), **pose.to_dict()}


def calibration_from_dict(d: dict) -> tuple[CameraIntrinsics, CameraPose]:
    return CameraIntrinsics.from_dict(d), CameraPose.from_dict(d)

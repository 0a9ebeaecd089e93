"""Planar-target camera calibration and two-view epipolar geometry.

Intrinsics come from the closed-form absolute-conic solve over per-view
board homographies, optionally polished by Levenberg-Marquardt on the total
squared reprojection error. Stereo relative pose and the fundamental matrix
are built from the per-camera results.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientPointsError,
    InsufficientViewsError,
    SingularTransformError,
    StereoTwinError,
    ZeroBaselineError,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    StereoRig,
    nearest_rotation,
    rodrigues,
    skew_symmetric,
)

log = logging.getLogger(__name__)

MAX_REFINE_ITERATIONS = 100
REFINE_RELATIVE_TOL = 1e-12
_COLLINEAR_TOL = 1e-9


class CalibrationConvergenceWarning(UserWarning):
    pass


@dataclass
class PlanarObservation:
    """Board corners (on the Z=0 plane of the board frame) and their pixels."""

    view_id: str
    board_points: np.ndarray
    image_points: np.ndarray

    def __post_init__(self):
        self.view_id = str(self.view_id)
        self.board_points = np.asarray(self.board_points, dtype=float).reshape(-1, 2)
        self.image_points = np.asarray(self.image_points, dtype=float).reshape(-1, 2)
        if len(self.board_points) != len(self.image_points):
            raise StereoTwinError(f"view {self.view_id}: board and image point counts differ")

    def to_dict(self) -> dict:
        return {
            "view_id": self.view_id,
            "board_points": self.board_points.tolist(),
            "image_points": self.image_points.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlanarObservation":
        return cls(d["view_id"], d["board_points"], d["image_points"])


@dataclass
class CalibrationResult:
    intrinsics: CameraIntrinsics
    view_poses: dict[str, CameraPose]
    rms_reprojection_error: float
    converged: bool = True
    iterations: int = 0
    initial_rms: float | None = None
    history: list = field(default_factory=list, repr=False)


def _is_collinear(points: np.ndarray) -> bool:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0 or s[-1] <= _COLLINEAR_TOL * s[0]


def _normalizing_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    c = points.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(points - c, axis=1))
    s = math.sqrt(2) / mean_dist
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def estimate_homography(board_points, image_points) -> np.ndarray:
    """Normalised DLT homography taking board coordinates to pixels.

    Returns ``H`` scaled to unit Frobenius norm with ``H[2, 2] >= 0``.
    """
    src = np.asarray(board_points, dtype=float).reshape(-1, 2)
    dst = np.asarray(image_points, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise StereoTwinError("point lists differ in length")
    if len(src) < 4:
        raise InsufficientPointsError(f"homography needs at least 4 correspondences, got {len(src)}")
    if _is_collinear(src) or _is_collinear(dst):
        raise DegenerateConfigurationError("correspondences are collinear")

    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    s = src @ t_src[:2, :2].T + t_src[:2, 2]
    d = dst @ t_dst[:2, :2].T + t_dst[:2, 2]

    n = len(s)
    a = np.zeros((2 * n, 9))
    x, y = s[:, 0], s[:, 1]
    u, v = d[:, 0], d[:, 1]
    a[0::2, 0], a[0::2, 1], a[0::2, 2] = -x, -y, -1
    a[0::2, 6], a[0::2, 7], a[0::2, 8] = u * x, u * y, u
    a[1::2, 3], a[1::2, 4], a[1::2, 5] = -x, -y, -1
    a[1::2, 6], a[1::2, 7], a[1::2, 8] = v * x, v * y, v
    _, sv, vt = np.linalg.svd(a)
    second_smallest = sv[-1] if len(sv) < 9 else sv[-2]
    if second_smallest <= 1e-12 * sv[0]:
        raise DegenerateConfigurationError("homography is not uniquely determined")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.solve(t_dst, hn @ t_src)
    return _normalize_homography(h)


def _normalize_homography(h: np.ndarray) -> np.ndarray:
    h = h / np.linalg.norm(h)
    pivot = h[2, 2]
    if pivot == 0:
        pivot = h.flat[np.argmax(np.abs(h))]
    return -h if pivot < 0 else h


def _conic_row(h: np.ndarray, i: int, j: int) -> np.ndarray:
    hi, hj = h[:, i], h[:, j]
    return np.array(
        [
            hi[0] * hj[0],
            hi[0] * hj[1] + hi[1] * hj[0],
            hi[1] * hj[1],
            hi[2] * hj[0] + hi[0] * hj[2],
            hi[2] * hj[1] + hi[1] * hj[2],
            hi[2] * hj[2],
        ]
    )


def intrinsics_from_homographies(homographies: Sequence[np.ndarray], fix_skew: bool = False) -> CameraIntrinsics:
    """Closed-form intrinsics from the image of the absolute conic.

    Each homography contributes two linear constraints on the symmetric
    conic ``B = K^-T K^-1``; ``fix_skew`` adds ``B12 = 0``.
    """
    rows = []
    for h in homographies:
        # column scaling keeps the system well conditioned
        h = h / np.linalg.norm(h[:, :2])
        rows.append(_conic_row(h, 0, 1))
        rows.append(_conic_row(h, 0, 0) - _conic_row(h, 1, 1))
    if fix_skew:
        rows.append(np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
    v = np.asarray(rows)
    _, _, vt = np.linalg.svd(v)
    b11, b12, b22, b13, b23, b33 = vt[-1]
    if b11 < 0:
        b11, b12, b22, b13, b23, b33 = -b11, -b12, -b22, -b13, -b23, -b33
    denom = b11 * b22 - b12 * b12
    if b11 <= 0 or denom <= 0:
        raise DegenerateConfigurationError("conic is not positive definite; views are degenerate")
    v0 = (b12 * b13 - b11 * b23) / denom
    lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 <= 0:
        raise DegenerateConfigurationError("conic is not positive definite; views are degenerate")
    alpha = math.sqrt(lam / b11)
    beta = math.sqrt(lam * b11 / denom)
    gamma = 0.0 if fix_skew else -b12 * alpha * alpha * beta / lam
    u0 = gamma * v0 / beta - b13 * alpha * alpha / lam
    return CameraIntrinsics(alpha, beta, gamma, u0, v0)


def estimate_view_pose(h, b: CameraIntrinsics) -> CameraPose:
    """Board-to-camera pose from a board homography and known intrinsics."""
    h = np.asarray(h, dtype=float).reshape(3, 3)
    if not np.all(np.isfinite(h)):
        raise SingularTransformError("homography is not finite")
    sv = np.linalg.svd(h, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-12 * sv[0]:
        raise SingularTransformError("homography is singular")
    m = b.inverse @ h
    scale = 1.0 / np.linalg.norm(m[:, 0])
    if m[2, 2] * scale < 0:
        scale = -scale
    r1 = scale * m[:, 0]
    r2 = scale * m[:, 1]
    t = scale * m[:, 2]
    r = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return CameraPose(r, t)


def _project_board(k: np.ndarray, rot: np.ndarray, t: np.ndarray, board: np.ndarray) -> np.ndarray:
    xc = board[:, 0:1] * rot[:, 0] + board[:, 1:2] * rot[:, 1] + t
    p = xc @ k.T
    return p[:, :2] / p[:, 2:3]


def _residuals(k, rotations, translations, observations) -> np.ndarray:
    out = []
    for rot, t, obs in zip(rotations, translations, observations):
        out.append((_project_board(k, rot, t, obs.board_points) - obs.image_points).reshape(-1))
    return np.concatenate(out)


def _k_from_params(p: np.ndarray, fix_skew: bool) -> np.ndarray:
    if fix_skew:
        au, av, u0, v0 = p
        g = 0.0
    else:
        au, av, g, u0, v0 = p
    return np.array([[au, g, u0], [0.0, av, v0], [0.0, 0.0, 1.0]])


def _jacobian(k, rotations, translations, observations, fix_skew: bool) -> np.ndarray:
    """Analytic Jacobian; rotations are perturbed on the left: R <- exp([w]x) R."""
    n_intr = 4 if fix_skew else 5
    n_views = len(observations)
    n_res = sum(2 * len(o.board_points) for o in observations)
    jac = np.zeros((n_res, n_intr + 6 * n_views))
    au, g, av = k[0, 0], k[0, 1], k[1, 1]
    row = 0
    for i, (rot, t, obs) in enumerate(zip(rotations, translations, observations)):
        board = obs.board_points
        rx = board[:, 0:1] * rot[:, 0] + board[:, 1:2] * rot[:, 1]
        xc = rx + t
        x, y, z = xc[:, 0], xc[:, 1], xc[:, 2]
        xn, yn = x / z, y / z
        m = len(board)
        ju = np.zeros((m, jac.shape[1]))
        jv = np.zeros((m, jac.shape[1]))
        if fix_skew:
            ju[:, 0], ju[:, 2] = xn, 1.0
            jv[:, 1], jv[:, 3] = yn, 1.0
        else:
            ju[:, 0], ju[:, 2], ju[:, 3] = xn, yn, 1.0
            jv[:, 1], jv[:, 4] = yn, 1.0
        # derivative of the pixel with respect to the camera-frame point
        du = np.column_stack([au / z, g / z, -(au * x + g * y) / (z * z)])
        dv = np.column_stack([np.zeros(m), av / z, -av * y / (z * z)])
        # d(xc)/dw = -[R X]x ; d(xc)/dt = I
        c0 = n_intr + 6 * i
        for ja, da in ((ju, du), (jv, dv)):
            ja[:, c0 + 0] = da[:, 1] * (-rx[:, 2]) + da[:, 2] * rx[:, 1]
            ja[:, c0 + 1] = da[:, 0] * rx[:, 2] + da[:, 2] * (-rx[:, 0])
            ja[:, c0 + 2] = da[:, 0] * (-rx[:, 1]) + da[:, 1] * rx[:, 0]
            ja[:, c0 + 3 : c0 + 6] = da
        jac[row : row + 2 * m : 2] = ju
        jac[row + 1 : row + 2 * m : 2] = jv
        row += 2 * m
    return jac


def refine_calibration(
    intrinsics: CameraIntrinsics,
    poses: Sequence[CameraPose],
    observations: Sequence[PlanarObservation],
    fix_skew: bool = False,
    max_iterations: int = MAX_REFINE_ITERATIONS,
    tol: float = REFINE_RELATIVE_TOL,
):
    """Levenberg-Marquardt on the stacked reprojection residual.

    Only cost-decreasing steps are accepted, so the returned cost never
    exceeds the starting one. Returns ``(intrinsics, poses, cost_history,
    iterations, converged)``.
    """
    p = np.array(
        [intrinsics.alpha_u, intrinsics.alpha_v, intrinsics.u0, intrinsics.v0]
        if fix_skew
        else [intrinsics.alpha_u, intrinsics.alpha_v, intrinsics.gamma, intrinsics.u0, intrinsics.v0]
    )
    n_intr = len(p)
    rotations = [np.array(pose.rotation) for pose in poses]
    translations = [np.array(pose.translation) for pose in poses]
    k = _k_from_params(p, fix_skew)
    r = _residuals(k, rotations, translations, observations)
    cost = float(r @ r)
    history = [cost]
    lam = None
    converged = False
    iterations = 0
    while iterations < max_iterations:
        if cost == 0.0:
            converged = True
            break
        iterations += 1
        jac = _jacobian(k, rotations, translations, observations, fix_skew)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        if lam is None:
            lam = 1e-3 * float(np.max(diag))
        accepted = False
        while lam < 1e16:
            try:
                step = -np.linalg.solve(jtj + lam * np.diag(diag), jtr)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            p_new = p + step[:n_intr]
            if p_new[0] <= 0 or p_new[1] <= 0:
                lam *= 10
                continue
            k_new = _k_from_params(p_new, fix_skew)
            rot_new, t_new = [], []
            for i in range(len(observations)):
                c0 = n_intr + 6 * i
                rot_new.append(nearest_rotation(rodrigues(step[c0 : c0 + 3]) @ rotations[i]))
                t_new.append(translations[i] + step[c0 + 3 : c0 + 6])
            r_new = _residuals(k_new, rot_new, t_new, observations)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent direction left at machine precision
            converged = True
            break
        rel = (cost - cost_new) / cost
        p, k, rotations, translations, r, cost = p_new, k_new, rot_new, t_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10, 1e-12)
        if rel < tol:
            converged = True
            break
    b = CameraIntrinsics.from_matrix(k)
    return b, [CameraPose(rot, t) for rot, t in zip(rotations, translations)], history, iterations, converged


def _rms(k, poses, observations) -> float:
    r = _residuals(k, [p.rotation for p in poses], [p.translation for p in poses], observations)
    return float(np.sqrt(np.mean(r * r) * 2)) if r.size else 0.0


def min_views(fix_skew: bool = False) -> int:
    return 2 if fix_skew else 3


def calibrate_intrinsics(
    observations: Sequence[PlanarObservation],
    refine: bool = True,
    *,
    fix_skew: bool = False,
) -> CalibrationResult:
    """Calibrate one camera from several planar board views.

    The RMS reprojection error is the root mean squared pixel distance
    between observed and reprojected corners over all views.
    """
    observations = list(observations)
    need = min_views(fix_skew)
    if len(observations) < need:
        raise InsufficientViewsError(
            f"{len(observations)} view(s) given; at least {need} needed" + (" with skew fixed" if fix_skew else "")
        )
    ids = [o.view_id for o in observations]
    if len(set(ids)) != len(ids):
        raise StereoTwinError("duplicate view ids")
    homographies = [estimate_homography(o.board_points, o.image_points) for o in observations]
    b0 = intrinsics_from_homographies(homographies, fix_skew=fix_skew)
    poses = [estimate_view_pose(h, b0) for h in homographies]
    rms0 = _rms(b0.matrix, poses, observations)
    result = CalibrationResult(b0, dict(zip(ids, poses)), rms0, converged=True, iterations=0, initial_rms=rms0)
    if not refine:
        return result
    b, poses_r, history, iterations, converged = refine_calibration(b0, poses, observations, fix_skew=fix_skew)
    rms = _rms(b.matrix, poses_r, observations)
    if rms > rms0:
        # polar re-projection of rotations can cost a few ulps; keep the start
        b, poses_r, rms = b0, poses, rms0
    if not converged:
        warnings.warn(
            f"calibration refinement stopped after {iterations} iterations without converging; "
            "returning the best iterate",
            CalibrationConvergenceWarning,
            stacklevel=2,
        )
    log.debug("calibration rms %.3g -> %.3g px in %d iterations", rms0, rms, iterations)
    return CalibrationResult(b, dict(zip(ids, poses_r)), rms, converged, iterations, rms0, history)


def stereo_relative_pose(left: CameraPose, right: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Right-from-left rotation and translation of two cameras sharing a world frame."""
    n_l_inv = left.rotation.T
    n_rl = right.rotation @ n_l_inv
    e_rl = right.translation - n_rl @ left.translation
    return n_rl, e_rl


def rig_from_calibrations(
    left: CalibrationResult, right: CalibrationResult, view_id: str | None = None
) -> StereoRig:
    """Stereo rig from two calibrations that share at least one board view."""
    shared = [v for v in left.view_poses if v in right.view_poses]
    if not shared:
        raise InsufficientViewsError("left and right calibrations share no view id")
    if view_id is None:
        view_id = shared[0]
    elif view_id not in shared:
        raise StereoTwinError(f"view {view_id!r} is not present in both calibrations")
    n_rl, e_rl = stereo_relative_pose(left.view_poses[view_id], right.view_poses[view_id])
    n_rl = nearest_rotation(n_rl)
    return StereoRig(left.intrinsics, right.intrinsics, n_rl, e_rl)


def fundamental_matrix(rig: StereoRig) -> np.ndarray:
    """Fundamental matrix with ``p_r^T F p_l = 0``, unit Frobenius norm."""
    if rig.baseline == 0:
        raise ZeroBaselineError("stereo rig has a zero baseline")
    f = rig.right_intrinsics.inverse.T @ skew_symmetric(rig.relative_translation) @ rig.relative_rotation @ rig.left_intrinsics.inverse
    return f / np.linalg.norm(f)

"""Alignment to a reference frame, dimension measurement and error statistics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    EmptyInputError,
    InsufficientPointsError,
    StereoTwinError,
    UndefinedPercentError,
)
from .geometry import _checked_rotation
from .reconstruction import PointCloud

AXES = ("L", "W", "H")
REPORT_COLUMNS = ("object", "axis", "actual", "measured", "error_percent")


def percent_error(actual: float, measured: float, decimals: int | None = 2) -> float:
    """``|measured - actual| / actual * 100``, rounded to ``decimals`` places.

    A zero reference with a zero measurement scores 0; a zero reference with
    anything else raises ``UndefinedPercentError``.
    """
    actual, measured = float(actual), float(measured)
    if actual < 0 or measured < 0 or not (math.isfinite(actual) and math.isfinite(measured)):
        raise StereoTwinError("lengths must be finite and non-negative")
    if actual == 0:
        if measured == 0:
            return 0.0
        raise UndefinedPercentError(f"percent error undefined for actual=0, measured={measured}")
    value = abs(measured - actual) / actual * 100.0
    return value if decimals is None else round(value, decimals)


@dataclass(frozen=True)
class MeasurementRecord:
    object_name: str
    axis: str
    actual: float
    measured: float
    percent_error: float = field(init=False)

    def __post_init__(self):
        if self.axis not in AXES:
            raise StereoTwinError(f"axis must be one of {AXES}, got {self.axis!r}")
        object.__setattr__(self, "actual", float(self.actual))
        object.__setattr__(self, "measured", float(self.measured))
        object.__setattr__(self, "percent_error", percent_error(self.actual, self.measured))


@dataclass(frozen=True)
class ErrorSummary:
    mean_percent: float
    std_percent: float
    count: int
    per_object_errors: dict[str, dict[str, float]]
    per_object_mean: dict[str, float]


def aggregate_errors(records: Sequence[MeasurementRecord]) -> ErrorSummary:
    """Mean and population standard deviation of the percent errors."""
    records = list(records)
    if not records:
        raise EmptyInputError("no measurement records")
    errs = np.array([r.percent_error for r in records], dtype=np.float64)
    # fsum keeps the statistics independent of record order
    mean = math.fsum(errs) / len(errs)
    std = math.sqrt(math.fsum((errs - mean) ** 2) / len(errs))
    per_object: dict[str, dict[str, float]] = {}
    for r in records:
        per_object.setdefault(r.object_name, {})[r.axis] = r.percent_error
    per_mean = {name: math.fsum(v.values()) / len(v) for name, v in per_object.items()}
    return ErrorSummary(mean, std, len(records), per_object, per_mean)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``x -> scale * rotation @ x + translation``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise StereoTwinError("scale must be positive")
        object.__setattr__(self, "rotation", _checked_rotation(self.rotation))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.scale * pts @ self.rotation.T + self.translation

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    def to_dict(self) -> dict:
        return {
            "scale": float(self.scale),
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityTransform":
        return cls(float(d["scale"]), np.asarray(d["rotation"], float).reshape(3, 3), d["translation"])


def align_similarity(source, target) -> SimilarityTransform:
    """Least-squares similarity taking ``source`` points onto ``target`` (closed form, SVD)."""
    src = np.asarray(source, dtype=float).reshape(-1, 3)
    dst = np.asarray(target, dtype=float).reshape(-1, 3)
    if len(src) != len(dst):
        raise StereoTwinError(f"{len(src)} source points but {len(dst)} target points")
    if len(src) < 3:
        raise InsufficientPointsError(f"alignment needs at least 3 correspondences, got {len(src)}")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cs, cd = src - mu_s, dst - mu_d
    sv_src = np.linalg.svd(cs, compute_uv=False)
    if sv_src[0] == 0 or sv_src[1] <= 1e-9 * sv_src[0]:
        raise DegenerateConfigurationError("source points are collinear")
    n = len(src)
    cov = cd.T @ cs / n
    u, d, vt = np.linalg.svd(cov)
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2] = -1.0
    rot = u @ np.diag(s) @ vt
    var_src = (cs * cs).sum() / n
    scale = float((d * s).sum() / var_src)
    if not scale > 0:
        raise DegenerateConfigurationError("alignment produced a non-positive scale")
    t = mu_d - scale * rot @ mu_s
    return SimilarityTransform(scale, rot, t)


def select_points(cloud: PointCloud, selection) -> np.ndarray:
    """Resolve a component selection to point indices.

    ``selection`` is a list of indices, or a mapping with ``"indices"``, or
    ``"region": [u_min, v_min, u_max, v_max]`` (inclusive, source pixels), or
    ``"all": true``.
    """
    if isinstance(selection, Mapping):
        if selection.get("all"):
            return np.arange(len(cloud))
        if "indices" in selection:
            return select_points(cloud, selection["indices"])
        if "region" in selection:
            if cloud.pixels is None:
                raise StereoTwinError("region selection needs per-point source pixels")
            u0, v0, u1, v1 = (float(x) for x in selection["region"])
            px = cloud.pixels
            inside = (px[:, 0] >= u0) & (px[:, 0] <= u1) & (px[:, 1] >= v0) & (px[:, 1] <= v1)
            return np.nonzero(inside)[0]
        raise StereoTwinError(f"unrecognised selection keys {sorted(selection)}")
    idx = np.asarray(list(selection), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(cloud)):
        raise StereoTwinError("selection index out of range")
    return idx


def measure_dimension(cloud, selection=None) -> tuple[float, float, float]:
    """Axis-aligned extents (L, W, H) of the selected points along x, y, z."""
    if isinstance(cloud, PointCloud):
        idx = np.arange(len(cloud)) if selection is None else select_points(cloud, selection)
        pts = cloud.points[idx]
    else:
        pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
        if selection is not None:
            pts = pts[np.asarray(list(selection), dtype=np.int64)]
    if len(pts) == 0:
        raise EmptyInputError("component selection is empty")
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(ext[0]), float(ext[1]), float(ext[2])


def _meta_lines(meta: Mapping | None) -> list[str]:
    return [f"{k}={meta[k]}" for k in meta] if meta else []


def export_report(records: Sequence[MeasurementRecord], summary: ErrorSummary | None, out_dir, meta=None, stem="report"):
    """Write ``<stem>.csv`` (one row per record, input order) and ``<stem>_summary.json``."""
    records = list(records)
    if not records:
        raise EmptyInputError("no measurement records to export")
    if summary is None:
        summary = aggregate_errors(records)
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}_summary.json"
    meta = dict(meta or {})
    meta.setdefault("std", "population")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", newline="") as fh:
            for line in _meta_lines(meta):
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in records:
                w.writerow([r.object_name, r.axis, repr(r.actual), repr(r.measured), f"{r.percent_error:.2f}"])
        payload = {
            "meta": meta,
            "count": summary.count,
            "mean_percent": summary.mean_percent,
            "std_percent": summary.std_percent,
            "per_object_errors": summary.per_object_errors,
            "per_object_mean": summary.per_object_mean,
        }
        json_path.write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as exc:
        raise StereoTwinError(f"cannot write report to {exc.filename or out_dir}: {exc.strerror}") from exc
    return csv_path, json_path


def _read_csv_rows(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def read_report(path) -> list[MeasurementRecord]:
    rows = _read_csv_rows(path)
    return [MeasurementRecord(r["object"], r["axis"], float(r["actual"]), float(r["measured"])) for r in rows]


def read_ground_truth(path) -> dict[tuple[str, str], float]:
    """CSV with columns object, axis, actual."""
    return {(r["object"], r["axis"]): float(r["actual"]) for r in _read_csv_rows(path)}


def read_measurements(path) -> dict[tuple[str, str], float]:
    """CSV with columns object, axis, measured."""
    return {(r["object"], r["axis"]): float(r["measured"]) for r in _read_csv_rows(path)}


def read_table(path) -> list[MeasurementRecord]:
    """CSV carrying both actual and measured columns (extra columns ignored)."""
    return [MeasurementRecord(r["object"], r["axis"], float(r["actual"]), float(r["measured"])) for r in _read_csv_rows(path)]


def join_records(ground_truth: Mapping, measured: Mapping) -> list[MeasurementRecord]:
    """Pair ground truth with measurements in ground-truth order."""
    missing = [k for k in ground_truth if k not in measured]
    if missing:
        raise StereoTwinError(f"no measurement for {missing[0][0]!r} axis {missing[0][1]}")
    return [MeasurementRecord(obj, axis, ground_truth[(obj, axis)], measured[(obj, axis)]) for obj, axis in ground_truth]


def write_measurements(path, measurements: Iterable[tuple[str, str, float]], meta=None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in _meta_lines(meta):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object", "axis", "measured"])
        for obj, axis, value in measurements:
            w.writerow([obj, axis, repr(float(value))])

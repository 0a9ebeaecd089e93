"""File formats: binary PGM/PPM, disparity grids, PLY/OBJ geometry and JSON.

Writers take an optional ``meta`` mapping that is recorded as comment lines
so outputs are self-describing. Nothing time-dependent is written, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Mapping

import numpy as np

from .calibration import PlanarObservation
from .correspondence import DisparityMap
from .errors import StereoTwinError
from .reconstruction import PointCloud, SurfaceMesh
from .rectification import RasterImage

__all__ = [
    "read_pnm",
    "write_pnm",
    "write_mask",
    "read_mask",
    "write_disparity",
    "read_disparity",
    "write_ply_cloud",
    "read_ply_cloud",
    "write_ply_mesh",
    "write_obj_mesh",
    "read_obj_mesh",
    "read_json",
    "write_json",
    "read_observations",
    "write_observations",
]


def _meta_items(meta: Mapping | None) -> list[str]:
    return [f"{k}={meta[k]}" for k in meta] if meta else []


def _single_line(text: str) -> str:
    return str(text).replace("\n", " ").replace("\r", " ")


# -- images -------------------------------------------------------------------------------


def _to_bytes(samples: np.ndarray) -> np.ndarray:
    return np.round(np.clip(samples, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pnm(path, image: RasterImage | np.ndarray, meta: Mapping | None = None) -> Path:
    """8-bit binary PGM (P5) for gray images, PPM (P6) for RGB; [0, 1] maps linearly to 0..255."""
    samples = image.samples if isinstance(image, RasterImage) else np.asarray(image, dtype=float)
    if samples.ndim == 2:
        magic = b"P5"
    elif samples.ndim == 3 and samples.shape[2] == 3:
        magic = b"P6"
    else:
        raise StereoTwinError(f"cannot store an image of shape {samples.shape} as PNM")
    h, w = samples.shape[:2]
    header = [magic]
    header += [f"# {_single_line(line)}".encode() for line in _meta_items(meta)]
    header.append(f"{w} {h}".encode())
    header.append(b"255")
    path = Path(path)
    path.write_bytes(b"\n".join(header) + b"\n" + _to_bytes(samples).tobytes())
    return path


_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")


def read_pnm(path) -> RasterImage:
    """Read binary P5/P6 files (8 or 16 bit); samples are scaled to [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    tokens = []
    pos = 0
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise StereoTwinError(f"{path}: truncated PNM header")
        tokens.append(m.group(2))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise StereoTwinError(f"{path}: unsupported PNM type {magic.decode(errors='replace')}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise StereoTwinError(f"{path}: malformed PNM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise StereoTwinError(f"{path}: invalid PNM dimensions or maxval")
    pos += 1  # single whitespace byte ends the header
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    count = w * h * channels
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos) if len(data) - pos >= count * dtype.itemsize else None
    if raw is None:
        raise StereoTwinError(f"{path}: truncated PNM pixel data")
    samples = raw.astype(np.float64) / maxval
    shape = (h, w, 3) if channels == 3 else (h, w)
    return RasterImage(samples.reshape(shape))


def write_mask(path, mask: np.ndarray, meta: Mapping | None = None) -> Path:
    """Boolean mask as a PGM with 255 for true."""
    return write_pnm(path, np.asarray(mask, dtype=float), meta)


def read_mask(path) -> np.ndarray:
    img = read_pnm(path)
    samples = img.samples if img.channels == 1 else img.gray()
    return samples >= 0.5


# -- disparity ----------------------------------------------------------------------------


def write_disparity(path, dmap: DisparityMap, meta: Mapping | None = None, mask_path=None) -> tuple[Path, Path]:
    """Text grid of disparities (``nan`` where invalid) plus a validity mask PGM."""
    path = Path(path)
    mask_path = Path(mask_path) if mask_path is not None else path.with_name(path.stem + "_mask.pgm")
    meta = dict(meta or {})
    meta.setdefault("d_min", dmap.d_min)
    meta.setdefault("d_max", dmap.d_max)
    values = np.where(dmap.valid, dmap.values, np.nan)
    with path.open("w") as fh:
        for line in _meta_items(meta):
            fh.write(f"# {_single_line(line)}\n")
        for row in values:
            fh.write(" ".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row))
            fh.write("\n")
    write_mask(mask_path, dmap.valid, meta)
    return path, mask_path


def read_disparity(path, mask_path=None) -> DisparityMap:
    path = Path(path)
    meta = {}
    rows = []
    with path.open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif line.strip():
                rows.append([float(t) for t in line.split()])
    if not rows or len({len(r) for r in rows}) != 1:
        raise StereoTwinError(f"{path}: disparity grid is empty or ragged")
    values = np.array(rows, dtype=np.float64)
    valid = np.isfinite(values)
    if mask_path is not None:
        mask = read_mask(mask_path)
        if mask.shape != values.shape:
            raise StereoTwinError(f"{mask_path}: mask does not match the disparity grid")
        valid &= mask
    d_min = float(meta.get("d_min", np.nanmin(values) if valid.any() else 0.0))
    d_max = float(meta.get("d_max", np.nanmax(values) if valid.any() else 0.0))
    return DisparityMap(values, valid, d_min, d_max)


# -- geometry -----------------------------------------------------------------------------


def _ply_header(n_vertex: int, props: list[str], meta, n_face: int | None = None) -> str:
    lines = ["ply", "format ascii 1.0"]
    lines += [f"comment {_single_line(item)}" for item in _meta_items(meta)]
    lines.append(f"element vertex {n_vertex}")
    lines += props
    if n_face is not None:
        lines.append(f"element face {n_face}")
        lines.append("property list uchar int vertex_indices")
    lines.append("end_header")
    return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return repr(float(v))


def write_ply_cloud(path, cloud: PointCloud, meta: Mapping | None = None) -> Path:
    """ASCII PLY with x, y, z, optional red/green/blue (uchar) and px/py source pixels."""
    props = ["property double x", "property double y", "property double z"]
    has_color = cloud.colors is not None
    has_px = cloud.pixels is not None
    if has_color:
        props += ["property uchar red", "property uchar green", "property uchar blue"]
    if has_px:
        props += ["property double px", "property double py"]
    path = Path(path)
    colors = _to_bytes(cloud.colors) if has_color else None
    with path.open("w") as fh:
        fh.write(_ply_header(len(cloud), props, meta))
        for i, p in enumerate(cloud.points):
            fields = [_fmt(p[0]), _fmt(p[1]), _fmt(p[2])]
            if has_color:
                fields += [str(int(c)) for c in colors[i]]
            if has_px:
                fields += [_fmt(cloud.pixels[i, 0]), _fmt(cloud.pixels[i, 1])]
            fh.write(" ".join(fields) + "\n")
    return path


def _read_ply(path):
    path = Path(path)
    with path.open() as fh:
        if fh.readline().strip() != "ply":
            raise StereoTwinError(f"{path}: not a PLY file")
        elements = []
        for line in fh:
            parts = line.split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format" and parts[1] != "ascii":
                raise StereoTwinError(f"{path}: only ASCII PLY is supported")
            if parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                elements[-1][2].append(parts[-1])
            elif parts[0] == "end_header":
                break
        body = [line.split() for line in fh if line.strip()]
    out = {}
    pos = 0
    for name, count, props in elements:
        rows = body[pos : pos + count]
        if len(rows) != count:
            raise StereoTwinError(f"{path}: expected {count} {name} records, found {len(rows)}")
        out[name] = (props, rows)
        pos += count
    return out


def read_ply_cloud(path) -> PointCloud:
    props, rows = _read_ply(path).get("vertex", ([], []))
    if not rows:
        return PointCloud.empty()
    table = np.array(rows, dtype=np.float64)
    col = {p: i for i, p in enumerate(props)}
    pts = table[:, [col["x"], col["y"], col["z"]]]
    colors = table[:, [col["red"], col["green"], col["blue"]]] / 255.0 if "red" in col else None
    pixels = table[:, [col["px"], col["py"]]] if "px" in col else None
    return PointCloud(pts, colors, pixels)


def write_ply_mesh(path, mesh: SurfaceMesh, meta: Mapping | None = None) -> Path:
    props = ["property double x", "property double y", "property double z"]
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_ply_header(len(mesh.vertices), props, meta, len(mesh.triangles)))
        for p in mesh.vertices:
            fh.write(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    return path


def write_obj_mesh(path, mesh: SurfaceMesh, meta: Mapping | None = None) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for line in _meta_items(meta):
            fh.write(f"# {_single_line(line)}\n")
        for p in mesh.vertices:
            fh.write(f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    return path


def read_obj_mesh(path) -> SurfaceMesh:
    verts, faces = [], []
    with Path(path).open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return SurfaceMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


# -- json ---------------------------------------------------------------------------------


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise StereoTwinError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def read_observations(path) -> list[PlanarObservation]:
    """Accepts a bare list of views or ``{"meta": ..., "views": [...]}``."""
    data = read_json(path)
    views = data["views"] if isinstance(data, dict) else data
    if not isinstance(views, list):
        raise StereoTwinError(f"{path}: expected a list of views")
    return [PlanarObservation.from_dict(v) for v in views]


def write_observations(path, observations, meta: Mapping | None = None) -> Path:
    payload = {"meta": dict(meta or {}), "views": [o.to_dict() for o in observations]}
    return write_json(path, payload)

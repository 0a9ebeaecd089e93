"""Command-line driver: one subcommand per stage plus ``pipeline``.

Exit status is 0 on success, 2 for usage, configuration and missing-file
errors and 1 when a stage fails while processing valid inputs. Every output
file records the tool version and stage parameters, never a timestamp.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .calibration import CalibrationResult, calibrate_intrinsics, rig_from_calibrations
from .correspondence import DisparityParams, compute_disparity, match_landmarks, write_landmarks
from .errors import StereoTwinError
from .evaluation import (
    AXES,
    aggregate_errors,
    align_similarity,
    export_report,
    join_records,
    measure_dimension,
    read_ground_truth,
    read_measurements,
    read_table,
    write_measurements,
)
from .geometry import CameraPose, StereoRig, calibration_from_dict, calibration_to_dict
from .rectification import RectifiedRig, compute_rectifying_transforms, warp_image
from .reconstruction import cloud_from_disparity, mesh_from_cloud, triangulate_landmarks
from . import synthetic

log = logging.getLogger("stereotwin")

EXIT_OK, EXIT_PROCESSING, EXIT_USAGE = 0, 1, 2
DEFAULT_MASK_THRESHOLD = 0.05


class CliError(Exception):
    def __init__(self, code: int, stage: str, message: str):
        super().__init__(message)
        self.code = code
        self.stage = stage


def _usage(stage: str, message: str) -> CliError:
    return CliError(EXIT_USAGE, stage, message)


def _need(stage: str, path) -> Path:
    if path is None:
        raise _usage(stage, "missing required input path")
    p = Path(path)
    if not p.is_file():
        raise _usage(stage, f"input file not found: {p}")
    return p


def _meta(stage: str, **params) -> dict:
    meta = {"tool": "stereotwin", "version": __version__, "stage": stage}
    meta.update({k: v for k, v in params.items() if v is not None})
    return meta


def _out(out_dir, name: str) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


# -- stage implementations (shared by subcommands and the pipeline) ---------------------------


def stage_calibrate(observations, output, refine=True, fix_skew=False) -> Path:
    obs = sio.read_observations(_need("calibrate", observations))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = calibrate_intrinsics(obs, refine=refine, fix_skew=fix_skew)
    first = next(iter(result.view_poses.values()))
    payload = {
        "meta": _meta("calibrate", observations=Path(observations).name, refine=refine, fix_skew=fix_skew),
        **calibration_to_dict(result.intrinsics, first),
        "rms_reprojection_error": result.rms_reprojection_error,
        "converged": result.converged,
        "iterations": result.iterations,
        "views": {k: p.to_dict() for k, p in result.view_poses.items()},
    }
    log.info("calibrate: rms %.3g px over %d views", result.rms_reprojection_error, len(obs))
    return sio.write_json(output, payload)


def _load_calibration(path) -> CalibrationResult:
    d = sio.read_json(path)
    b, _ = calibration_from_dict(d)
    views = {k: CameraPose.from_dict(v) for k, v in d.get("views", {}).items()}
    return CalibrationResult(b, views, float(d.get("rms_reprojection_error", 0.0)))


def stage_stereo_pose(left, right, output, view_id=None) -> Path:
    lc = _load_calibration(_need("stereo-pose", left))
    rc = _load_calibration(_need("stereo-pose", right))
    rig = rig_from_calibrations(lc, rc, view_id)
    payload = {"meta": _meta("stereo-pose", view=view_id), **rig.to_dict()}
    return sio.write_json(output, payload)


def stage_rectify(rig_path, left, right, out_dir) -> dict:
    rig = StereoRig.from_dict(sio.read_json(_need("rectify", rig_path)))
    img_l = sio.read_pnm(_need("rectify", left))
    img_r = sio.read_pnm(_need("rectify", right))
    rect = compute_rectifying_transforms(rig)
    wl, vl = warp_image(img_l, rect.left_transform)
    wr, vr = warp_image(img_r, rect.right_transform)
    meta = _meta("rectify", baseline_G=rect.baseline_G, focal_O=rect.focal_O)
    paths = {
        "rectified": sio.write_json(_out(out_dir, "rectified.json"), {"meta": meta, **rect.to_dict()}),
        "left": sio.write_pnm(_out(out_dir, "left_rect.pgm" if wl.channels == 1 else "left_rect.ppm"), wl, meta),
        "right": sio.write_pnm(_out(out_dir, "right_rect.pgm" if wr.channels == 1 else "right_rect.ppm"), wr, meta),
        "left_valid": sio.write_mask(_out(out_dir, "left_valid.pgm"), vl, meta),
        "right_valid": sio.write_mask(_out(out_dir, "right_valid.pgm"), vr, meta),
    }
    return paths


def _foreground(img, valid, threshold):
    g = img.gray()
    mask = g > threshold if threshold is not None else np.ones(g.shape, bool)
    return mask if valid is None else mask & valid


def stage_disparity(left, right, output, params: DisparityParams, left_mask=None, right_mask=None, mask_threshold=None):
    img_l = sio.read_pnm(_need("disparity", left))
    img_r = sio.read_pnm(_need("disparity", right))
    ml = sio.read_mask(_need("disparity", left_mask)) if left_mask else None
    mr = sio.read_mask(_need("disparity", right_mask)) if right_mask else None
    ml = _foreground(img_l, ml, mask_threshold)
    mr = _foreground(img_r, mr, mask_threshold)
    dmap = compute_disparity(img_l, img_r, params, left_mask=ml, right_mask=mr)
    meta = _meta(
        "disparity",
        window_radius=params.window_radius,
        d_min=params.d_min,
        d_max=params.d_max,
        min_texture=params.min_texture,
        uniqueness_ratio=params.uniqueness_ratio,
        lr_tolerance=params.lr_tolerance,
        min_support=params.min_support,
        mask_threshold=mask_threshold,
    )
    log.info("disparity: %d valid pixels", int(dmap.valid.sum()))
    return sio.write_disparity(output, dmap, meta)


def stage_reconstruct(disparity, rectified, out_dir, image=None, landmarks=None) -> dict:
    dmap = sio.read_disparity(_need("reconstruct", disparity))
    rect = RectifiedRig.from_dict(sio.read_json(_need("reconstruct", rectified)))
    img = sio.read_pnm(_need("reconstruct", image)) if image else None
    cloud = cloud_from_disparity(dmap, rect, img)
    meta = _meta("reconstruct", points=len(cloud))
    paths = {"cloud": sio.write_ply_cloud(_out(out_dir, "cloud.ply"), cloud, meta)}
    if landmarks:
        pts = triangulate_landmarks(match_landmarks(_need("reconstruct", landmarks)), rect)
        payload = {"meta": _meta("reconstruct"), "points": {k: [float(x) for x in v] for k, v in pts.items()}}
        paths["landmarks"] = sio.write_json(_out(out_dir, "landmarks_3d.json"), payload)
    log.info("reconstruct: %d points", len(cloud))
    return paths


def stage_mesh(cloud_path, output, edge_factor=5.0) -> Path:
    cloud = sio.read_ply_cloud(_need("mesh", cloud_path))
    mesh = mesh_from_cloud(cloud, edge_factor)
    meta = _meta("mesh", edge_factor=edge_factor, triangles=len(mesh.triangles))
    output = Path(output)
    if output.suffix.lower() == ".obj":
        return sio.write_obj_mesh(output, mesh, meta)
    return sio.write_ply_mesh(output, mesh, meta)


def _landmark_points(path) -> dict:
    d = sio.read_json(path)
    pts = d.get("points", d) if isinstance(d, dict) else None
    if not isinstance(pts, dict):
        raise StereoTwinError(f"{path}: expected a mapping of landmark name to [x, y, z]")
    return {k: np.asarray(v, dtype=float) for k, v in pts.items() if k != "meta"}


def stage_align(cloud_path, source, target, out_dir) -> dict:
    cloud = sio.read_ply_cloud(_need("align", cloud_path))
    src = _landmark_points(_need("align", source))
    dst = _landmark_points(_need("align", target))
    names = [n for n in dst if n in src]
    sim = align_similarity([src[n] for n in names], [dst[n] for n in names])
    residual = np.linalg.norm(sim.apply(np.array([src[n] for n in names])) - np.array([dst[n] for n in names]), axis=1)
    meta = _meta("align", landmarks=len(names), rms_residual=float(np.sqrt(np.mean(residual**2))))
    paths = {
        "transform": sio.write_json(_out(out_dir, "transform.json"), {"meta": meta, **sim.to_dict()}),
        "cloud": sio.write_ply_cloud(_out(out_dir, "aligned.ply"), cloud.transformed(sim.apply), meta),
    }
    log.info("align: %d landmarks, scale %.6g", len(names), sim.scale)
    return paths


def stage_measure(cloud_path, selection, output) -> Path:
    cloud = sio.read_ply_cloud(_need("measure", cloud_path))
    sel = sio.read_json(_need("measure", selection))
    if not isinstance(sel, dict) or not sel:
        raise StereoTwinError(f"{selection}: expected a mapping of object name to selection")
    rows = []
    for name, spec in sel.items():
        if name == "meta":
            continue
        dims = measure_dimension(cloud, spec)
        rows += [(name, axis, value) for axis, value in zip(AXES, dims)]
    write_measurements(output, rows, _meta("measure", objects=len(rows) // 3))
    return Path(output)


def reference_tables_path() -> Path:
    return Path(str(resources.files("stereotwin") / "data" / "capping_station.csv"))


def stage_report(out_dir, ground_truth=None, measurements=None, table=None, stem="report") -> tuple[Path, Path]:
    if table:
        records = read_table(_need("report", table))
        source = Path(table).name
    else:
        gt = read_ground_truth(_need("report", ground_truth))
        meas = read_measurements(_need("report", measurements))
        records = join_records(gt, meas)
        source = Path(measurements).name
    summary = aggregate_errors(records)
    meta = _meta("report", source=source, count=summary.count)
    paths = export_report(records, summary, out_dir, meta, stem)
    log.info("report: mean %.2f%% std %.2f%% over %d cells", summary.mean_percent, summary.std_percent, summary.count)
    return paths


def stage_synth(out_dir, scene=None, seed=None, noise=0.0, views=5) -> dict:
    """Render a scene and write every input the pipeline needs, plus the ground truth."""
    spec = synthetic.SceneSpec.from_dict(sio.read_json(_need("synth", scene))) if scene else synthetic.front_rack_scene()
    if seed is not None:
        spec.texture_seed = int(seed)
    render = synthetic.render_stereo_pair(spec)
    meta = _meta("synth", texture_seed=spec.texture_seed, width=spec.width, height=spec.height)
    out = Path(out_dir)
    paths = {"scene": sio.write_json(_out(out, "scene.json"), {"meta": meta, **spec.to_dict()})}
    paths["left"] = sio.write_pnm(_out(out, "left.pgm"), render.left, meta)
    paths["right"] = sio.write_pnm(_out(out, "right.pgm"), render.right, meta)
    paths["gt_disparity"] = sio.write_disparity(_out(out, "gt_disparity.txt"), render.disparity, meta)[0]
    paths["gt_cloud"] = sio.write_ply_cloud(_out(out, "gt_cloud.ply"), render.cloud, meta)
    paths["rig"] = sio.write_json(_out(out, "rig.json"), {"meta": meta, **spec.rig.to_dict()})

    # board views for both cameras, posed in the left camera frame
    board = synthetic.Board(7, 9, 2.0)
    obs_l, obs_r = [], []
    for i, pose in enumerate(synthetic.default_board_poses(board, views)):
        vid = f"view{i:02d}"
        base = 0 if seed is None else int(seed) * 1000
        s_l, s_r = base + 2 * i, base + 2 * i + 1
        obs_l.append(synthetic.project_board(board, spec.rig.left_intrinsics, pose, noise_sigma=noise, seed=s_l, view_id=vid))
        right_pose = spec.rig.right_pose(pose)
        obs_r.append(synthetic.project_board(board, spec.rig.right_intrinsics, right_pose, noise_sigma=noise, seed=s_r, view_id=vid))
    obs_meta = {**meta, "board": board.to_dict(), "noise_sigma": noise}
    paths["left_observations"] = sio.write_observations(_out(out, "observations_left.json"), obs_l, obs_meta)
    paths["right_observations"] = sio.write_observations(_out(out, "observations_right.json"), obs_r, obs_meta)

    pairs, world = [], {}
    gt_rows = []
    selection = {}
    hit = render.disparity.valid
    for obj in spec.objects:
        if isinstance(obj, synthetic.Box):
            p, w = synthetic.box_landmarks(spec, obj)
            pairs += p
            world.update(w)
            gt_rows += [(obj.name, axis, value) for axis, value in zip(AXES, obj.extents)]
    write_landmarks(_out(out, "landmarks.csv"), pairs, [f"{k}={v}" for k, v in meta.items()])
    paths["landmarks"] = out / "landmarks.csv"
    paths["reference_landmarks"] = sio.write_json(
        _out(out, "reference_landmarks.json"), {"meta": meta, "points": {k: [float(x) for x in v] for k, v in world.items()}}
    )
    with _out(out, "ground_truth.csv").open("w") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        fh.write("object,axis,actual\n")
        for name, axis, value in gt_rows:
            fh.write(f"{name},{axis},{value!r}\n")
    paths["ground_truth"] = out / "ground_truth.csv"
    if hit.any():
        ys, xs = np.nonzero(hit)
        region = [int(xs.min()) - 2, int(ys.min()) - 2, int(xs.max()) + 2, int(ys.max()) + 2]
        for obj in spec.objects:
            if isinstance(obj, synthetic.Box):
                selection[obj.name] = {"region": region}
    paths["selection"] = sio.write_json(_out(out, "selection.json"), selection)

    d = render.disparity.values[hit]
    d_min = int(math.floor(d.min())) - 4 if d.size else 0
    d_max = int(math.ceil(d.max())) + 4 if d.size else 64
    config = {
        "left_image": "left.pgm",
        "right_image": "right.pgm",
        "left_observations": "observations_left.json",
        "right_observations": "observations_right.json",
        "landmarks": "landmarks.csv",
        "reference_landmarks": "reference_landmarks.json",
        "ground_truth": "ground_truth.csv",
        "selection": "selection.json",
        "out_dir": "run",
        "refine": True,
        "mask_threshold": DEFAULT_MASK_THRESHOLD,
        "mesh": True,
        "disparity": {"d_min": max(d_min, 0), "d_max": d_max, "window_radius": 4},
    }
    paths["config"] = sio.write_json(_out(out, "pipeline.json"), config)
    log.info("synth: %d foreground pixels, disparity %s..%s", int(hit.sum()), config["disparity"]["d_min"], d_max)
    return paths


# -- pipeline ----------------------------------------------------------------------------------

_PIPELINE_PATHS = (
    "left_image",
    "right_image",
    "left_observations",
    "right_observations",
    "rig",
    "landmarks",
    "reference_landmarks",
    "ground_truth",
    "selection",
)


@dataclass
class PipelineConfig:
    left_image: Path
    right_image: Path
    landmarks: Path
    reference_landmarks: Path
    ground_truth: Path
    selection: Path
    out_dir: Path
    disparity: DisparityParams
    left_observations: Path | None = None
    right_observations: Path | None = None
    rig: Path | None = None
    refine: bool = True
    mask_threshold: float | None = DEFAULT_MASK_THRESHOLD
    mesh: bool = True
    edge_factor: float = 5.0

    @classmethod
    def load(cls, path, out_dir=None) -> "PipelineConfig":
        path = _need("pipeline", path)
        raw = sio.read_json(path)
        if not isinstance(raw, dict):
            raise _usage("pipeline", f"{path}: config must be a JSON object")
        base = path.parent
        known = set(_PIPELINE_PATHS) | {"out_dir", "disparity", "refine", "mask_threshold", "mesh", "edge_factor"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise _usage("pipeline", f"{path}: unknown config keys {unknown}")
        kw = {}
        for key in _PIPELINE_PATHS:
            if raw.get(key) is not None:
                kw[key] = base / raw[key]
        for key in ("left_image", "right_image", "landmarks", "reference_landmarks", "ground_truth", "selection"):
            if key not in kw:
                raise _usage("pipeline", f"{path}: missing required key {key!r}")
        if "rig" not in kw and not ("left_observations" in kw and "right_observations" in kw):
            raise _usage("pipeline", f"{path}: give either 'rig' or both observation files")
        for key, p in kw.items():
            _need("pipeline", p)
        try:
            params = DisparityParams(**raw.get("disparity", {}))
        except (TypeError, StereoTwinError) as exc:
            raise _usage("pipeline", f"{path}: bad disparity parameters: {exc}") from None
        threshold = raw.get("mask_threshold", DEFAULT_MASK_THRESHOLD)
        if threshold is not None and not 0 <= float(threshold) < 1:
            raise _usage("pipeline", f"{path}: mask_threshold must lie in [0, 1)")
        edge_factor = float(raw.get("edge_factor", 5.0))
        if not edge_factor > 0:
            raise _usage("pipeline", f"{path}: edge_factor must be positive")
        out = Path(out_dir) if out_dir is not None else base / raw.get("out_dir", "run")
        return cls(
            out_dir=out,
            disparity=params,
            refine=bool(raw.get("refine", True)),
            mask_threshold=None if threshold is None else float(threshold),
            mesh=bool(raw.get("mesh", True)),
            edge_factor=edge_factor,
            **kw,
        )


def run_pipeline(cfg: PipelineConfig) -> dict:
    out = cfg.out_dir
    paths = {}
    if cfg.rig is not None:
        rig_path = cfg.rig
    else:
        paths["left_calibration"] = stage_calibrate(cfg.left_observations, _out(out, "calibration_left.json"), cfg.refine)
        paths["right_calibration"] = stage_calibrate(cfg.right_observations, _out(out, "calibration_right.json"), cfg.refine)
        rig_path = stage_stereo_pose(paths["left_calibration"], paths["right_calibration"], _out(out, "rig.json"))
    paths["rig"] = rig_path
    rect = stage_rectify(rig_path, cfg.left_image, cfg.right_image, out)
    paths.update({f"rect_{k}": v for k, v in rect.items()})
    disp, _ = stage_disparity(
        rect["left"], rect["right"], _out(out, "disparity.txt"), cfg.disparity,
        rect["left_valid"], rect["right_valid"], cfg.mask_threshold,
    )
    paths["disparity"] = disp
    recon = stage_reconstruct(disp, rect["rectified"], out, rect["left"], cfg.landmarks)
    paths.update(recon)
    if cfg.mesh:
        paths["mesh"] = stage_mesh(recon["cloud"], _out(out, "mesh.ply"), cfg.edge_factor)
    aligned = stage_align(recon["cloud"], recon["landmarks"], cfg.reference_landmarks, out)
    paths["aligned"] = aligned["cloud"]
    paths["measurements"] = stage_measure(aligned["cloud"], cfg.selection, _out(out, "measurements.csv"))
    paths["report"], paths["summary"] = stage_report(out, cfg.ground_truth, paths["measurements"])
    return paths


# -- argument parsing ------------------------------------------------------------------------


def _add_globals(p: argparse.ArgumentParser, top: bool) -> None:
    default = None if top else argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=default, help="seed for every random draw")
    p.add_argument("--out-dir", default=default, help="directory for outputs")
    p.add_argument("--quiet", action="store_true", default=False if top else argparse.SUPPRESS, help="no progress log")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereotwin", description="Stereo photogrammetry and dimensional accuracy toolkit.")
    parser.add_argument("--version", action="version", version=f"stereotwin {__version__}")
    _add_globals(parser, True)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, False)
        return p

    p = cmd("calibrate", "intrinsics and per-view poses from board observations")
    p.add_argument("observations")
    p.add_argument("-o", "--output", default="calibration.json")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--fix-skew", action="store_true")

    p = cmd("stereo-pose", "relative pose of two calibrated cameras")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("-o", "--output", default="rig.json")
    p.add_argument("--view", help="shared view id to use (default: first shared)")

    p = cmd("rectify", "rectifying transforms and warped images")
    p.add_argument("rig")
    p.add_argument("left")
    p.add_argument("right")

    p = cmd("disparity", "dense ZNCC disparity on a rectified pair")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("-o", "--output", default="disparity.txt")
    p.add_argument("--d-min", type=int, default=0)
    p.add_argument("--d-max", type=int, default=64)
    p.add_argument("--window-radius", type=int, default=4)
    p.add_argument("--min-texture", type=float, default=1e-4)
    p.add_argument("--uniqueness", type=float, default=0.9)
    p.add_argument("--lr-tolerance", type=float, default=1.0)
    p.add_argument("--min-support", type=float, default=0.25)
    p.add_argument("--left-mask")
    p.add_argument("--right-mask")
    p.add_argument("--mask-threshold", type=float, help="treat pixels at or below this intensity as background")

    p = cmd("reconstruct", "point cloud (and landmarks) from a disparity map")
    p.add_argument("disparity")
    p.add_argument("rectified")
    p.add_argument("--image", help="rectified left image for point colours")
    p.add_argument("--landmarks", help="raw-image landmark pairs CSV")

    p = cmd("mesh", "surface mesh from a point cloud")
    p.add_argument("cloud")
    p.add_argument("-o", "--output", default="mesh.ply", help=".ply or .obj")
    p.add_argument("--edge-factor", type=float, default=5.0)

    p = cmd("align", "similarity alignment of a cloud to reference landmarks")
    p.add_argument("cloud")
    p.add_argument("source", help="reconstructed landmarks JSON")
    p.add_argument("target", help="reference landmarks JSON")

    p = cmd("measure", "bounding-box dimensions of selected components")
    p.add_argument("cloud")
    p.add_argument("selection")
    p.add_argument("-o", "--output", default="measurements.csv")

    p = cmd("report", "percent errors and summary statistics")
    p.add_argument("--ground-truth")
    p.add_argument("--measurements")
    p.add_argument("--table", help="CSV with object, axis, actual, measured columns")
    p.add_argument("--reference-tables", action="store_true", help="use the bundled capping-station tables")
    p.add_argument("--stem", default="report")

    p = cmd("synth", "render a synthetic scene and its ground truth")
    p.add_argument("--scene", help="SceneSpec JSON (default: Front Rack box)")
    p.add_argument("--noise", type=float, default=0.0, help="pixel noise on board observations")
    p.add_argument("--views", type=int, default=5)

    p = cmd("pipeline", "run every stage from a JSON config")
    p.add_argument("config")
    return parser


def _resolve(out_dir, name) -> Path:
    return Path(name) if out_dir is None or Path(name).is_absolute() or Path(name).parent != Path(".") else Path(out_dir) / name


def _dispatch(args) -> None:
    c = args.command
    out_dir = args.out_dir
    here = Path(out_dir) if out_dir else Path(".")
    if c == "calibrate":
        target = _resolve(out_dir, args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        stage_calibrate(args.observations, target, not args.no_refine, args.fix_skew)
    elif c == "stereo-pose":
        target = _resolve(out_dir, args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        stage_stereo_pose(args.left, args.right, target, args.view)
    elif c == "rectify":
        stage_rectify(args.rig, args.left, args.right, here)
    elif c == "disparity":
        if args.window_radius < 0:
            raise _usage(c, "--window-radius must be non-negative")
        if args.mask_threshold is not None and not 0 <= args.mask_threshold < 1:
            raise _usage(c, "--mask-threshold must lie in [0, 1)")
        try:
            params = DisparityParams(
                window_radius=args.window_radius,
                d_min=args.d_min,
                d_max=args.d_max,
                min_texture=args.min_texture,
                uniqueness_ratio=args.uniqueness,
                lr_tolerance=args.lr_tolerance,
                min_support=args.min_support,
            )
        except StereoTwinError as exc:
            raise _usage(c, str(exc)) from None
        target = _resolve(out_dir, args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        stage_disparity(args.left, args.right, target, params, args.left_mask, args.right_mask, args.mask_threshold)
    elif c == "reconstruct":
        stage_reconstruct(args.disparity, args.rectified, here, args.image, args.landmarks)
    elif c == "mesh":
        if not args.edge_factor > 0:
            raise _usage(c, "--edge-factor must be positive")
        target = _resolve(out_dir, args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        stage_mesh(args.cloud, target, args.edge_factor)
    elif c == "align":
        stage_align(args.cloud, args.source, args.target, here)
    elif c == "measure":
        target = _resolve(out_dir, args.output)
        target.parent.mkdir(parents=True, exist_ok=True)
        stage_measure(args.cloud, args.selection, target)
    elif c == "report":
        if args.reference_tables:
            stage_report(here, table=reference_tables_path(), stem=args.stem)
        elif args.table:
            stage_report(here, table=args.table, stem=args.stem)
        elif args.ground_truth and args.measurements:
            stage_report(here, args.ground_truth, args.measurements, stem=args.stem)
        else:
            raise _usage(c, "give --table, --reference-tables, or both --ground-truth and --measurements")
    elif c == "synth":
        if args.noise < 0:
            raise _usage(c, "--noise must be non-negative")
        if args.views < 3:
            raise _usage(c, "--views must be at least 3")
        stage_synth(here, args.scene, args.seed, args.noise, args.views)
    elif c == "pipeline":
        cfg = PipelineConfig.load(args.config, out_dir)
        paths = run_pipeline(cfg)
        log.info("pipeline: report written to %s", paths["report"])


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        _dispatch(args)
    except CliError as exc:
        print(f"stereotwin {exc.stage}: error: {exc}", file=sys.stderr)
        return exc.code
    except StereoTwinError as exc:
        print(f"stereotwin {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PROCESSING
    except OSError as exc:
        print(f"stereotwin {args.command}: error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return EXIT_PROCESSING
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

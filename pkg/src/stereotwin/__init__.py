"""Stereo photogrammetry: calibration, rectification, dense matching,
triangulation and dimensional accuracy scoring against ground truth."""

__version__ = "0.1.0"

from .errors import StereoTwinError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    PixelPoint,
    StereoRig,
    WorldPoint,
    homogenize,
    project_point,
    skew_symmetric,
)
from .calibration import PlanarObservation, calibrate_intrinsics, fundamental_matrix, stereo_relative_pose
from .rectification import RasterImage, RectifiedRig, compute_rectifying_transforms, warp_image
from .correspondence import DisparityMap, DisparityParams, compute_disparity, match_landmarks
from .reconstruction import PointCloud, SurfaceMesh, mesh_from_cloud, triangulate_rectified
from .evaluation import MeasurementRecord, aggregate_errors, align_similarity, measure_dimension, percent_error

__all__ = [
    "StereoTwinError",
    "CameraIntrinsics",
    "CameraPose",
    "PixelPoint",
    "StereoRig",
    "WorldPoint",
    "homogenize",
    "project_point",
    "skew_symmetric",
    "PlanarObservation",
    "calibrate_intrinsics",
    "fundamental_matrix",
    "stereo_relative_pose",
    "RasterImage",
    "RectifiedRig",
    "compute_rectifying_transforms",
    "warp_image",
    "DisparityMap",
    "DisparityParams",
    "compute_disparity",
    "match_landmarks",
    "PointCloud",
    "SurfaceMesh",
    "mesh_from_cloud",
    "triangulate_rectified",
    "MeasurementRecord",
    "aggregate_errors",
    "align_similarity",
    "measure_dimension",
    "percent_error",
]

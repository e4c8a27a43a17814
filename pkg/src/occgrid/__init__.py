"""Semantic occupancy grid labeling and evaluation.

Aggregates multi-frame LiDAR into dense semantic occupancy grids with
separate handling for dynamic objects, computes LiDAR and camera
visibility masks by voxel ray casting, and scores predictions with
visibility-masked mIoU. A synthetic-scene oracle provides exact ground
truth for verification.
"""

__version__ = "0.1.0"

from .aggregation import (
    FrameBundle,
    ObjectCanonicalCloud,
    aggregate_object,
    aggregate_static,
    interpolate_tracks,
    knn_label_vote,
    place_objects,
    split_dynamic_static,
)
from .errors import DataError, OccGridError, ValidationError
from .evaluation import ConfusionTable, build_report, confusion, miou
from .geom import (
    Box3D,
    Camera,
    CameraMount,
    Frame,
    PointCloud,
    Pose,
    box_contains,
    box_interpolate,
    project_to_image,
    se3_apply,
    se3_compose,
    se3_invert,
)
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .sceneio import (
    Ontology,
    SceneBundle,
    read_grid,
    read_mask,
    read_scene,
    write_grid,
    write_mask,
    write_scene,
)
from .visibility import (
    CameraVisibility,
    LidarVisibility,
    MaskKind,
    Ray,
    RayBatch,
    VisibilityMask,
    camera_visibility,
    finalize_masks,
    lidar_visibility,
    traverse_ray,
)
from .voxelizer import (
    GridSpec,
    NO_CLASS,
    OccGrid,
    VoxelState,
    voxel_center,
    voxelize,
    world_to_voxel,
)

__all__ = [
    "Box3D",
    "Camera",
    "CameraMount",
    "CameraVisibility",
    "ConfusionTable",
    "DataError",
    "Frame",
    "FrameBundle",
    "GridSpec",
    "LidarVisibility",
    "MaskKind",
    "NO_CLASS",
    "ObjectCanonicalCloud",
    "OccGrid",
    "OccGridError",
    "Ontology",
    "PipelineConfig",
    "PipelineResult",
    "PointCloud",
    "Pose",
    "Ray",
    "RayBatch",
    "SceneBundle",
    "ValidationError",
    "VisibilityMask",
    "VoxelState",
    "aggregate_object",
    "aggregate_static",
    "box_contains",
    "box_interpolate",
    "build_report",
    "camera_visibility",
    "confusion",
    "finalize_masks",
    "interpolate_tracks",
    "knn_label_vote",
    "lidar_visibility",
    "miou",
    "place_objects",
    "project_to_image",
    "read_grid",
    "read_mask",
    "read_scene",
    "run_pipeline",
    "se3_apply",
    "se3_compose",
    "se3_invert",
    "split_dynamic_static",
    "traverse_ray",
    "voxel_center",
    "voxelize",
    "world_to_voxel",
    "write_grid",
    "write_mask",
    "write_scene",
]

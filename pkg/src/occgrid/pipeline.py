"""End-to-end label generation: aggregate, label, voxelize, mask.

For each keyframe the pipeline interpolates annotation boxes onto the
unannotated frames, splits every sweep into static background and
per-track canonical points, re-places dynamic objects with the
keyframe's boxes, labels leftover static points by KNN voting,
voxelizes, and finally casts LiDAR return rays and camera rays to
produce the visibility masks. All stages are deterministic, so runs
with any thread count produce byte-identical artifacts.

LiDAR rays are cast per source frame from that frame's sensor origin;
rays whose endpoint belonged to a dynamic object are rigidly re-posed
with the object (origin and endpoint mapped by the source-box ->
target-box transform) so rays stay consistent with the aggregation.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import _kernels, __version__
from .aggregation import (
    FrameBundle,
    interpolate_tracks,
    knn_label_vote,
    split_dynamic_static,
)
from .errors import OccGridError, ValidationError
from .geom import (
    UNLABELED,
    Box3D,
    Frame,
    PointCloud,
    box_contains_points,
    box_frame_to_world,
    concat_clouds,
    se3_compose,
    se3_invert,
)
from .sceneio import SceneBundle, read_scene, write_grid, write_mask
from .visibility import (
    RayBatch,
    VisibilityMask,
    apply_lidar_visibility,
    camera_visibility,
    finalize_masks,
    lidar_visibility,
)
from .voxelizer import GridSpec, OccGrid, all_voxel_centers, voxelize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridSpec
    knn_k: int = 5
    min_points: int = 1
    threads: int = 1
    static_classes: Tuple[int, ...] = ()
    ego_footprint: Optional[Tuple[float, float, float]] = None  # (sx, sy, sz), unset = no masking
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "grid": {
                "min_corner": [float(v) for v in self.grid.min_corner],
                "max_corner": [float(v) for v in self.grid.max_corner],
                "voxel_size": self.grid.voxel_size,
                "dims": list(self.grid.dims),
            },
            "knn_k": self.knn_k,
            "min_points": self.min_points,
            "threads": self.threads,
            "static_classes": list(self.static_classes),
            "ego_footprint": list(self.ego_footprint) if self.ego_footprint else None,
            "seed": self.seed,
        }


@dataclass
class KeyframeResult:
    timestamp: int
    occupancy: OccGrid
    lidar_mask: VisibilityMask
    camera_mask: VisibilityMask
    joint_mask: VisibilityMask
    paths: Dict[str, Path] = field(default_factory=dict)


@dataclass
class PipelineResult:
    scene_id: str
    keyframes: Dict[int, KeyframeResult]
    provenance: dict


@dataclass
class _Contribution:
    """Canonical points of one track from one source frame."""

    frame_index: int
    source_box: Box3D
    points: np.ndarray  # object-canonical


@dataclass
class PreparedScene:
    """Aggregation state shared by every keyframe of a scene."""

    bundle: SceneBundle
    config: PipelineConfig
    boxes_by_ts: Dict[int, List[Box3D]]
    static_cloud: PointCloud  # world frame, fully labeled
    static_origins: np.ndarray  # per static point: its frame's sensor origin
    contributions: Dict[str, List[_Contribution]]
    track_class: Dict[str, int]
    sensor_origins: List[np.ndarray]


def _stage(name: str):
    """Tag escaping errors with the pipeline stage that raised them."""

    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, OccGridError):
                exc.stage = name
            return False

    return _StageContext()


def prepare_scene(bundle: SceneBundle, config: PipelineConfig) -> PreparedScene:
    """Run the per-scene stages: interpolation, splitting, KNN labeling."""
    frames = bundle.frames
    if not frames:
        raise ValidationError("scene has no frames")
    go_class = bundle.ontology.go_id

    with _stage("interpolate_tracks"):
        keyframes = bundle.keyframes()
        all_ts = [f.timestamp for f in frames]
        if keyframes:
            boxes_by_ts = interpolate_tracks(keyframes, all_ts)
        else:
            boxes_by_ts = {ts: [] for ts in all_ts}

    with _stage("split_dynamic_static"):
        sensor_origins = [f.sensor_origin() for f in frames]
        static_parts: List[PointCloud] = []
        origin_parts: List[np.ndarray] = []
        contributions: Dict[str, List[_Contribution]] = {}
        track_class: Dict[str, int] = {}
        for i, frame in enumerate(frames):
            boxes = boxes_by_ts[frame.timestamp]
            boxed_frame = FrameBundle(
                frame.timestamp, frame.lidar_cloud, frame.ego_pose,
                frame.lidar_extrinsic, tuple(boxes), frame.is_keyframe,
            )
            static, per_object = split_dynamic_static(boxed_frame, config.static_classes)
            static_parts.append(static)
            origin_parts.append(np.broadcast_to(sensor_origins[i], (len(static), 3)))
            box_by_track = {b.track_id: b for b in boxes}
            for track_id, cloud in per_object.items():
                track_class.setdefault(track_id, box_by_track[track_id].class_id)
                contributions.setdefault(track_id, []).append(
                    _Contribution(i, box_by_track[track_id], cloud.points)
                )
        static_cloud = concat_clouds(static_parts)
        static_origins = (
            np.concatenate(origin_parts, axis=0) if origin_parts else np.zeros((0, 3))
        )

    with _stage("knn_label_vote"):
        labels = static_cloud.labels_or_unlabeled().copy()
        unlabeled = labels == UNLABELED
        if np.any(unlabeled):
            labeled_mask = ~unlabeled
            if np.any(labeled_mask):
                reference = PointCloud(
                    static_cloud.points[labeled_mask], labels[labeled_mask], Frame.WORLD
                )
                queries = PointCloud(static_cloud.points[unlabeled], None, Frame.WORLD)
                labels[unlabeled] = knn_label_vote(queries, reference, config.knn_k)
            else:
                log.warning("no labeled static points; assigning general-object class")
                labels[unlabeled] = go_class
        static_cloud = PointCloud(static_cloud.points, labels, Frame.WORLD)

    return PreparedScene(
        bundle, config, boxes_by_ts, static_cloud, static_origins,
        contributions, track_class, sensor_origins,
    )


def keyframe_cloud(prepared: PreparedScene, timestamp: int) -> PointCloud:
    """Labeled world-frame cloud for one keyframe: static points plus
    dynamic objects re-placed at that keyframe's box poses."""
    placed = _placed_points(prepared, timestamp)
    pieces = [prepared.static_cloud]
    for _, _, points, labels in placed:
        pieces.append(PointCloud(points, labels, Frame.WORLD))
    return concat_clouds(pieces)


def _placed_points(prepared: PreparedScene, timestamp: int):
    """Per-contribution world points at a keyframe.

    Yields (track_id, contribution, world points, labels); contributions
    are ordered by (track_id, frame index) for determinism.
    """
    boxes = {b.track_id: b for b in prepared.boxes_by_ts.get(timestamp, [])}
    out = []
    for track_id in sorted(boxes):
        box_t = boxes[track_id]
        for contrib in prepared.contributions.get(track_id, []):
            world = box_frame_to_world(box_t, contrib.points)
            labels = np.full(world.shape[0], box_t.class_id, dtype=np.int16)
            out.append((track_id, contrib, world, labels))
    return out


def keyframe_rays(prepared: PreparedScene, timestamp: int) -> RayBatch:
    """LiDAR return rays for one keyframe, all source frames combined.

    Static rays connect each source frame's sensor origin to the point;
    dynamic rays are re-posed with their object into the keyframe.
    """
    origins = [prepared.static_origins]
    endpoints = [prepared.static_cloud.points]
    boxes = {b.track_id: b for b in prepared.boxes_by_ts.get(timestamp, [])}
    for _, contrib, world, _ in _placed_points(prepared, timestamp):
        box_t = boxes[contrib.source_box.track_id]
        source_origin = prepared.sensor_origins[contrib.frame_index]
        # box-to-box transform maps the source-frame ray origin along with
        # the object into the keyframe.
        relocate = se3_compose(box_t.to_pose(), se3_invert(contrib.source_box.to_pose()))
        moved_origin = relocate.apply_points(source_origin[None, :])[0]
        origins.append(np.broadcast_to(moved_origin, world.shape))
        endpoints.append(world)
    origins = np.concatenate(origins, axis=0)
    endpoints = np.concatenate(endpoints, axis=0)
    keep = ~np.all(origins == endpoints, axis=1)
    if not np.all(keep):
        log.warning("dropping %d zero-length rays", int((~keep).sum()))
        origins, endpoints = origins[keep], endpoints[keep]
    return RayBatch(origins, endpoints)


def _ego_footprint_mask(prepared: PreparedScene, timestamp: int) -> Optional[np.ndarray]:
    size = prepared.config.ego_footprint
    if size is None:
        return None
    frame = next(f for f in prepared.bundle.frames if f.timestamp == timestamp)
    ego_box = Box3D(
        frame.ego_pose.translation, np.asarray(size),
        float(np.arctan2(frame.ego_pose.rotation[1, 0], frame.ego_pose.rotation[0, 0])),
        0, "__ego__", timestamp,
    )
    centers = all_voxel_centers(prepared.config.grid)
    inside = box_contains_points(ego_box, centers)
    return inside.reshape(prepared.config.grid.dims)


def process_keyframe(prepared: PreparedScene, timestamp: int) -> KeyframeResult:
    """Occupancy grid and all three visibility masks for one keyframe."""
    config = prepared.config
    bundle = prepared.bundle

    with _stage("voxelize"):
        cloud = keyframe_cloud(prepared, timestamp)
        occ = voxelize(cloud, config.grid, config.min_points, bundle.ontology.go_id)

    with _stage("lidar_visibility"):
        rays = keyframe_rays(prepared, timestamp)
        lidar_mask = lidar_visibility(config.grid, occ, rays)
        occ = apply_lidar_visibility(occ, lidar_mask)

    with _stage("camera_visibility"):
        frame = next(f for f in bundle.frames if f.timestamp == timestamp)
        cameras = [mount.at_pose(frame.ego_pose) for mount in bundle.cameras]
        camera_mask = camera_visibility(config.grid, occ, cameras)

    with _stage("finalize_masks"):
        joint = finalize_masks(lidar_mask, camera_mask)
        footprint = _ego_footprint_mask(prepared, timestamp)
        if footprint is not None:
            joint.values[footprint] = 0

    return KeyframeResult(timestamp, occ, lidar_mask, camera_mask, joint)


def run_pipeline(
    scene: Union[SceneBundle, str, Path],
    config: PipelineConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> PipelineResult:
    """Full pipeline over every keyframe; optionally writes artifacts.

    Artifacts per keyframe: ``<ts>_occupancy.oc3g`` plus
    ``<ts>_{lidar,camera,joint}.oc3m``, and one ``provenance.json``.
    """
    bundle = scene if isinstance(scene, SceneBundle) else read_scene(scene)
    threads = _kernels.set_threads(config.threads)
    if threads != config.threads:
        log.warning("requested %d threads, running with %d", config.threads, threads)

    prepared = prepare_scene(bundle, config)
    results: Dict[int, KeyframeResult] = {}
    for frame in bundle.keyframes():
        results[frame.timestamp] = process_keyframe(prepared, frame.timestamp)

    config_json = json.dumps(config.to_json_dict(), sort_keys=True)
    provenance = {
        "scene_id": bundle.scene_id,
        "config": config.to_json_dict(),
        "config_sha256": hashlib.sha256(config_json.encode()).hexdigest(),
        "package_version": __version__,
        "keyframes": sorted(results),
        "ontology": {
            "classes": list(bundle.ontology.classes),
            "go_id": bundle.ontology.go_id,
        },
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for ts, result in results.items():
            stem = f"{ts:016d}"
            result.paths = {
                "occupancy": out / f"{stem}_occupancy.oc3g",
                "lidar": out / f"{stem}_lidar.oc3m",
                "camera": out / f"{stem}_camera.oc3m",
                "joint": out / f"{stem}_joint.oc3m",
            }
            write_grid(result.paths["occupancy"], result.occupancy)
            write_mask(result.paths["lidar"], result.lidar_mask)
            write_mask(result.paths["camera"], result.camera_mask)
            write_mask(result.paths["joint"], result.joint_mask)
        (out / "provenance.json").write_text(json.dumps(provenance, indent=2, sort_keys=True))

    return PipelineResult(bundle.scene_id, results, provenance)


__all__ = [
    "KeyframeResult",
    "PipelineConfig",
    "PipelineResult",
    "PreparedScene",
    "keyframe_cloud",
    "keyframe_rays",
    "prepare_scene",
    "process_keyframe",
    "run_pipeline",
]

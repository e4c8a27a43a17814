"""Multi-frame point cloud aggregation with dynamic-object handling.

Static background points are accumulated directly in the world frame.
Points inside annotation boxes are dynamic: they are carried in an
object-canonical frame (box center at origin, yaw zero) so aggregation
across frames does not smear moving objects, then re-placed with the
box pose of whichever frame is being labeled. Boxes on unannotated
frames come from shortest-arc interpolation between keyframes; leftover
unlabeled points receive labels by k-nearest-neighbor majority voting.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import (
    InsufficientReferenceError,
    MissingTrackError,
    NoAnnotationsError,
    UnknownTrackError,
    ValidationError,
)
from .geom import (
    UNLABELED,
    Box3D,
    Frame,
    PointCloud,
    Pose,
    box_contains_points,
    box_frame_to_world,
    box_interpolate,
    concat_clouds,
    se3_apply,
    se3_compose,
    world_to_box_frame,
)

CANONICAL_MARGIN = 0.25  # meters of slack for the canonical-extent invariant
KNN_BRUTE_FORCE_LIMIT = 10_000  # below this many references, skip the hash grid


@dataclass(frozen=True)
class FrameBundle:
    """One sweep: sensor cloud plus the poses and boxes needed to place it."""

    timestamp: int
    lidar_cloud: PointCloud
    ego_pose: Pose
    lidar_extrinsic: Pose
    boxes: Tuple[Box3D, ...] = ()
    is_keyframe: bool = True

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for box in self.boxes:
            if box.timestamp != self.timestamp:
                raise ValidationError(
                    f"box timestamp {box.timestamp} != frame timestamp {self.timestamp}"
                )

    def sensor_to_world(self) -> Pose:
        return se3_compose(self.ego_pose, self.lidar_extrinsic)

    def sensor_origin(self) -> np.ndarray:
        """LiDAR origin in world coordinates."""
        return self.sensor_to_world().translation


@dataclass(frozen=True)
class ObjectCanonicalCloud:
    """Aggregated points of one track in its object-canonical frame."""

    track_id: str
    class_id: int
    points: PointCloud

    def __post_init__(self):
        if self.points.frame != Frame.OBJECT:
            raise ValidationError("canonical cloud must be in the object frame")

    def validate_extent(self, boxes: Iterable[Box3D], margin: float = CANONICAL_MARGIN) -> None:
        """Check that all points fit inside the union of box extents + margin."""
        pts = self.points.points
        if pts.shape[0] == 0:
            return
        inside = np.zeros(pts.shape[0], dtype=bool)
        for box in boxes:
            half = box.size / 2.0 + margin
            inside |= np.all(np.abs(pts) <= half, axis=1)
        if not np.all(inside):
            worst = pts[~inside][0]
            raise ValidationError(
                f"track {self.track_id}: canonical point {worst} outside "
                f"box extents + {margin} m margin"
            )


def _sorted_boxes(boxes: Sequence[Box3D]) -> List[Box3D]:
    return sorted(boxes, key=lambda b: b.track_id)


def split_dynamic_static(
    frame: FrameBundle,
    static_classes: Sequence[int] = (),
) -> Tuple[PointCloud, Dict[str, PointCloud]]:
    """Partition one frame into static world points and per-track canonical points.

    Each point is transformed to the world frame; points inside a box
    go to that box's canonical frame. When boxes overlap, the box with
    the smallest track_id wins. Classes listed in ``static_classes``
    keep their boxed points in the static set (e.g. parked vehicles).
    """
    world = se3_apply(frame.sensor_to_world(), frame.lidar_cloud, Frame.WORLD)
    n = len(world)
    assigned = np.zeros(n, dtype=bool)
    static_set = frozenset(static_classes)

    per_object: Dict[str, PointCloud] = {}
    for box in _sorted_boxes(frame.boxes):
        if box.class_id in static_set:
            continue
        hit = box_contains_points(box, world.points) & ~assigned
        assigned |= hit
        canonical = world_to_box_frame(box, world.points[hit])
        labels = world.labels[hit] if world.labels is not None else None
        per_object[box.track_id] = PointCloud(canonical, labels, Frame.OBJECT)

    static_labels = world.labels[~assigned] if world.labels is not None else None
    static = PointCloud(world.points[~assigned], static_labels, Frame.WORLD)
    return static, per_object


def interpolate_tracks(
    keyframes: Sequence[FrameBundle],
    all_timestamps: Sequence[int],
) -> Dict[int, List[Box3D]]:
    """Boxes for every timestamp: annotated at keyframes, interpolated between.

    Tracks are never extrapolated beyond their first/last keyframe
    appearance; at timestamps outside that span the track is absent.
    """
    if not keyframes:
        raise NoAnnotationsError("no keyframes to interpolate from")
    tracks: Dict[str, List[Box3D]] = {}
    keyed: Dict[int, List[Box3D]] = {}
    for frame in keyframes:
        keyed[frame.timestamp] = _sorted_boxes(frame.boxes)
        for box in frame.boxes:
            tracks.setdefault(box.track_id, []).append(box)
    for seq in tracks.values():
        seq.sort(key=lambda b: b.timestamp)

    out: Dict[int, List[Box3D]] = {}
    for ts in all_timestamps:
        if ts in keyed:
            out[ts] = list(keyed[ts])
            continue
        boxes: List[Box3D] = []
        for track_id in sorted(tracks):
            seq = tracks[track_id]
            stamps = [b.timestamp for b in seq]
            if ts < stamps[0] or ts > stamps[-1]:
                continue
            hi = bisect.bisect_left(stamps, ts)
            if stamps[hi] == ts:
                boxes.append(seq[hi])
                continue
            a, b = seq[hi - 1], seq[hi]
            alpha = (ts - a.timestamp) / (b.timestamp - a.timestamp)
            box = box_interpolate(a, b, alpha)
            if box.timestamp != ts:
                box = replace(box, timestamp=ts)
            boxes.append(box)
        out[ts] = boxes
    return out


def split_frames(
    frames: Sequence[FrameBundle],
    static_classes: Sequence[int] = (),
):
    """Single pass splitting every frame.

    Returns (static cloud, {track_id: [(frame_index, canonical cloud)]},
    {track_id: class_id}); aggregate_static/aggregate_object are views
    of this.
    """
    if not frames:
        raise ValidationError("need at least one frame")
    statics: List[PointCloud] = []
    contributions: Dict[str, List[Tuple[int, PointCloud]]] = {}
    classes: Dict[str, int] = {}
    for i, frame in enumerate(frames):
        static, per_object = split_dynamic_static(frame, static_classes)
        statics.append(static)
        for box in frame.boxes:
            classes.setdefault(box.track_id, box.class_id)
        for track_id, cloud in per_object.items():
            contributions.setdefault(track_id, []).append((i, cloud))
    return concat_clouds(statics), contributions, classes


def aggregate_static(
    frames: Sequence[FrameBundle],
    static_classes: Sequence[int] = (),
) -> PointCloud:
    """World-frame concatenation of every frame's static points, in
    (frame, point) order."""
    static, _, _ = split_frames(frames, static_classes)
    return static


def aggregate_object(
    frames: Sequence[FrameBundle],
    track_id: str,
    static_classes: Sequence[int] = (),
) -> ObjectCanonicalCloud:
    """Union of a track's canonical points over all frames."""
    known = {box.track_id for frame in frames for box in frame.boxes}
    if track_id not in known:
        raise UnknownTrackError(f"track {track_id!r} appears in no frame")
    _, contributions, classes = split_frames(frames, static_classes)
    pieces = [cloud for _, cloud in contributions.get(track_id, [])]
    if pieces:
        merged = concat_clouds(pieces)
    else:
        merged = PointCloud.empty(Frame.OBJECT)
    return ObjectCanonicalCloud(track_id, classes[track_id], merged)


def place_objects(
    canon: Mapping[str, ObjectCanonicalCloud],
    boxes_at_t: Sequence[Box3D],
) -> PointCloud:
    """Place canonical clouds at their box poses for one timestamp.

    Every output point is labeled with its box's class. Output order is
    deterministic: boxes sorted by track_id, points in canonical order.
    """
    placed: List[PointCloud] = []
    for box in _sorted_boxes(boxes_at_t):
        if box.track_id not in canon:
            raise MissingTrackError(f"no canonical cloud for track {box.track_id!r}")
        cloud = canon[box.track_id].points
        world = box_frame_to_world(box, cloud.points)
        labels = np.full(world.shape[0], box.class_id, dtype=np.int16)
        placed.append(PointCloud(world, labels, Frame.WORLD))
    if not placed:
        return PointCloud.empty(Frame.WORLD, labeled=True)
    return concat_clouds(placed)


def _brute_force_knn(query: np.ndarray, ref: np.ndarray, k: int) -> np.ndarray:
    """Exact KNN by stable argsort of squared distances (ties keep the
    lowest reference index). Chunked over queries to bound memory."""
    n_ref = ref.shape[0]
    k = min(k, n_ref)
    out = np.empty((query.shape[0], k), dtype=np.int64)
    chunk = max(1, int(2e7) // max(n_ref, 1))
    for lo in range(0, query.shape[0], chunk):
        q = query[lo:lo + chunk]
        d2 = ((q[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
        order = np.argsort(d2, axis=1, kind="stable")
        out[lo:lo + chunk] = order[:, :k]
    return out


def _hash_knn(query: np.ndarray, ref: np.ndarray, k: int) -> np.ndarray:
    """Uniform-spatial-hash KNN; identical output to brute force."""
    n_ref = ref.shape[0]
    k = min(k, n_ref)

    # Cell size heuristic: 2x the median nearest-neighbor distance,
    # estimated on a strided subsample (results do not depend on it).
    sample_q = ref[:: max(1, n_ref // 1024)]
    sample_r = ref[:: max(1, n_ref // 8192)]
    d2 = ((sample_q[:, None, :] - sample_r[None, :, :]) ** 2).sum(axis=2)
    np.putmask(d2, d2 == 0.0, np.inf)  # drop self-distance (and exact duplicates)
    nn = np.sqrt(d2.min(axis=1))
    nn = nn[np.isfinite(nn)]
    cell = 2.0 * float(np.median(nn)) if nn.size else 0.0
    if cell <= 0.0 or not np.isfinite(cell):
        return _brute_force_knn(query, ref, k)

    origin = ref.min(axis=0)
    coords = np.floor((ref - origin) / cell).astype(np.int64)
    dims = coords.max(axis=0) + 1
    if int(dims[0]) * int(dims[1]) * int(dims[2]) > 2**62:
        return _brute_force_knn(query, ref, k)
    keys = (coords[:, 0] * dims[1] + coords[:, 1]) * dims[2] + coords[:, 2]
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    cell_keys, starts = np.unique(sorted_keys, return_index=True)
    cell_starts = np.append(starts, n_ref).astype(np.int64)

    return _kernels.knn_query_kernel(
        np.ascontiguousarray(query, dtype=np.float64),
        np.ascontiguousarray(ref, dtype=np.float64),
        order.astype(np.int64), cell_keys.astype(np.int64), cell_starts,
        origin[0], origin[1], origin[2], cell,
        int(dims[0]), int(dims[1]), int(dims[2]), k,
    )


def _majority_vote(neighbor_labels: np.ndarray) -> np.ndarray:
    """Majority class per row; ties go to the smallest class id."""
    n, k = neighbor_labels.shape
    n_classes = int(neighbor_labels.max()) + 1 if neighbor_labels.size else 1
    out = np.empty(n, dtype=np.int16)
    chunk = max(1, int(5e7) // max(n_classes, 1))
    for lo in range(0, n, chunk):
        block = neighbor_labels[lo:lo + chunk]
        m = block.shape[0]
        rows = np.repeat(np.arange(m, dtype=np.int64), k)
        counts = np.bincount(
            rows * n_classes + block.ravel(), minlength=m * n_classes
        ).reshape(m, n_classes)
        out[lo:lo + chunk] = np.argmax(counts, axis=1)  # first max = smallest id
    return out


def knn_label_vote(
    unlabeled: PointCloud,
    labeled: PointCloud,
    k: int,
    brute_force_limit: int = KNN_BRUTE_FORCE_LIMIT,
) -> np.ndarray:
    """Label each query point by majority vote of its k nearest labeled points.

    Neighbor-distance ties resolve to the lowest reference index and
    vote ties to the smallest class id, so the result is identical to
    an exhaustive search regardless of the acceleration path.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if labeled.labels is None or len(labeled) == 0:
        raise InsufficientReferenceError("labeled reference cloud is empty")
    if np.any(labeled.labels < 0):
        raise ValidationError("reference cloud contains unlabeled points")
    if unlabeled.frame != labeled.frame:
        raise ValidationError("query and reference clouds must share a frame")
    if len(unlabeled) == 0:
        return np.zeros(0, dtype=np.int16)

    if len(labeled) < brute_force_limit:
        idx = _brute_force_knn(unlabeled.points, labeled.points, k)
    else:
        idx = _hash_knn(unlabeled.points, labeled.points, k)
    return _majority_vote(labeled.labels[idx].astype(np.int64))


__all__ = [
    "CANONICAL_MARGIN",
    "FrameBundle",
    "KNN_BRUTE_FORCE_LIMIT",
    "ObjectCanonicalCloud",
    "aggregate_object",
    "aggregate_static",
    "interpolate_tracks",
    "knn_label_vote",
    "place_objects",
    "split_dynamic_static",
    "split_frames",
]

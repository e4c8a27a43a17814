"""Core geometric types and exact rigid transforms.

Conventions used throughout the package:

- A ``Pose`` maps points from its source frame into its destination
  frame via ``p' = R @ p + t``. All world-frame math runs in float64;
  only file payloads are stored at float32.
- Boxes are yaw-only (rotation about +z); sizes are full extents.
- Box containment is half-open, ``[-size/2, size/2)`` per axis in the
  box frame, so points on shared faces have a deterministic owner.
- Cameras are distortion-free pinholes, +z forward, x right, y down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import TrackMismatchError, ValidationError

UNLABELED = -1  # sentinel for points without a semantic label

_ORTHO_TOL = 1e-9


class Frame(str, Enum):
    """Coordinate frame tag carried by point clouds."""

    SENSOR = "sensor"
    EGO = "ego"
    WORLD = "world"
    OBJECT = "object-canonical"


def rot_z(yaw: float) -> np.ndarray:
    """Rotation matrix about +z by ``yaw`` radians."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]. Angles already in range pass through unchanged."""
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform (rotation + translation) at a timestamp.

    Attributes:
        rotation: 3x3 orthonormal matrix, det +1.
        translation: length-3 vector, meters.
        timestamp: integer microseconds (metadata; 0 when untimed).
    """

    rotation: np.ndarray
    translation: np.ndarray
    timestamp: int = 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        if self.rotation.shape != (3, 3):
            raise ValidationError(f"pose rotation must be 3x3, got {self.rotation.shape}")
        if self.translation.shape != (3,):
            raise ValidationError(f"pose translation must be length 3, got {self.translation.shape}")

    @classmethod
    def identity(cls, timestamp: int = 0) -> "Pose":
        return cls(np.eye(3), np.zeros(3), timestamp)

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float = 0.0, timestamp: int = 0) -> "Pose":
        return cls(rot_z(yaw), np.array([x, y, z], dtype=np.float64), timestamp)

    def validate(self) -> None:
        """Check orthonormality (R^T R = I and det R = +1 within 1e-9)."""
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValidationError(f"rotation not orthonormal (max |R^T R - I| = {err:.3e})")
        det = float(np.linalg.det(self.rotation))
        if abs(det - 1.0) > _ORTHO_TOL:
            raise ValidationError(f"rotation determinant {det} != +1")

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class PointCloud:
    """Columnar 3D points with optional per-point class labels.

    ``labels`` holds ontology class ids; ``UNLABELED`` (-1) marks points
    that have not received a semantic label yet.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    frame: Frame = Frame.WORLD

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError(f"points must be (N, 3), got {pts.shape}")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int16)
            if lab.shape != (pts.shape[0],):
                raise ValidationError(
                    f"labels length {lab.shape} does not match {pts.shape[0]} points"
                )
            object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "frame", Frame(self.frame))

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls, frame: Frame = Frame.WORLD, labeled: bool = False) -> "PointCloud":
        labels = np.zeros(0, dtype=np.int16) if labeled else None
        return cls(np.zeros((0, 3)), labels, frame)

    def labels_or_unlabeled(self) -> np.ndarray:
        """Labels array, synthesizing all-UNLABELED when absent."""
        if self.labels is not None:
            return self.labels
        return np.full(len(self), UNLABELED, dtype=np.int16)


def concat_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    """Concatenate clouds that share a frame; labels are merged, filling
    UNLABELED for clouds without labels when any cloud carries them."""
    clouds = [c for c in clouds]
    if not clouds:
        return PointCloud.empty()
    frame = clouds[0].frame
    for c in clouds:
        if c.frame != frame:
            raise ValidationError(f"cannot concat clouds in frames {frame} and {c.frame}")
    points = np.concatenate([c.points for c in clouds], axis=0)
    if all(c.labels is None for c in clouds):
        return PointCloud(points, None, frame)
    labels = np.concatenate([c.labels_or_unlabeled() for c in clouds])
    return PointCloud(points, labels, frame)


def se3_apply(pose: Pose, cloud: PointCloud, frame: Frame = Frame.WORLD) -> PointCloud:
    """Apply a rigid transform to every point; labels are preserved and
    the cloud is re-tagged with the destination ``frame``."""
    return PointCloud(pose.apply_points(cloud.points), cloud.labels, frame)


def se3_compose(a: Pose, b: Pose) -> Pose:
    """Compose transforms so that applying the result equals applying b then a."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation, a.timestamp)


def se3_invert(a: Pose) -> Pose:
    rot_t = a.rotation.T
    return Pose(rot_t, -(rot_t @ a.translation), a.timestamp)


@dataclass(frozen=True, eq=False)
class Box3D:
    """Oriented (yaw-only) 3D box annotation in the world frame.

    Attributes:
        center: (3,) meters.
        size: (3,) full extents, all strictly positive.
        yaw: radians, normalized to (-pi, pi] on construction.
        class_id: ontology index.
        track_id: opaque identifier; ordering ties are broken by it.
        timestamp: integer microseconds.
    """

    center: np.ndarray
    size: np.ndarray
    yaw: float
    class_id: int
    track_id: str
    timestamp: int = 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box3D):
            return NotImplemented
        return (
            self.yaw == other.yaw
            and self.class_id == other.class_id
            and self.track_id == other.track_id
            and self.timestamp == other.timestamp
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.size, other.size)
        )

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        size = np.asarray(self.size, dtype=np.float64)
        if center.shape != (3,) or size.shape != (3,):
            raise ValidationError("box center/size must be length-3")
        if not np.all(size > 0):
            raise ValidationError(f"box size must be strictly positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    def to_pose(self) -> Pose:
        """Object-canonical -> world transform (rotate by yaw, then translate)."""
        return Pose(rot_z(self.yaw), self.center, self.timestamp)


def box_contains(box: Box3D, point: Sequence[float]) -> bool:
    """True iff the point lies in the half-open box interior [-s/2, s/2)."""
    return bool(box_contains_points(box, np.asarray(point, dtype=np.float64)[None, :])[0])


def box_contains_points(box: Box3D, points: np.ndarray) -> np.ndarray:
    """Vectorized containment test; returns an (N,) bool mask."""
    local = (np.asarray(points, dtype=np.float64) - box.center) @ rot_z(box.yaw)
    half = box.size / 2.0
    return np.all((local >= -half) & (local < half), axis=1)


def world_to_box_frame(box: Box3D, points: np.ndarray) -> np.ndarray:
    """Express world points in the box's canonical frame (center at origin, yaw 0)."""
    return (np.asarray(points, dtype=np.float64) - box.center) @ rot_z(box.yaw)


def box_frame_to_world(box: Box3D, points: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) @ rot_z(box.yaw).T + box.center


def box_interpolate(a: Box3D, b: Box3D, alpha: float) -> Box3D:
    """Interpolate two keyframe boxes of the same track.

    Center and size are linear; yaw follows the shortest angular arc so
    the traversed arc never exceeds pi. The endpoints alpha=0 and
    alpha=1 reproduce the inputs bit-exactly.
    """
    if a.track_id != b.track_id:
        raise TrackMismatchError(f"cannot interpolate tracks {a.track_id!r} and {b.track_id!r}")
    if a.timestamp >= b.timestamp:
        raise ValidationError("box_interpolate requires a.timestamp < b.timestamp")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return a
    if alpha == 1.0:
        return b
    delta_yaw = normalize_angle(b.yaw - a.yaw)
    return Box3D(
        center=(1.0 - alpha) * a.center + alpha * b.center,
        size=(1.0 - alpha) * a.size + alpha * b.size,
        yaw=normalize_angle(a.yaw + alpha * delta_yaw),
        class_id=a.class_id,
        track_id=a.track_id,
        timestamp=a.timestamp + round(alpha * (b.timestamp - a.timestamp)),
    )


class ProjectionResult(Enum):
    IN_IMAGE = "in-image"
    OUT_OF_IMAGE = "out-of-image"
    BEHIND_CAMERA = "behind-camera"


@dataclass(frozen=True)
class Projection:
    outcome: ProjectionResult
    pixel: Optional[np.ndarray]  # (u, v); None when behind the camera
    depth: float  # distance along the camera z axis, meters


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with an absolute (camera-to-world) pose."""

    intrinsics: np.ndarray
    extrinsics: Pose
    image_size: tuple  # (width, height) pixels
    camera_id: str = "cam"

    def __post_init__(self):
        k = np.asarray(self.intrinsics, dtype=np.float64)
        if k.shape != (3, 3):
            raise ValidationError("intrinsics must be 3x3")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValidationError("focal lengths must be positive")
        if not np.allclose(k[2], [0.0, 0.0, 1.0]):
            raise ValidationError("intrinsics bottom row must be [0, 0, 1]")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))


@dataclass(frozen=True)
class CameraMount:
    """Camera rig entry: intrinsics plus a camera-to-ego mount pose."""

    camera_id: str
    intrinsics: np.ndarray
    mount: Pose
    image_size: tuple

    def at_pose(self, ego_pose: Pose) -> Camera:
        """Resolve the mount against an ego pose into an absolute camera."""
        return Camera(self.intrinsics, se3_compose(ego_pose, self.mount), self.image_size, self.camera_id)


def project_to_image(camera: Camera, point_world: Sequence[float]) -> Projection:
    """Project one world point through the camera.

    Returns one of three outcomes: IN_IMAGE (positive depth, pixel
    inside [0, W) x [0, H)), OUT_OF_IMAGE, or BEHIND_CAMERA (depth <= 0,
    no pixel).
    """
    world_to_cam = se3_invert(camera.extrinsics)
    p_cam = world_to_cam.apply_points(np.asarray(point_world, dtype=np.float64)[None, :])[0]
    depth = float(p_cam[2])
    if depth <= 0.0:
        return Projection(ProjectionResult.BEHIND_CAMERA, None, depth)
    uvw = camera.intrinsics @ p_cam
    pixel = uvw[:2] / depth
    width, height = camera.image_size
    if 0.0 <= pixel[0] < width and 0.0 <= pixel[1] < height:
        return Projection(ProjectionResult.IN_IMAGE, pixel, depth)
    return Projection(ProjectionResult.OUT_OF_IMAGE, pixel, depth)


def project_points(camera: Camera, points_world: np.ndarray):
    """Vectorized projection.

    Returns:
        pixels: (N, 2) array (meaningless rows where depth <= 0),
        depths: (N,) camera-z depths,
        in_image: (N,) bool, positive depth and pixel inside bounds.
    """
    world_to_cam = se3_invert(camera.extrinsics)
    p_cam = world_to_cam.apply_points(points_world)
    depths = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uvw = p_cam @ camera.intrinsics.T
        pixels = uvw[:, :2] / depths[:, None]
    width, height = camera.image_size
    in_image = (
        (depths > 0.0)
        & (pixels[:, 0] >= 0.0)
        & (pixels[:, 0] < width)
        & (pixels[:, 1] >= 0.0)
        & (pixels[:, 1] < height)
    )
    return pixels, depths, in_image


__all__ = [
    "Frame",
    "Pose",
    "PointCloud",
    "Box3D",
    "Camera",
    "CameraMount",
    "Projection",
    "ProjectionResult",
    "UNLABELED",
    "box_contains",
    "box_contains_points",
    "box_frame_to_world",
    "box_interpolate",
    "concat_clouds",
    "normalize_angle",
    "project_points",
    "project_to_image",
    "rot_z",
    "se3_apply",
    "se3_compose",
    "se3_invert",
    "world_to_box_frame",
]

"""Ray-casting visibility reasoning over occupancy grids.

LiDAR: every return-ray endpoint voxel is observed-occupied; voxels a
ray traverses strictly before its first occupied hit are observed-free;
the rest stay unobserved. Camera: rays run from the camera center to
every occupied voxel center that projects into the image, and cells up
to and including the first occupied cell become observed.

Camera rays target occupied voxel centers only. Free-space voxels
therefore become camera-observed only when they lie on some ray toward
an occupied voxel; free voxels inside the camera frustum with nothing
occupied behind them stay UNOBSERVED.

All merging is a voxelwise monotone join (observed-occupied >
observed-free > unobserved; observed > unobserved), so results are
independent of ray, camera, and thread order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import SpecMismatchError, ValidationError
from .geom import Camera, project_points
from .voxelizer import (
    NO_CLASS,
    GridSpec,
    OccGrid,
    VoxelState,
    voxel_centers,
    world_to_voxel_array,
)


class LidarVisibility(IntEnum):
    UNOBSERVED = 0
    OBSERVED_FREE = 1
    OBSERVED_OCCUPIED = 2


class CameraVisibility(IntEnum):
    UNOBSERVED = 0
    OBSERVED = 1


class MaskKind(str, Enum):
    LIDAR = "lidar"
    CAMERA = "camera"
    JOINT = "joint"


class RayKind(str, Enum):
    LIDAR_RETURN = "lidar-return"
    CAMERA_QUERY = "camera-query"


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    endpoint: np.ndarray
    kind: RayKind = RayKind.LIDAR_RETURN

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        e = np.asarray(self.endpoint, dtype=np.float64)
        if o.shape != (3,) or e.shape != (3,):
            raise ValidationError("ray origin/endpoint must be length-3")
        if np.array_equal(o, e):
            raise ValidationError("ray origin and endpoint coincide")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "endpoint", e)


@dataclass(frozen=True)
class RayBatch:
    """Columnar ray set; the form the kernels consume directly."""

    origins: np.ndarray
    endpoints: np.ndarray
    kind: RayKind = RayKind.LIDAR_RETURN

    def __post_init__(self):
        o = np.ascontiguousarray(self.origins, dtype=np.float64)
        e = np.ascontiguousarray(self.endpoints, dtype=np.float64)
        if o.ndim != 2 or o.shape[1] != 3 or o.shape != e.shape:
            raise ValidationError(f"ray batch shapes {o.shape}/{e.shape} invalid")
        if np.any(np.all(o == e, axis=1)):
            raise ValidationError("ray batch contains a zero-length ray")
        object.__setattr__(self, "origins", o)
        object.__setattr__(self, "endpoints", e)

    def __len__(self) -> int:
        return self.origins.shape[0]

    @classmethod
    def from_rays(cls, rays: Sequence[Ray], kind: RayKind = RayKind.LIDAR_RETURN) -> "RayBatch":
        if len(rays) == 0:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)), kind)
        return cls(
            np.stack([r.origin for r in rays]),
            np.stack([r.endpoint for r in rays]),
            kind,
        )


@dataclass
class VisibilityMask:
    """Dense per-voxel visibility values over the same dims as the grid."""

    spec: GridSpec
    values: np.ndarray  # uint8
    kind: MaskKind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.values.shape != self.spec.dims:
            raise ValidationError(
                f"mask shape {self.values.shape} does not match dims {self.spec.dims}"
            )
        self.kind = MaskKind(self.kind)

    @classmethod
    def unobserved(cls, spec: GridSpec, kind: MaskKind) -> "VisibilityMask":
        return cls(spec, np.zeros(spec.dims, dtype=np.uint8), kind)


def _as_batch(rays: Union[RayBatch, Sequence[Ray]]) -> RayBatch:
    if isinstance(rays, RayBatch):
        return rays
    return RayBatch.from_rays(list(rays))


def traverse_ray(spec: GridSpec, ray: Ray) -> np.ndarray:
    """Ordered voxel indices the open segment origin->endpoint intersects.

    The walk is clipped to the grid; cells touched only at a face or
    edge (zero intersection length) are excluded; the endpoint's
    containing voxel is always included when it is in bounds. Returns an
    (K, 3) int64 array, empty when the segment misses the grid.
    """
    nx, ny, nz = spec.dims
    return _kernels.traverse_one(
        ray.origin[0], ray.origin[1], ray.origin[2],
        ray.endpoint[0], ray.endpoint[1], ray.endpoint[2],
        spec.min_corner[0], spec.min_corner[1], spec.min_corner[2],
        spec.voxel_size, nx, ny, nz,
    )


def traverse_rays(spec: GridSpec, origins: np.ndarray, endpoints: np.ndarray):
    """Batched ``traverse_ray``: returns (cells (M, 3), offsets (N+1,)) CSR."""
    nx, ny, nz = spec.dims
    return _kernels.traverse_batch(
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(endpoints, dtype=np.float64),
        spec.min_corner[0], spec.min_corner[1], spec.min_corner[2],
        spec.voxel_size, nx, ny, nz,
    )


def lidar_visibility(
    spec: GridSpec,
    occ: OccGrid,
    rays: Union[RayBatch, Sequence[Ray]],
) -> VisibilityMask:
    """LiDAR visibility mask from return rays cast into an occupancy grid.

    Rays whose endpoint falls outside the grid still contribute
    observed-free along their clipped in-grid prefix.
    """
    if occ.spec != spec:
        raise SpecMismatchError("occupancy grid spec differs from target spec")
    batch = _as_batch(rays)
    mask = VisibilityMask.unobserved(spec, MaskKind.LIDAR)
    if len(batch) == 0:
        return mask

    free = np.zeros(spec.dims, dtype=np.uint8)
    _kernels.lidar_free_kernel(
        batch.origins, batch.endpoints,
        spec.min_corner[0], spec.min_corner[1], spec.min_corner[2],
        spec.voxel_size, occ.state, free,
    )
    values = mask.values
    values[free == 1] = int(LidarVisibility.OBSERVED_FREE)

    idx, in_bounds = world_to_voxel_array(spec, batch.endpoints)
    idx = idx[in_bounds]
    values[idx[:, 0], idx[:, 1], idx[:, 2]] = int(LidarVisibility.OBSERVED_OCCUPIED)
    return mask


def camera_visibility(
    spec: GridSpec,
    occ: OccGrid,
    cameras: Sequence[Camera],
    ray_log: Optional[list] = None,
) -> VisibilityMask:
    """Camera visibility mask by casting rays to occupied voxel centers.

    For each camera, every OCCUPIED voxel whose center projects inside
    the image with positive depth receives a ray from the camera
    center; traversed cells up to and including the first occupied cell
    become OBSERVED. Masks from multiple cameras merge by union.

    When ``ray_log`` is a list, one ``(camera_id, targets, cells,
    offsets)`` tuple per camera is appended, recording exactly which
    cells each cast ray marked (CSR layout); this is the hook used by
    the occlusion-soundness checks.
    """
    if occ.spec != spec:
        raise SpecMismatchError("occupancy grid spec differs from target spec")
    mask = VisibilityMask.unobserved(spec, MaskKind.CAMERA)

    occupied = np.argwhere(occ.state == VoxelState.OCCUPIED)
    if occupied.size == 0 or not cameras:
        return mask
    centers = voxel_centers(spec, occupied)

    for camera in cameras:
        _, _, in_image = project_points(camera, centers)
        targets = centers[in_image]
        if targets.shape[0] == 0:
            continue
        origin = camera.extrinsics.translation
        if ray_log is None:
            _kernels.camera_observe_kernel(
                origin[0], origin[1], origin[2],
                np.ascontiguousarray(targets),
                spec.min_corner[0], spec.min_corner[1], spec.min_corner[2],
                spec.voxel_size, occ.state, mask.values,
            )
        else:
            cells, offsets = _kernels.camera_observe_logged(
                origin[0], origin[1], origin[2],
                np.ascontiguousarray(targets),
                spec.min_corner[0], spec.min_corner[1], spec.min_corner[2],
                spec.voxel_size, occ.state, mask.values,
            )
            ray_log.append((camera.camera_id, targets, cells, offsets))
    return mask


def finalize_masks(lidar: VisibilityMask, camera: VisibilityMask) -> VisibilityMask:
    """Joint evaluation mask: LiDAR-observed AND camera-observed."""
    if lidar.spec != camera.spec:
        raise SpecMismatchError("lidar and camera masks have different specs")
    joint = (
        (lidar.values != LidarVisibility.UNOBSERVED)
        & (camera.values == CameraVisibility.OBSERVED)
    )
    return VisibilityMask(lidar.spec, joint.astype(np.uint8), MaskKind.JOINT)


def apply_lidar_visibility(occ: OccGrid, mask: VisibilityMask) -> OccGrid:
    """Fold the LiDAR mask into the grid: observed-free voxels become FREE.

    OCCUPIED voxels are untouched (they are never observed-free);
    everything else stays UNOBSERVED.
    """
    if occ.spec != mask.spec:
        raise SpecMismatchError("grid and mask specs differ")
    if mask.kind != MaskKind.LIDAR:
        raise ValidationError(f"expected a lidar mask, got {mask.kind}")
    state = occ.state.copy()
    sem = occ.semantics.copy()
    free = (mask.values == LidarVisibility.OBSERVED_FREE) & (state != VoxelState.OCCUPIED)
    state[free] = int(VoxelState.FREE)
    sem[free] = NO_CLASS
    return OccGrid(occ.spec, state, sem)


__all__ = [
    "CameraVisibility",
    "LidarVisibility",
    "MaskKind",
    "Ray",
    "RayBatch",
    "RayKind",
    "VisibilityMask",
    "apply_lidar_visibility",
    "camera_visibility",
    "finalize_masks",
    "lidar_visibility",
    "traverse_ray",
    "traverse_rays",
]

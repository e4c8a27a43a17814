"""Dense semantic occupancy grids over a uniform voxel lattice.

Cells are half-open along every axis: a point exactly on the max face
of the grid is out of bounds, and a point on an interior cell boundary
belongs to the upper cell. ``FREE`` is never produced here; it is
exclusively a visibility outcome (sparse returns would otherwise
mislabel unscanned voxels as free).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .geom import UNLABELED, Frame, PointCloud

NO_CLASS = 255  # semantics sentinel for voxels that are not OCCUPIED

_SPEC_TOL = 1e-6


class VoxelState(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNOBSERVED = 2


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Axis-aligned uniform voxel grid geometry.

    ``dims[i]`` must equal ``round((max - min) / voxel_size)`` with the
    product matching the range to within 1e-6 m per axis.
    """

    min_corner: np.ndarray
    max_corner: np.ndarray
    voxel_size: float
    dims: Tuple[int, int, int]

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValidationError("grid corners must be length-3")
        if self.voxel_size <= 0:
            raise ValidationError(f"voxel_size must be positive, got {self.voxel_size}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValidationError(f"dims must be 3 positive integers, got {self.dims}")
        for i in range(3):
            extent = hi[i] - lo[i]
            if dims[i] != round(extent / self.voxel_size):
                raise ValidationError(
                    f"dims[{i}]={dims[i]} != round(({hi[i]}-{lo[i]})/{self.voxel_size})"
                )
            if abs(dims[i] * self.voxel_size - extent) > _SPEC_TOL:
                raise ValidationError(
                    f"voxel_size {self.voxel_size} does not tile axis {i} "
                    f"extent {extent} (residual > {_SPEC_TOL})"
                )
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_range(cls, min_corner, max_corner, voxel_size: float) -> "GridSpec":
        lo = np.asarray(min_corner, dtype=np.float64)
        hi = np.asarray(max_corner, dtype=np.float64)
        dims = tuple(int(round((hi[i] - lo[i]) / voxel_size)) for i in range(3))
        return cls(lo, hi, voxel_size, dims)

    @classmethod
    def waymo(cls, voxel_size: float = 0.4) -> "GridSpec":
        """x, y in [-40, 40] m, z in [-5, 7.8] m; (200, 200, 32) at 0.4 m."""
        return cls.from_range((-40.0, -40.0, -5.0), (40.0, 40.0, 7.8), voxel_size)

    @classmethod
    def nuscenes(cls, voxel_size: float = 0.4) -> "GridSpec":
        """x, y in [-40, 40] m, z in [-1, 5.4] m; (200, 200, 16) at 0.4 m."""
        return cls.from_range((-40.0, -40.0, -1.0), (40.0, 40.0, 5.4), voxel_size)

    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.voxel_size == other.voxel_size
            and np.array_equal(self.min_corner, other.min_corner)
            and np.array_equal(self.max_corner, other.max_corner)
        )


def world_to_voxel(spec: GridSpec, point: Sequence[float]) -> Optional[Tuple[int, int, int]]:
    """Voxel index containing a point, or None when out of bounds.

    Cells are half-open, so a coordinate exactly on the grid's max face
    is out of bounds.
    """
    idx, ok = world_to_voxel_array(spec, np.asarray(point, dtype=np.float64)[None, :])
    if not ok[0]:
        return None
    return (int(idx[0, 0]), int(idx[0, 1]), int(idx[0, 2]))


def world_to_voxel_array(spec: GridSpec, points: np.ndarray):
    """Vectorized ``world_to_voxel``: (indices (N, 3) int64, in_bounds (N,) bool)."""
    points = np.asarray(points, dtype=np.float64)
    rel = (points - spec.min_corner) / spec.voxel_size
    idx = np.floor(rel).astype(np.int64)
    dims = np.asarray(spec.dims, dtype=np.int64)
    in_bounds = np.all((idx >= 0) & (idx < dims), axis=1)
    return idx, in_bounds


def voxel_center(spec: GridSpec, index: Sequence[int]) -> np.ndarray:
    """Geometric center of a cell; raises for out-of-range indices."""
    idx = np.asarray(index, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= np.asarray(spec.dims)):
        raise ValidationError(f"voxel index {tuple(idx)} outside dims {spec.dims}")
    return spec.min_corner + (idx + 0.5) * spec.voxel_size


def voxel_centers(spec: GridSpec, indices: np.ndarray) -> np.ndarray:
    """Centers for an (N, 3) index array (no bounds check)."""
    return spec.min_corner + (np.asarray(indices, dtype=np.float64) + 0.5) * spec.voxel_size


def all_voxel_centers(spec: GridSpec) -> np.ndarray:
    """Centers of every cell, shape (nx*ny*nz, 3) in C order (x-major)."""
    nx, ny, nz = spec.dims
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
    return voxel_centers(spec, idx)


@dataclass
class OccGrid:
    """Per-voxel occupancy state plus semantics for occupied voxels.

    ``semantics`` is ``NO_CLASS`` everywhere the state is not OCCUPIED.
    """

    spec: GridSpec
    state: np.ndarray  # uint8, VoxelState values
    semantics: np.ndarray  # uint8, class id or NO_CLASS

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.uint8)
        self.semantics = np.asarray(self.semantics, dtype=np.uint8)
        if self.state.shape != self.spec.dims or self.semantics.shape != self.spec.dims:
            raise ValidationError(
                f"grid arrays {self.state.shape}/{self.semantics.shape} "
                f"do not match dims {self.spec.dims}"
            )

    @classmethod
    def empty(cls, spec: GridSpec, state: VoxelState = VoxelState.UNOBSERVED) -> "OccGrid":
        return cls(
            spec,
            np.full(spec.dims, int(state), dtype=np.uint8),
            np.full(spec.dims, NO_CLASS, dtype=np.uint8),
        )

    def occupied_mask(self) -> np.ndarray:
        return self.state == VoxelState.OCCUPIED

    def validate(self) -> None:
        occupied = self.occupied_mask()
        if np.any(self.semantics[~occupied] != NO_CLASS):
            raise ValidationError("semantics set on a non-OCCUPIED voxel")
        if np.any(self.semantics[occupied] == NO_CLASS):
            raise ValidationError("OCCUPIED voxel without a semantic class")


def voxelize(
    cloud: PointCloud,
    spec: GridSpec,
    min_points: int = 1,
    go_class: Optional[int] = None,
) -> OccGrid:
    """Map a labeled world-frame cloud onto an occupancy grid.

    Each in-bounds point votes for its voxel with its class; a voxel
    containing at least ``min_points`` points becomes OCCUPIED with the
    majority class (ties go to the smallest class id). Everything else
    stays UNOBSERVED. Unlabeled points take the general-object class,
    which must then be supplied via ``go_class``.
    """
    if cloud.frame != Frame.WORLD:
        raise ValidationError(f"voxelize expects a world-frame cloud, got {cloud.frame}")
    if min_points < 1:
        raise ValidationError(f"min_points must be >= 1, got {min_points}")

    labels = cloud.labels_or_unlabeled().astype(np.int64)
    if np.any(labels == UNLABELED):
        if go_class is None:
            raise ValidationError("cloud has unlabeled points; go_class is required")
        labels = np.where(labels == UNLABELED, go_class, labels)
    if labels.size and (labels.min() < 0 or labels.max() >= NO_CLASS):
        raise ValidationError(f"class ids must lie in [0, {NO_CLASS}), got range "
                              f"[{labels.min()}, {labels.max()}]")

    grid = OccGrid.empty(spec)
    idx, in_bounds = world_to_voxel_array(spec, cloud.points)
    if not np.any(in_bounds):
        return grid
    idx = idx[in_bounds]
    labels = labels[in_bounds]

    nx, ny, nz = spec.dims
    linear = (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]

    # One count per (voxel, class) pair; winner = max count, then smallest id.
    pair = linear * np.int64(NO_CLASS) + labels
    pair_ids, pair_counts = np.unique(pair, return_counts=True)
    pair_voxel = pair_ids // NO_CLASS
    pair_class = pair_ids % NO_CLASS
    order = np.lexsort((pair_class, -pair_counts, pair_voxel))
    pair_voxel, pair_class, pair_counts = (
        pair_voxel[order], pair_class[order], pair_counts[order],
    )
    first = np.ones(len(pair_voxel), dtype=bool)
    first[1:] = pair_voxel[1:] != pair_voxel[:-1]
    winner_voxel = pair_voxel[first]
    winner_class = pair_class[first]

    totals = np.bincount(
        np.searchsorted(winner_voxel, pair_voxel), weights=pair_counts.astype(np.float64)
    ).astype(np.int64)
    keep = totals >= min_points
    winner_voxel, winner_class = winner_voxel[keep], winner_class[keep]

    state = grid.state.reshape(-1)
    sem = grid.semantics.reshape(-1)
    state[winner_voxel] = VoxelState.OCCUPIED
    sem[winner_voxel] = winner_class.astype(np.uint8)
    return grid


__all__ = [
    "GridSpec",
    "NO_CLASS",
    "OccGrid",
    "VoxelState",
    "all_voxel_centers",
    "voxel_center",
    "voxel_centers",
    "voxelize",
    "world_to_voxel",
    "world_to_voxel_array",
]

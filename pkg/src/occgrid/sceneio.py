"""Bit-exact persistence for scenes, grids, and masks.

All binary formats are little-endian with a 4-byte magic prefix, a
version byte, and a trailing 64-bit checksum (CRC-32 zero-extended)
over every preceding byte. Grid bodies are two bytes per voxel
(state, class), laid out x-major, then y, then z; masks are one byte
per voxel. Scene manifests are JSON (human-debuggable), point payloads
are float32 binary. See docs/formats.md for the full layout.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .aggregation import FrameBundle
from .errors import (
    ChecksumMismatchError,
    CorruptPayloadError,
    DimensionOverflowError,
    FormatError,
    ManifestError,
    MissingPayloadError,
    SizeMismatchError,
    ValidationError,
)
from .geom import Box3D, CameraMount, Frame, PointCloud, Pose
from .visibility import MaskKind, VisibilityMask
from .voxelizer import GridSpec, OccGrid

MAGIC_SCENE = b"OC3S"
MAGIC_GRID = b"OC3G"
MAGIC_MASK = b"OC3M"
FORMAT_VERSION = 1
MAX_VOXELS = 2**33  # dimension-overflow guard for grid/mask headers

_MASK_KIND_CODE = {MaskKind.LIDAR: 1, MaskKind.CAMERA: 2, MaskKind.JOINT: 3}
_MASK_CODE_KIND = {v: k for k, v in _MASK_KIND_CODE.items()}


@dataclass(frozen=True)
class Ontology:
    """Dense class table; ``go_id`` designates the general-object class."""

    classes: Tuple[str, ...]
    go_id: int

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ValidationError("ontology needs at least one class")
        if not 0 <= self.go_id < len(self.classes):
            raise ValidationError(f"go_id {self.go_id} outside ontology")


@dataclass
class SceneBundle:
    """A scene directory in memory: manifest fields plus frame payloads."""

    scene_id: str
    ontology: Ontology
    lidar_extrinsic: Pose
    cameras: Tuple[CameraMount, ...]
    frames: Tuple[FrameBundle, ...]

    def __post_init__(self):
        self.cameras = tuple(self.cameras)
        self.frames = tuple(self.frames)
        stamps = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValidationError("frame timestamps must be strictly increasing")

    def keyframes(self) -> Tuple[FrameBundle, ...]:
        return tuple(f for f in self.frames if f.is_keyframe)


def _checksum(body: bytes) -> bytes:
    return struct.pack("<Q", zlib.crc32(body))


def _check_trailer(raw: bytes, what: str, magic: bytes) -> bytes:
    if raw[:4] != magic:
        raise FormatError(f"bad magic {raw[:4]!r}, expected {magic!r}")
    if len(raw) < 12:
        raise CorruptPayloadError(f"{what} shorter than its checksum", len(raw))
    body, trailer = raw[:-8], raw[-8:]
    if _checksum(body) != trailer:
        raise ChecksumMismatchError(f"{what} checksum mismatch")
    return body


def write_points_payload(path: Union[str, Path], cloud: PointCloud) -> None:
    """Write one frame's points (float32) and optional labels (int16)."""
    flags = 1 if cloud.labels is not None else 0
    header = MAGIC_SCENE + struct.pack("<BBHQ", FORMAT_VERSION, flags, 0, len(cloud))
    body = header + np.ascontiguousarray(cloud.points, dtype="<f4").tobytes()
    if cloud.labels is not None:
        body += np.ascontiguousarray(cloud.labels, dtype="<i2").tobytes()
    Path(path).write_bytes(body + _checksum(body))


def read_points_payload(path: Union[str, Path], frame: Frame = Frame.SENSOR) -> PointCloud:
    raw = Path(path).read_bytes()
    body = _check_trailer(raw, f"payload {Path(path).name}", MAGIC_SCENE)
    version, flags, _, count = struct.unpack("<BBHQ", body[4:16])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported payload version {version}")
    coords_end = 16 + count * 12
    labels_end = coords_end + (count * 2 if flags & 1 else 0)
    if len(body) != labels_end:
        raise CorruptPayloadError(
            f"payload body has {len(body)} bytes, expected {labels_end}",
            min(len(body), labels_end),
        )
    points = np.frombuffer(body[16:coords_end], dtype="<f4").reshape(count, 3)
    labels = None
    if flags & 1:
        labels = np.frombuffer(body[coords_end:labels_end], dtype="<i2")
    return PointCloud(points.astype(np.float64), labels, frame)


def _pose_to_json(pose: Pose) -> dict:
    return {
        "rotation": [[float(v) for v in row] for row in pose.rotation],
        "translation": [float(v) for v in pose.translation],
    }


def _pose_from_json(obj: dict, timestamp: int = 0) -> Pose:
    try:
        pose = Pose(np.asarray(obj["rotation"]), np.asarray(obj["translation"]), timestamp)
    except (KeyError, TypeError, ValidationError) as exc:
        raise ManifestError(f"bad pose entry: {exc}") from exc
    return pose


def _box_to_json(box: Box3D) -> dict:
    return {
        "center": [float(v) for v in box.center],
        "size": [float(v) for v in box.size],
        "yaw": float(box.yaw),
        "class_id": int(box.class_id),
        "track_id": box.track_id,
    }


def _payload_name(index: int) -> str:
    return f"frames/{index:06d}.oc3s"


def write_scene(path: Union[str, Path], bundle: SceneBundle) -> None:
    """Persist a scene as manifest.json plus per-frame binary payloads."""
    root = Path(path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    frames_json = []
    for i, frame in enumerate(bundle.frames):
        name = _payload_name(i)
        write_points_payload(root / name, frame.lidar_cloud)
        frames_json.append(
            {
                "timestamp": int(frame.timestamp),
                "is_keyframe": bool(frame.is_keyframe),
                "payload": name,
                "ego_pose": _pose_to_json(frame.ego_pose),
                "boxes": [_box_to_json(b) for b in frame.boxes],
            }
        )
    manifest = {
        "format": "occgrid-scene",
        "version": FORMAT_VERSION,
        "scene_id": bundle.scene_id,
        "ontology": {"classes": list(bundle.ontology.classes), "go_id": bundle.ontology.go_id},
        "calibration": {
            "lidar_extrinsic": _pose_to_json(bundle.lidar_extrinsic),
            "cameras": [
                {
                    "camera_id": cam.camera_id,
                    "intrinsics": [[float(v) for v in row] for row in cam.intrinsics],
                    "mount": _pose_to_json(cam.mount),
                    "image_size": [int(cam.image_size[0]), int(cam.image_size[1])],
                }
                for cam in bundle.cameras
            ],
        },
        "frames": frames_json,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_scene(path: Union[str, Path]) -> SceneBundle:
    """Load a scene directory; raises distinct errors for missing files,
    truncated payloads, checksum mismatches, and schema violations."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != "occgrid-scene":
        raise ManifestError(f"not a scene manifest: format={manifest.get('format')!r}")
    if manifest.get("version") != FORMAT_VERSION:
        raise ManifestError(f"unsupported scene version {manifest.get('version')!r}")

    try:
        ontology = Ontology(tuple(manifest["ontology"]["classes"]), int(manifest["ontology"]["go_id"]))
        calibration = manifest["calibration"]
        lidar_extrinsic = _pose_from_json(calibration["lidar_extrinsic"])
        cameras = tuple(
            CameraMount(
                cam["camera_id"],
                np.asarray(cam["intrinsics"], dtype=np.float64),
                _pose_from_json(cam["mount"]),
                (int(cam["image_size"][0]), int(cam["image_size"][1])),
            )
            for cam in calibration["cameras"]
        )
        frame_entries = manifest["frames"]
    except (KeyError, TypeError, ValidationError) as exc:
        raise ManifestError(f"manifest schema violation: {exc}") from exc

    frames = []
    for entry in frame_entries:
        try:
            ts = int(entry["timestamp"])
            payload = entry["payload"]
            is_key = bool(entry["is_keyframe"])
            ego_pose = _pose_from_json(entry["ego_pose"], ts)
            boxes = tuple(
                Box3D(
                    np.asarray(b["center"], dtype=np.float64),
                    np.asarray(b["size"], dtype=np.float64),
                    float(b["yaw"]),
                    int(b["class_id"]),
                    str(b["track_id"]),
                    ts,
                )
                for b in entry["boxes"]
            )
        except (KeyError, TypeError, ValidationError) as exc:
            raise ManifestError(f"manifest schema violation in frame: {exc}") from exc
        payload_path = root / payload
        if not payload_path.is_file():
            raise MissingPayloadError(f"frame {ts}: payload {payload} is missing")
        cloud = read_points_payload(payload_path, Frame.SENSOR)
        frames.append(
            FrameBundle(
                timestamp=ts,
                lidar_cloud=cloud,
                ego_pose=ego_pose,
                lidar_extrinsic=Pose(lidar_extrinsic.rotation, lidar_extrinsic.translation, ts),
                boxes=boxes,
                is_keyframe=is_key,
            )
        )
    try:
        return SceneBundle(manifest["scene_id"], ontology, lidar_extrinsic, cameras, tuple(frames))
    except ValidationError as exc:
        raise ManifestError(str(exc)) from exc


def _grid_header(magic: bytes, kind: int, spec: GridSpec) -> bytes:
    return (
        magic
        + struct.pack("<BBH", FORMAT_VERSION, kind, 0)
        + struct.pack("<3d", *spec.min_corner)
        + struct.pack("<3d", *spec.max_corner)
        + struct.pack("<d", spec.voxel_size)
        + struct.pack("<3I", *spec.dims)
        + struct.pack("<I", 0)
    )


_HEADER_LEN = 80


def _parse_grid_header(body: bytes, what: str):
    if len(body) < _HEADER_LEN:
        raise CorruptPayloadError(f"{what} header truncated", len(body))
    version, kind, _ = struct.unpack("<BBH", body[4:8])
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported {what} version {version}")
    min_corner = struct.unpack("<3d", body[8:32])
    max_corner = struct.unpack("<3d", body[32:56])
    (voxel_size,) = struct.unpack("<d", body[56:64])
    dims = struct.unpack("<3I", body[64:76])
    if int(dims[0]) * int(dims[1]) * int(dims[2]) > MAX_VOXELS:
        raise DimensionOverflowError(f"{what} dims {dims} exceed {MAX_VOXELS} voxels")
    try:
        spec = GridSpec(np.asarray(min_corner), np.asarray(max_corner), voxel_size, dims)
    except ValidationError as exc:
        raise FormatError(f"{what} header holds an invalid grid spec: {exc}") from exc
    return spec, kind


def write_grid(path: Union[str, Path], grid: OccGrid) -> None:
    """Write an occupancy grid (state, class interleaved per voxel)."""
    body = _grid_header(MAGIC_GRID, 0, grid.spec) + np.stack(
        [grid.state, grid.semantics], axis=-1
    ).astype(np.uint8).tobytes()
    Path(path).write_bytes(body + _checksum(body))


def read_grid(path: Union[str, Path]) -> OccGrid:
    raw = Path(path).read_bytes()
    body = _check_trailer(raw, f"grid {Path(path).name}", MAGIC_GRID)
    spec, _ = _parse_grid_header(body, "grid")
    expected = _HEADER_LEN + 2 * spec.voxel_count
    if len(body) != expected:
        raise SizeMismatchError(
            f"grid body has {len(body)} bytes, expected {expected} for dims {spec.dims}"
        )
    packed = np.frombuffer(body[_HEADER_LEN:], dtype=np.uint8).reshape(*spec.dims, 2)
    return OccGrid(spec, packed[..., 0].copy(), packed[..., 1].copy())


def write_mask(path: Union[str, Path], mask: VisibilityMask) -> None:
    body = _grid_header(MAGIC_MASK, _MASK_KIND_CODE[mask.kind], mask.spec) + mask.values.astype(
        np.uint8
    ).tobytes()
    Path(path).write_bytes(body + _checksum(body))


def read_mask(path: Union[str, Path]) -> VisibilityMask:
    raw = Path(path).read_bytes()
    body = _check_trailer(raw, f"mask {Path(path).name}", MAGIC_MASK)
    spec, kind_code = _parse_grid_header(body, "mask")
    if kind_code not in _MASK_CODE_KIND:
        raise FormatError(f"unknown mask kind code {kind_code}")
    expected = _HEADER_LEN + spec.voxel_count
    if len(body) != expected:
        raise SizeMismatchError(
            f"mask body has {len(body)} bytes, expected {expected} for dims {spec.dims}"
        )
    values = np.frombuffer(body[_HEADER_LEN:], dtype=np.uint8).reshape(spec.dims)
    return VisibilityMask(spec, values.copy(), _MASK_CODE_KIND[kind_code])


def read_voxel_file(path: Union[str, Path]):
    """Dispatch on magic: returns an OccGrid or a VisibilityMask."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC_GRID:
        return read_grid(path)
    if magic == MAGIC_MASK:
        return read_mask(path)
    raise FormatError(f"unrecognized magic {magic!r} in {path}")


__all__ = [
    "FORMAT_VERSION",
    "MAGIC_GRID",
    "MAGIC_MASK",
    "MAGIC_SCENE",
    "Ontology",
    "SceneBundle",
    "read_grid",
    "read_mask",
    "read_points_payload",
    "read_scene",
    "read_voxel_file",
    "write_grid",
    "write_mask",
    "write_points_payload",
    "write_scene",
]

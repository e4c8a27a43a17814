"""Synthetic scene oracle: analytic scenes, simulated LiDAR, exact GT.

Scenes are unions of box primitives (a plane-slab is just an
axis-aligned box). LiDAR returns come from exact ray/box intersection,
so every simulated point lies on a primitive surface; analytic ground
truth marks a voxel occupied iff its center is inside a primitive at
the frame time. Identical script + seed reproduces byte-identical
output; optional range noise uses counter-based Philox streams keyed by
(seed, frame), one draw per beam in fixed beam order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .aggregation import FrameBundle
from .errors import ValidationError
from .geom import (
    Box3D,
    CameraMount,
    Frame,
    PointCloud,
    Pose,
    project_points,
    rot_z,
    normalize_angle,
    se3_compose,
    se3_invert,
)
from .sceneio import Ontology, SceneBundle
from .visibility import CameraVisibility, MaskKind, VisibilityMask
from .voxelizer import (
    NO_CLASS,
    GridSpec,
    OccGrid,
    VoxelState,
    all_voxel_centers,
    world_to_voxel_array,
)

_HIT_EPS = 1e-9
# Returns are nudged this far along the ray into the surface so that
# box-containment of points lying exactly on a box face never depends
# on rounding; stays below the 1e-9 surface-consistency bound.
_SURFACE_PUSH = 5e-10


@dataclass(frozen=True)
class Primitive:
    """Box-shaped scene element, optionally moving.

    Motion is a constant world-frame velocity plus a constant yaw rate
    about the box center. Moving primitives must carry a track id; they
    are the ones that emit annotation boxes.
    """

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    class_id: int
    yaw: float = 0.0
    track_id: Optional[str] = None
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_rate: float = 0.0
    shape: str = "box"

    def __post_init__(self):
        if self.shape not in ("box", "plane-slab"):
            raise ValidationError(f"unknown primitive shape {self.shape!r}")
        if any(s <= 0 for s in self.size):
            raise ValidationError("primitive size must be positive")
        if self.is_dynamic and self.track_id is None:
            raise ValidationError("moving primitives need a track_id")

    @classmethod
    def plane_slab(cls, min_corner, max_corner, class_id: int) -> "Primitive":
        lo = np.asarray(min_corner, dtype=np.float64)
        hi = np.asarray(max_corner, dtype=np.float64)
        return cls(
            center=tuple((lo + hi) / 2.0),
            size=tuple(hi - lo),
            class_id=class_id,
            shape="plane-slab",
        )

    @property
    def is_dynamic(self) -> bool:
        return any(v != 0.0 for v in self.velocity) or self.yaw_rate != 0.0

    def pose_at(self, t_seconds: float) -> Tuple[np.ndarray, float]:
        center = np.asarray(self.center) + np.asarray(self.velocity) * t_seconds
        return center, normalize_angle(self.yaw + self.yaw_rate * t_seconds)

    def box_at(self, t_seconds: float, timestamp: int) -> Box3D:
        if self.track_id is None:
            raise ValidationError("primitive has no track_id")
        center, yaw = self.pose_at(t_seconds)
        return Box3D(center, np.asarray(self.size), yaw, self.class_id,
                     self.track_id, timestamp)


@dataclass(frozen=True)
class LidarModel:
    """Spinning-LiDAR beam pattern: a full azimuth sweep per elevation."""

    azimuth_count: int
    elevations: Tuple[float, ...]
    max_range: float
    mount: Pose = field(default_factory=Pose.identity)
    range_noise_sigma: float = 0.0

    def beam_directions(self) -> np.ndarray:
        """Unit direction per beam in the sensor frame, elevation-major order."""
        azimuths = 2.0 * np.pi * np.arange(self.azimuth_count) / self.azimuth_count
        elev = np.asarray(self.elevations, dtype=np.float64)
        cos_e, sin_e = np.cos(elev), np.sin(elev)
        dirs = np.empty((len(elev) * self.azimuth_count, 3))
        for i in range(len(elev)):
            block = slice(i * self.azimuth_count, (i + 1) * self.azimuth_count)
            dirs[block, 0] = cos_e[i] * np.cos(azimuths)
            dirs[block, 1] = cos_e[i] * np.sin(azimuths)
            dirs[block, 2] = sin_e[i]
        return dirs


@dataclass(frozen=True)
class EgoTrajectory:
    """Scripted ego motion: straight line or an orbit, evaluated exactly."""

    mode: str = "linear"  # "linear" or "orbit"
    start: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_rate: float = 0.0
    orbit_center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    orbit_radius: float = 0.0
    orbit_rate: float = 0.0  # rad/s
    orbit_phase: float = 0.0

    def pose_at(self, t_seconds: float, timestamp: int) -> Pose:
        if self.mode == "linear":
            pos = np.asarray(self.start) + np.asarray(self.velocity) * t_seconds
            yaw = normalize_angle(self.yaw + self.yaw_rate * t_seconds)
            return Pose(rot_z(yaw), pos, timestamp)
        if self.mode == "orbit":
            theta = self.orbit_phase + self.orbit_rate * t_seconds
            pos = np.asarray(self.orbit_center) + self.orbit_radius * np.array(
                [math.cos(theta), math.sin(theta), 0.0]
            )
            yaw = normalize_angle(theta + math.pi / 2.0)  # tangent heading
            return Pose(rot_z(yaw), pos, timestamp)
        raise ValidationError(f"unknown trajectory mode {self.mode!r}")


@dataclass(frozen=True)
class SceneScript:
    """Complete description of a synthetic scene and its sensors."""

    grid: GridSpec
    primitives: Tuple[Primitive, ...]
    lidar: LidarModel
    cameras: Tuple[CameraMount, ...]
    ego: EgoTrajectory
    frame_count: int
    frame_period_us: int
    class_names: Tuple[str, ...]
    go_class: int
    keyframe_every: int = 1
    label_keyframes_only: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.frame_count < 1 or self.frame_period_us < 1:
            raise ValidationError("frame_count and frame_period_us must be >= 1")
        if self.keyframe_every < 1:
            raise ValidationError("keyframe_every must be >= 1")
        if not 0 <= self.go_class < len(self.class_names):
            raise ValidationError("go_class outside class_names")
        for prim in self.primitives:
            if not 0 <= prim.class_id < len(self.class_names):
                raise ValidationError(f"primitive class {prim.class_id} outside ontology")

    def timestamp(self, frame_index: int) -> int:
        return frame_index * self.frame_period_us

    def is_keyframe(self, frame_index: int) -> bool:
        return frame_index % self.keyframe_every == 0


def _ray_box_entry(origins, dirs, center, yaw, size):
    """Entry parameter of rays into one oriented box (inf = miss).

    ``origins`` may be a single point broadcast against (N, 3) dirs.
    Only entries with t > _HIT_EPS count: rays starting inside a box do
    not generate a surface hit.
    """
    rot = rot_z(yaw)
    local_o = (origins - center) @ rot
    local_d = dirs @ rot
    half = np.asarray(size) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (-half - local_o) / local_d
        t_hi = (half - local_o) / local_d
    t_near = np.minimum(t_lo, t_hi)
    t_far = np.maximum(t_lo, t_hi)
    # Zero direction components: inside the slab -> (-inf, inf), else miss.
    zero_d = local_d == 0.0
    if np.any(zero_d):
        inside = (np.abs(local_o) <= half) & zero_d
        t_near = np.where(zero_d, np.where(inside, -np.inf, np.inf), t_near)
        t_far = np.where(zero_d, np.where(inside, np.inf, -np.inf), t_far)
    t_min = t_near.max(axis=-1)
    t_max = t_far.min(axis=-1)
    hit = (t_max >= t_min) & (t_min > _HIT_EPS)
    return np.where(hit, t_min, np.inf)


def exact_boxes(script: SceneScript, frame_index: int) -> list:
    """Ground-truth boxes of all dynamic primitives at a frame."""
    t_s = script.timestamp(frame_index) / 1e6
    ts = script.timestamp(frame_index)
    return [
        prim.box_at(t_s, ts)
        for prim in script.primitives
        if prim.track_id is not None
    ]


def simulate_lidar(script: SceneScript, frame_index: int) -> FrameBundle:
    """Simulate one sweep: exact nearest-hit returns per beam.

    Returns a sensor-frame FrameBundle; annotation boxes and per-point
    labels are attached on keyframes (labels on every frame when
    ``label_keyframes_only`` is off).
    """
    if not 0 <= frame_index < script.frame_count:
        raise ValidationError(f"frame_index {frame_index} outside script")
    ts = script.timestamp(frame_index)
    t_s = ts / 1e6
    ego = script.ego.pose_at(t_s, ts)
    sensor_pose = se3_compose(ego, script.lidar.mount)
    origin = sensor_pose.translation

    dirs = script.lidar.beam_directions() @ sensor_pose.rotation.T
    best_t = np.full(dirs.shape[0], np.inf)
    best_class = np.full(dirs.shape[0], -1, dtype=np.int16)
    for prim in script.primitives:
        center, yaw = prim.pose_at(t_s)
        t_entry = _ray_box_entry(origin, dirs, center, yaw, prim.size)
        closer = t_entry < best_t
        best_t[closer] = t_entry[closer]
        best_class[closer] = prim.class_id

    best_t = best_t + _SURFACE_PUSH
    if script.lidar.range_noise_sigma > 0.0:
        rng = np.random.Generator(np.random.Philox(key=[script.seed, frame_index]))
        best_t = best_t + script.lidar.range_noise_sigma * rng.standard_normal(best_t.shape)

    hit = np.isfinite(best_t) & (best_t <= script.lidar.max_range)
    points_world = origin + dirs[hit] * best_t[hit, None]
    points_sensor = se3_invert(sensor_pose).apply_points(points_world)

    is_key = script.is_keyframe(frame_index)
    labeled = is_key or not script.label_keyframes_only
    labels = best_class[hit] if labeled else None
    boxes = exact_boxes(script, frame_index) if is_key else []
    return FrameBundle(
        timestamp=ts,
        lidar_cloud=PointCloud(points_sensor, labels, Frame.SENSOR),
        ego_pose=ego,
        lidar_extrinsic=script.lidar.mount,
        boxes=tuple(boxes),
        is_keyframe=is_key,
    )


def analytic_occupancy(script: SceneScript, frame_index: int) -> OccGrid:
    """Exact center-point occupancy at a frame: a voxel is OCCUPIED iff
    its center lies inside some primitive (first containing primitive,
    in script order, provides the class); everything else is FREE."""
    t_s = script.timestamp(frame_index) / 1e6
    centers = all_voxel_centers(script.grid)
    classes = np.full(centers.shape[0], -1, dtype=np.int16)
    for prim in script.primitives:
        center, yaw = prim.pose_at(t_s)
        local = (centers - center) @ rot_z(yaw)
        half = np.asarray(prim.size) / 2.0
        inside = np.all((local >= -half) & (local < half), axis=1) & (classes < 0)
        classes[inside] = prim.class_id

    dims = script.grid.dims
    state = np.where(classes >= 0, np.uint8(VoxelState.OCCUPIED), np.uint8(VoxelState.FREE))
    semantics = np.where(classes >= 0, classes.astype(np.uint8), np.uint8(NO_CLASS))
    return OccGrid(script.grid, state.reshape(dims), semantics.reshape(dims))


def analytic_camera_mask(script: SceneScript, frame_index: int) -> VisibilityMask:
    """Exact line-of-sight camera visibility at a frame.

    A voxel is OBSERVED from a camera when its center projects inside
    the image with positive depth and the segment camera -> center
    first enters the primitive set either not at all or at a point
    inside the voxel itself (its own front surface). Unlike the
    pipeline mask, free voxels with clear line of sight count as
    observed regardless of what lies behind them, so on free space this
    is a superset of the cast-ray mask.
    """
    ts = script.timestamp(frame_index)
    t_s = ts / 1e6
    ego = script.ego.pose_at(t_s, ts)
    grid = script.grid
    centers = all_voxel_centers(grid)
    target_idx, _ = world_to_voxel_array(grid, centers)
    observed = np.zeros(centers.shape[0], dtype=bool)

    prim_poses = [prim.pose_at(t_s) for prim in script.primitives]
    for mount in script.cameras:
        camera = mount.at_pose(ego)
        _, _, in_image = project_points(camera, centers)
        cand = np.flatnonzero(in_image)
        if cand.size == 0:
            continue
        origin = camera.extrinsics.translation
        seg = centers[cand] - origin
        t_first = np.full(cand.shape[0], np.inf)
        for prim, (center, yaw) in zip(script.primitives, prim_poses):
            t_entry = _ray_box_entry(origin, seg, center, yaw, prim.size)
            t_first = np.minimum(t_first, t_entry)
        clear = t_first >= 1.0
        entry_pts = origin + seg * np.where(np.isfinite(t_first), t_first, 0.0)[:, None]
        entry_idx, entry_ok = world_to_voxel_array(grid, entry_pts)
        own_face = (
            ~clear & entry_ok & np.all(entry_idx == target_idx[cand], axis=1)
        )
        observed[cand[clear | own_face]] = True

    values = observed.reshape(grid.dims).astype(np.uint8) * np.uint8(CameraVisibility.OBSERVED)
    return VisibilityMask(grid, values, MaskKind.CAMERA)


def analytic_gt(script: SceneScript, frame_index: int):
    """(occupancy grid, merged camera visibility mask) at a frame."""
    return analytic_occupancy(script, frame_index), analytic_camera_mask(script, frame_index)


def simulate_bundle(script: SceneScript, scene_id: str = "synthetic") -> SceneBundle:
    """Simulate every frame of a script into a scene bundle."""
    frames = tuple(simulate_lidar(script, i) for i in range(script.frame_count))
    return SceneBundle(
        scene_id=scene_id,
        ontology=Ontology(script.class_names, script.go_class),
        lidar_extrinsic=script.lidar.mount,
        cameras=script.cameras,
        frames=frames,
    )


def _pose_json(pose: Pose) -> dict:
    return {
        "rotation": [[float(v) for v in row] for row in pose.rotation],
        "translation": [float(v) for v in pose.translation],
    }


def _pose_unjson(obj: dict) -> Pose:
    return Pose(np.asarray(obj["rotation"]), np.asarray(obj["translation"]))


def script_to_json_dict(script: SceneScript) -> dict:
    """Human-readable scene-script config (round-trips exactly)."""
    return {
        "format": "occgrid-scene-script",
        "version": 1,
        "grid": {
            "min_corner": [float(v) for v in script.grid.min_corner],
            "max_corner": [float(v) for v in script.grid.max_corner],
            "voxel_size": script.grid.voxel_size,
        },
        "class_names": list(script.class_names),
        "go_class": script.go_class,
        "primitives": [
            {
                "shape": p.shape,
                "center": [float(v) for v in p.center],
                "size": [float(v) for v in p.size],
                "yaw": p.yaw,
                "class_id": p.class_id,
                "track_id": p.track_id,
                "velocity": [float(v) for v in p.velocity],
                "yaw_rate": p.yaw_rate,
            }
            for p in script.primitives
        ],
        "lidar": {
            "azimuth_count": script.lidar.azimuth_count,
            "elevations": [float(v) for v in script.lidar.elevations],
            "max_range": script.lidar.max_range,
            "mount": _pose_json(script.lidar.mount),
            "range_noise_sigma": script.lidar.range_noise_sigma,
        },
        "cameras": [
            {
                "camera_id": cam.camera_id,
                "intrinsics": [[float(v) for v in row] for row in cam.intrinsics],
                "mount": _pose_json(cam.mount),
                "image_size": [int(cam.image_size[0]), int(cam.image_size[1])],
            }
            for cam in script.cameras
        ],
        "ego": {
            "mode": script.ego.mode,
            "start": [float(v) for v in script.ego.start],
            "yaw": script.ego.yaw,
            "velocity": [float(v) for v in script.ego.velocity],
            "yaw_rate": script.ego.yaw_rate,
            "orbit_center": [float(v) for v in script.ego.orbit_center],
            "orbit_radius": script.ego.orbit_radius,
            "orbit_rate": script.ego.orbit_rate,
            "orbit_phase": script.ego.orbit_phase,
        },
        "frame_count": script.frame_count,
        "frame_period_us": script.frame_period_us,
        "keyframe_every": script.keyframe_every,
        "label_keyframes_only": script.label_keyframes_only,
        "seed": script.seed,
    }


def script_from_json_dict(obj: dict) -> SceneScript:
    if obj.get("format") != "occgrid-scene-script":
        raise ValidationError(f"not a scene script: format={obj.get('format')!r}")
    try:
        grid = GridSpec.from_range(
            obj["grid"]["min_corner"], obj["grid"]["max_corner"], obj["grid"]["voxel_size"]
        )
        primitives = tuple(
            Primitive(
                center=tuple(p["center"]),
                size=tuple(p["size"]),
                class_id=int(p["class_id"]),
                yaw=float(p.get("yaw", 0.0)),
                track_id=p.get("track_id"),
                velocity=tuple(p.get("velocity", (0.0, 0.0, 0.0))),
                yaw_rate=float(p.get("yaw_rate", 0.0)),
                shape=p.get("shape", "box"),
            )
            for p in obj["primitives"]
        )
        lidar = LidarModel(
            azimuth_count=int(obj["lidar"]["azimuth_count"]),
            elevations=tuple(obj["lidar"]["elevations"]),
            max_range=float(obj["lidar"]["max_range"]),
            mount=_pose_unjson(obj["lidar"]["mount"]),
            range_noise_sigma=float(obj["lidar"].get("range_noise_sigma", 0.0)),
        )
        cameras = tuple(
            CameraMount(
                cam["camera_id"],
                np.asarray(cam["intrinsics"], dtype=np.float64),
                _pose_unjson(cam["mount"]),
                (int(cam["image_size"][0]), int(cam["image_size"][1])),
            )
            for cam in obj["cameras"]
        )
        ego_obj = obj["ego"]
        ego = EgoTrajectory(
            mode=ego_obj.get("mode", "linear"),
            start=tuple(ego_obj.get("start", (0.0, 0.0, 0.0))),
            yaw=float(ego_obj.get("yaw", 0.0)),
            velocity=tuple(ego_obj.get("velocity", (0.0, 0.0, 0.0))),
            yaw_rate=float(ego_obj.get("yaw_rate", 0.0)),
            orbit_center=tuple(ego_obj.get("orbit_center", (0.0, 0.0, 0.0))),
            orbit_radius=float(ego_obj.get("orbit_radius", 0.0)),
            orbit_rate=float(ego_obj.get("orbit_rate", 0.0)),
            orbit_phase=float(ego_obj.get("orbit_phase", 0.0)),
        )
        return SceneScript(
            grid=grid,
            primitives=primitives,
            lidar=lidar,
            cameras=cameras,
            ego=ego,
            frame_count=int(obj["frame_count"]),
            frame_period_us=int(obj["frame_period_us"]),
            class_names=tuple(obj["class_names"]),
            go_class=int(obj["go_class"]),
            keyframe_every=int(obj.get("keyframe_every", 1)),
            label_keyframes_only=bool(obj.get("label_keyframes_only", True)),
            seed=int(obj.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"scene script schema violation: {exc}") from exc


def _forward_camera(camera_id: str = "cam_front",
                    image_size: Tuple[int, int] = (640, 480),
                    fov_deg: float = 90.0,
                    mount_xyz: Tuple[float, float, float] = (0.3, 0.0, 0.2),
                    mount_yaw: float = 0.0) -> CameraMount:
    """Pinhole camera looking along ego +x (optics frame: z forward, y down)."""
    width, height = image_size
    fx = width / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
    intrinsics = np.array(
        [[fx, 0.0, width / 2.0], [0.0, fx, height / 2.0], [0.0, 0.0, 1.0]]
    )
    # Columns: camera x, y, z axes expressed in the ego frame.
    cam_axes = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    rotation = rot_z(mount_yaw) @ cam_axes
    return CameraMount(camera_id, intrinsics, Pose(rotation, np.asarray(mount_xyz)),
                       (width, height))


def _ring_elevations(sensor_height: float, r_near: float, r_far: float,
                     ground_rings: int, sky_count: int, sky_max_deg: float):
    """Elevation set giving uniform ground-ring spacing plus upper beams.

    The upper fan starts just below the steepest ground ring so there
    is no blind band around the horizon.
    """
    radii = np.linspace(r_near, r_far, ground_rings)
    ground = -np.arctan2(sensor_height, radii)
    sky_start_deg = math.degrees(float(ground.max())) + 0.4
    sky = np.deg2rad(np.linspace(sky_start_deg, sky_max_deg, sky_count))
    return tuple(np.sort(np.concatenate([ground, sky])))


def make_room_script(
    seed: int = 0,
    frame_count: int = 20,
    azimuth_count: int = 1024,
    ground_rings: int = 96,
    sky_beams: int = 24,
    with_crates: bool = True,
) -> SceneScript:
    """Closed static room: thin ground, four thin walls, optional crates.

    Surfaces are deliberately offset from the voxel lattice so that the
    cell a surface point lands in is the same cell whose center lies
    inside the slab; this keeps the simulated returns and the analytic
    center-point ground truth consistent. The ego orbits the room so
    every face gets scanned.
    """
    grid = GridSpec.from_range((-12.8, -12.8, -2.0), (12.8, 12.8, 4.4), 0.4)
    ground_top = -0.5  # inside cell [-0.8, -0.4), above its center -0.6
    wall_top = 2.3     # inside cell [2.0, 2.4), above its center 2.2
    inner = 10.1       # inner wall face, inside cell [10.0, 10.4)
    outer = 10.5       # one voxel layer per wall: next center 10.6 falls outside

    # Ground runs under the walls so the floor strip in front of a wall
    # stays a true positive against the center-point ground truth.
    primitives = [
        Primitive.plane_slab((-outer, -outer, ground_top - 0.4),
                             (outer, outer, ground_top), class_id=0),
        Primitive.plane_slab((inner, -outer, ground_top), (outer, outer, wall_top), 1),
        Primitive.plane_slab((-outer, -outer, ground_top), (-inner, outer, wall_top), 1),
        Primitive.plane_slab((-inner, inner, ground_top), (inner, outer, wall_top), 1),
        Primitive.plane_slab((-inner, -outer, ground_top), (inner, -inner, wall_top), 1),
    ]
    if with_crates:
        rng = np.random.default_rng(seed)
        # Faces at lattice offsets 0.1 / 0.3 so shells match center GT.
        for base in [(3.3, 3.3), (-6.7, 1.3), (1.3, -5.9)]:
            dx, dy = rng.integers(0, 3, size=2) * 0.4
            x0, y0 = base[0] + dx, base[1] + dy
            primitives.append(
                Primitive.plane_slab((x0, y0, ground_top), (x0 + 1.8, y0 + 1.8, 1.1), 2)
            )

    sensor_height_above_ground = 1.7
    ego_z = ground_top + sensor_height_above_ground - 0.2  # mount adds 0.2
    lidar = LidarModel(
        azimuth_count=azimuth_count,
        elevations=_ring_elevations(sensor_height_above_ground, 0.8, 24.0,
                                    ground_rings, sky_beams, 18.0),
        max_range=60.0,
        mount=Pose.from_xyz_yaw(0.0, 0.0, 0.2),
    )
    ego = EgoTrajectory(
        mode="orbit",
        orbit_center=(0.0, 0.0, ego_z),
        orbit_radius=5.5,
        orbit_rate=2.0 * math.pi / frame_count,
        orbit_phase=0.0,
    )
    return SceneScript(
        grid=grid,
        primitives=tuple(primitives),
        lidar=lidar,
        cameras=(_forward_camera(),),
        ego=ego,
        frame_count=frame_count,
        frame_period_us=1_000_000,
        class_names=("ground", "wall", "crate", "general_object"),
        go_class=3,
        keyframe_every=2,
        label_keyframes_only=True,
        seed=seed,
    )


def make_moving_box_script(
    seed: int = 0,
    frame_count: int = 11,
    speed: float = 1.0,
    co_moving_ego: bool = True,
) -> SceneScript:
    """Thin ground plus one rigid box translating through the scene.

    By default the ego travels with the box, keeping the sensor-object
    geometry constant: every sweep then samples the same body points,
    so any canonical-extent growth across frames is pure transform
    error (the no-motion-blur check). Set ``co_moving_ego`` False for a
    stationary observer that watches the box drive past.
    """
    grid = GridSpec.from_range((-12.8, -12.8, -2.0), (12.8, 12.8, 4.4), 0.4)
    ground_top = -0.5
    primitives = (
        Primitive.plane_slab((-10.5, -10.5, ground_top - 0.4),
                             (10.5, 10.5, ground_top), class_id=0),
        Primitive(
            center=(-5.0, 2.1, 0.3),
            size=(3.0, 1.7, 1.5),
            class_id=1,
            track_id="mover_0",
            velocity=(speed, 0.0, 0.0),
        ),
    )
    lidar = LidarModel(
        azimuth_count=512,
        elevations=_ring_elevations(1.7, 0.8, 20.0, 48, 16, 18.0),
        max_range=60.0,
        mount=Pose.from_xyz_yaw(0.0, 0.0, 0.2),
    )
    ego_velocity = (speed, 0.0, 0.0) if co_moving_ego else (0.0, 0.0, 0.0)
    ego = EgoTrajectory(
        mode="linear",
        start=(-5.0, -6.0, ground_top + 1.5),
        yaw=math.pi / 2.0,  # broadside view of the box to the north
        velocity=ego_velocity,
    )
    return SceneScript(
        grid=grid,
        primitives=primitives,
        lidar=lidar,
        cameras=(_forward_camera(),),
        ego=ego,
        frame_count=frame_count,
        frame_period_us=1_000_000,
        class_names=("ground", "vehicle", "general_object"),
        go_class=2,
        keyframe_every=1,
        label_keyframes_only=False,
        seed=seed,
    )


def make_occluder_script(seed: int = 0, frame_count: int = 2) -> SceneScript:
    """Occluder box between the sensor and a far wall, randomized by seed.

    The far wall voxels shadowed by the occluder must end up
    camera-unobserved; the occluder's front face stays observed.
    """
    rng = np.random.default_rng(seed)
    grid = GridSpec.from_range((-12.8, -12.8, -2.0), (12.8, 12.8, 4.4), 0.4)
    ground_top = -0.5
    wall_x = 10.1
    occ_x = float(rng.uniform(3.0, 6.5))
    occ_y = float(rng.uniform(-3.0, 3.0))
    occ_w = float(rng.uniform(1.0, 3.0))
    occ_h = float(rng.uniform(0.8, 2.0))
    primitives = (
        Primitive.plane_slab((-10.5, -10.5, ground_top - 0.4),
                             (10.5, 10.5, ground_top), class_id=0),
        Primitive.plane_slab((wall_x, -10.5, ground_top), (10.5, 10.5, 2.3), 1),
        Primitive(
            center=(occ_x, occ_y, ground_top + occ_h / 2.0),
            size=(0.9, occ_w, occ_h),
            class_id=2,
            yaw=float(rng.uniform(-0.3, 0.3)),
        ),
    )
    lidar = LidarModel(
        azimuth_count=512,
        elevations=_ring_elevations(1.7, 0.8, 20.0, 48, 16, 20.0),
        max_range=60.0,
        mount=Pose.from_xyz_yaw(0.0, 0.0, 0.2),
    )
    # Slight lateral motion so several frames see around the occluder.
    ego = EgoTrajectory(
        mode="linear",
        start=(float(rng.uniform(-7.0, -5.0)), float(rng.uniform(-1.5, 1.5)),
               ground_top + 1.5),
        yaw=0.0,
        velocity=(0.0, float(rng.uniform(-0.5, 0.5)), 0.0),
    )
    return SceneScript(
        grid=grid,
        primitives=primitives,
        lidar=lidar,
        cameras=(_forward_camera(),),
        ego=ego,
        frame_count=frame_count,
        frame_period_us=500_000,
        class_names=("ground", "wall", "crate", "general_object"),
        go_class=3,
        keyframe_every=1,
        label_keyframes_only=False,
        seed=seed,
    )


__all__ = [
    "EgoTrajectory",
    "LidarModel",
    "Primitive",
    "SceneScript",
    "analytic_camera_mask",
    "analytic_gt",
    "analytic_occupancy",
    "exact_boxes",
    "make_moving_box_script",
    "make_occluder_script",
    "make_room_script",
    "script_from_json_dict",
    "script_to_json_dict",
    "simulate_bundle",
    "simulate_lidar",
]

import json
import math

import numpy as np
import pytest

from occgrid.errors import ValidationError
from occgrid.geom import Pose, rot_z
from occgrid.synth import (
    EgoTrajectory,
    LidarModel,
    Primitive,
    SceneScript,
    analytic_camera_mask,
    analytic_occupancy,
    make_moving_box_script,
    make_occluder_script,
    make_room_script,
    script_from_json_dict,
    script_to_json_dict,
    simulate_bundle,
    simulate_lidar,
)
from occgrid.visibility import CameraVisibility
from occgrid.voxelizer import GridSpec, VoxelState, world_to_voxel


def _minimal_script(primitives, elevations=(0.0,), azimuths=360, cameras=(), frames=1,
                    ego=None):
    return SceneScript(
        grid=GridSpec.from_range((-12.8, -12.8, -2.0), (12.8, 12.8, 4.4), 0.4),
        primitives=tuple(primitives),
        lidar=LidarModel(azimuth_count=azimuths, elevations=tuple(elevations), max_range=50.0),
        cameras=tuple(cameras),
        ego=ego or EgoTrajectory(),
        frame_count=frames,
        frame_period_us=1_000_000,
        class_names=("ground", "wall", "general_object"),
        go_class=2,
        label_keyframes_only=False,
    )


def point_to_box_distance(point, center, yaw, size):
    local = np.abs((np.asarray(point) - center) @ rot_z(yaw))
    excess = np.maximum(local - np.asarray(size) / 2.0, 0.0)
    return float(np.linalg.norm(excess))


def test_wall_straight_ahead():
    wall = Primitive(center=(10.0, 0.0, 0.0), size=(0.4, 8.0, 8.0), class_id=1)
    frame = simulate_lidar(_minimal_script([wall]), 0)
    # the azimuth-0 beam points along +x and must return at the wall face
    dists = np.linalg.norm(frame.lidar_cloud.points, axis=1)
    forward = frame.lidar_cloud.points[:, 0] > 9.0
    assert forward.any()
    assert np.min(np.abs(dists[forward] - 9.8)) < 1e-6  # face at 10.0 - 0.2
    assert np.all(frame.lidar_cloud.labels[forward] == 1)


def test_no_intersection_no_return():
    wall = Primitive(center=(10.0, 0.0, 0.0), size=(0.4, 2.0, 2.0), class_id=1)
    script = _minimal_script([wall], elevations=(math.radians(60.0),))
    frame = simulate_lidar(script, 0)
    assert len(frame.lidar_cloud) == 0


def test_moving_box_displacement():
    box = Primitive(center=(8.0, 0.0, 0.5), size=(2.0, 2.0, 1.0), class_id=1,
                    track_id="m0", velocity=(0.0, 2.0, 0.0))
    script = _minimal_script([box], frames=2)
    f0 = simulate_lidar(script, 0)
    f1 = simulate_lidar(script, 1)
    assert np.allclose(f1.boxes[0].center - f0.boxes[0].center, [0.0, 2.0, 0.0])
    # the return displaced with the surface: compare median y of box hits
    y0 = np.median(f0.lidar_cloud.points[:, 1])
    y1 = np.median(f1.lidar_cloud.points[:, 1])
    assert y1 - y0 == pytest.approx(2.0, abs=0.2)


def test_returns_lie_on_surfaces():
    script = make_occluder_script(seed=5)
    frame = simulate_lidar(script, 0)
    world = frame.sensor_to_world().apply_points(frame.lidar_cloud.points)
    t_s = 0.0
    for prim in script.primitives:
        center, yaw = prim.pose_at(t_s)
        on_this = frame.lidar_cloud.labels == prim.class_id
        for p in world[on_this][::37]:
            assert point_to_box_distance(p, center, yaw, prim.size) < 1e-9


def test_simulation_determinism():
    for noise in (0.0, 0.05):
        script_a = make_occluder_script(seed=9)
        if noise:
            script_a = SceneScript(**{**script_a.__dict__,
                                      "lidar": LidarModel(
                                          azimuth_count=script_a.lidar.azimuth_count,
                                          elevations=script_a.lidar.elevations,
                                          max_range=script_a.lidar.max_range,
                                          mount=script_a.lidar.mount,
                                          range_noise_sigma=noise)})
        a = simulate_lidar(script_a, 1)
        b = simulate_lidar(script_a, 1)
        assert a.lidar_cloud.points.tobytes() == b.lidar_cloud.points.tobytes()
        assert a.lidar_cloud.labels.tobytes() == b.lidar_cloud.labels.tobytes()


def test_analytic_empty_script_all_free():
    grid = analytic_occupancy(_minimal_script([]), 0)
    assert np.all(grid.state == VoxelState.FREE)


def test_analytic_lattice_box_is_5x5x5():
    # 2x2x2 m box centered on a cell-corner lattice point: exactly 5^3
    # centers fall inside the half-open extents
    box = Primitive(center=(0.0, 0.0, 0.4), size=(2.0, 2.0, 2.0), class_id=1)
    grid = analytic_occupancy(_minimal_script([box]), 0)
    assert int((grid.state == VoxelState.OCCUPIED).sum()) == 125


def test_analytic_moving_primitive_tracks_time():
    box = Primitive(center=(0.0, 0.0, 0.5), size=(1.9, 1.9, 0.9), class_id=1,
                    track_id="m", velocity=(2.0, 0.0, 0.0))
    script = _minimal_script([box], frames=3)
    occ0 = analytic_occupancy(script, 0)
    occ2 = analytic_occupancy(script, 2)
    x0 = np.argwhere(occ0.state == VoxelState.OCCUPIED)[:, 0].mean()
    x2 = np.argwhere(occ2.state == VoxelState.OCCUPIED)[:, 0].mean()
    assert (x2 - x0) * 0.4 == pytest.approx(4.0, abs=0.2)


def test_analytic_camera_mask_occlusion():
    from occgrid.synth import _forward_camera

    # camera at (-5.7, 0, 1.2), occluder centered at camera height, wall
    # at x = [10.1, 10.5]: the shadow is a sharp silhouette on the wall
    occluder = Primitive(center=(0.0, 0.0, 1.2), size=(0.8, 2.0, 1.2), class_id=2)
    wall = Primitive.plane_slab((10.1, -10.5, -0.5), (10.5, 10.5, 2.3), 1)
    script = _minimal_script(
        [wall, occluder],
        cameras=(_forward_camera(),),
        ego=EgoTrajectory(start=(-6.0, 0.0, 1.0)),
    )
    mask = analytic_camera_mask(script, 0)
    occ = analytic_occupancy(script, 0)

    shadow_idx = world_to_voxel(script.grid, (10.2, 0.2, 1.0))
    assert occ.state[shadow_idx] == VoxelState.OCCUPIED
    assert mask.values[shadow_idx] == CameraVisibility.UNOBSERVED

    clear_idx = world_to_voxel(script.grid, (10.2, 5.0, 1.0))
    assert occ.state[clear_idx] == VoxelState.OCCUPIED
    assert mask.values[clear_idx] == CameraVisibility.OBSERVED

    # free voxel between camera and occluder with clear line of sight
    free_idx = world_to_voxel(script.grid, (-2.0, 0.2, 1.0))
    assert occ.state[free_idx] == VoxelState.FREE
    assert mask.values[free_idx] == CameraVisibility.OBSERVED

    # free voxel directly behind the occluder is shadowed
    behind_idx = world_to_voxel(script.grid, (3.0, 0.2, 1.0))
    assert occ.state[behind_idx] == VoxelState.FREE
    assert mask.values[behind_idx] == CameraVisibility.UNOBSERVED


def test_script_json_round_trip():
    for builder in (make_room_script, make_moving_box_script, make_occluder_script):
        script = builder(seed=4)
        blob = json.dumps(script_to_json_dict(script), sort_keys=True)
        back = script_from_json_dict(json.loads(blob))
        assert json.dumps(script_to_json_dict(back), sort_keys=True) == blob
        a = simulate_lidar(script, 0)
        b = simulate_lidar(back, 0)
        assert a.lidar_cloud.points.tobytes() == b.lidar_cloud.points.tobytes()


def test_bundle_determinism():
    a = simulate_bundle(make_moving_box_script(seed=3, frame_count=3))
    b = simulate_bundle(make_moving_box_script(seed=3, frame_count=3))
    for fa, fb in zip(a.frames, b.frames):
        assert fa.lidar_cloud.points.tobytes() == fb.lidar_cloud.points.tobytes()
        assert fa.boxes == fb.boxes


def test_script_validation():
    with pytest.raises(ValidationError):
        Primitive(center=(0, 0, 0), size=(1, 1, 1), class_id=0, velocity=(1, 0, 0))
    with pytest.raises(ValidationError):
        _minimal_script([Primitive(center=(0, 0, 0), size=(1, 1, 1), class_id=7)])


def test_moving_box_keyframe_schedule():
    script = make_room_script(seed=0, frame_count=4)
    assert script.keyframe_every == 2
    f0 = simulate_lidar(script, 0)
    f1 = simulate_lidar(script, 1)
    assert f0.is_keyframe and f0.lidar_cloud.labels is not None
    assert not f1.is_keyframe and f1.lidar_cloud.labels is None

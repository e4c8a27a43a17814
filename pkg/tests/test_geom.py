import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from occgrid.errors import TrackMismatchError, ValidationError
from occgrid.geom import (
    Box3D,
    Camera,
    Frame,
    PointCloud,
    Pose,
    ProjectionResult,
    box_contains,
    box_contains_points,
    box_interpolate,
    normalize_angle,
    project_to_image,
    rot_z,
    se3_apply,
    se3_compose,
    se3_invert,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)
coords = st.floats(-100.0, 100.0, allow_nan=False)


def random_pose(yaw, pitch, roll, tx, ty, tz):
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
    ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
    rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Pose(rz @ ry @ rx, np.array([tx, ty, tz]))


def test_se3_apply_identity():
    cloud = PointCloud(np.array([[1.0, 2.0, 3.0]]), frame=Frame.SENSOR)
    out = se3_apply(Pose.identity(), cloud, Frame.WORLD)
    np.testing.assert_array_equal(out.points, [[1.0, 2.0, 3.0]])
    assert out.frame == Frame.WORLD


def test_se3_apply_translation():
    pose = Pose(np.eye(3), np.array([0.0, 0.0, 5.0]))
    out = pose.apply_points(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(out, [[1.0, 2.0, 8.0]])


def test_se3_apply_yaw90():
    pose = Pose(rot_z(math.pi / 2), np.zeros(3))
    out = pose.apply_points(np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-9)


def test_se3_apply_preserves_labels():
    cloud = PointCloud(np.zeros((2, 3)), np.array([3, 1]), Frame.SENSOR)
    out = se3_apply(Pose.identity(), cloud, Frame.EGO)
    np.testing.assert_array_equal(out.labels, [3, 1])


def test_se3_compose_identity_and_inverse():
    pose = random_pose(0.3, -0.7, 1.1, 4.0, -2.0, 0.5)
    np.testing.assert_allclose(
        se3_compose(Pose.identity(), pose).rotation, pose.rotation, atol=1e-12
    )
    round_trip = se3_compose(pose, se3_invert(pose))
    np.testing.assert_allclose(round_trip.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(round_trip.translation, np.zeros(3), atol=1e-9)


def test_se3_compose_translations():
    a = Pose(np.eye(3), np.array([1.0, 0.0, 0.0]))
    b = Pose(np.eye(3), np.array([0.0, 1.0, 0.0]))
    np.testing.assert_array_equal(se3_compose(a, b).translation, [1.0, 1.0, 0.0])


def test_pose_validate_rejects_non_orthonormal():
    pose = Pose(np.eye(3) * 1.1, np.zeros(3))
    with pytest.raises(ValidationError):
        pose.validate()


@given(angles, angles, angles, coords, coords, coords, coords, coords, coords)
def test_se3_round_trip_property(yaw, pitch, roll, tx, ty, tz, px, py, pz):
    pose = random_pose(yaw, pitch, roll, tx, ty, tz)
    point = np.array([[px, py, pz]])
    back = se3_invert(pose).apply_points(pose.apply_points(point))
    np.testing.assert_allclose(back, point, atol=1e-9)


def test_box_contains_examples():
    box = Box3D(np.zeros(3), np.array([2.0, 2.0, 2.0]), 0.0, 0, "t0")
    assert box_contains(box, (0.9, 0.0, 0.0))
    assert not box_contains(box, (1.0, 0.0, 0.0))  # half-open boundary
    assert box_contains(box, (-1.0, 0.0, 0.0))

    rotated = Box3D(np.zeros(3), np.array([4.0, 2.0, 2.0]), math.pi / 2, 0, "t1")
    # box frame: x' = world y, so the 4 m extent lies along world y
    assert box_contains(rotated, (0.9, 1.9, 0.0))
    assert not box_contains(rotated, (1.9, 0.9, 0.0))


@given(angles, coords, coords, angles)
def test_box_contains_rigid_invariance(yaw, tx, ty, box_yaw):
    box = Box3D(np.array([1.0, -2.0, 0.5]), np.array([3.0, 2.0, 1.0]), box_yaw, 0, "t")
    points = np.array([[1.2, -1.5, 0.3], [2.4, -2.0, 0.5], [9.0, 0.0, 0.0]])
    before = box_contains_points(box, points)

    pose = Pose(rot_z(yaw), np.array([tx, ty, 0.0]))
    moved_box = Box3D(
        pose.apply_points(box.center[None, :])[0],
        box.size,
        normalize_angle(box.yaw + yaw),
        0,
        "t",
    )
    after = box_contains_points(moved_box, pose.apply_points(points))
    # strict half-open boundaries can flip under rounding; these points are interior
    np.testing.assert_array_equal(before, after)


def _box(yaw, ts, track="car_1", center=(0.0, 0.0, 0.0), size=(4.0, 2.0, 1.5)):
    return Box3D(np.array(center), np.array(size), yaw, 2, track, ts)


def test_box_interpolate_endpoints_exact():
    a = _box(0.37, 0, center=(1.1, 2.2, 3.3))
    b = _box(-2.9, 1_000_000, center=(4.4, 5.5, 6.6), size=(4.5, 2.5, 1.0))
    assert box_interpolate(a, b, 0.0) is a
    assert box_interpolate(a, b, 1.0) is b


def test_box_interpolate_midpoint_yaw():
    a = _box(0.0, 0)
    b = _box(math.pi / 2, 1_000_000)
    mid = box_interpolate(a, b, 0.5)
    assert mid.yaw == pytest.approx(math.pi / 4)
    assert mid.timestamp == 500_000


def test_box_interpolate_wraps_through_pi():
    a = _box(3.0, 0)
    b = _box(-3.0, 1_000_000)
    mid = box_interpolate(a, b, 0.5)
    # arc through +/-pi (length 2*pi - 6 < 6), midpoint lands on pi
    assert abs(mid.yaw) == pytest.approx(math.pi, abs=1e-9)


def test_box_interpolate_track_mismatch():
    with pytest.raises(TrackMismatchError):
        box_interpolate(_box(0, 0, "a"), _box(0, 1, "b"), 0.5)


@given(
    st.floats(-math.pi, math.pi, exclude_min=True),
    st.floats(-math.pi, math.pi, exclude_min=True),
    st.floats(0.0, 1.0),
)
def test_box_interpolate_arc_at_most_pi(yaw_a, yaw_b, alpha):
    a = _box(yaw_a, 0)
    b = _box(yaw_b, 1_000_000)
    mid = box_interpolate(a, b, alpha)
    assert -math.pi < mid.yaw <= math.pi
    traversed = abs(normalize_angle(mid.yaw - a.yaw))
    assert traversed <= math.pi + 1e-12


def _camera(width=100, height=100):
    k = np.array([[100.0, 0.0, 50.0], [0.0, 100.0, 50.0], [0.0, 0.0, 1.0]])
    return Camera(k, Pose.identity(), (width, height))


def test_project_principal_axis():
    proj = project_to_image(_camera(), (0.0, 0.0, 10.0))
    assert proj.outcome == ProjectionResult.IN_IMAGE
    np.testing.assert_allclose(proj.pixel, [50.0, 50.0])
    assert proj.depth == pytest.approx(10.0)


def test_project_behind_camera():
    proj = project_to_image(_camera(), (0.0, 0.0, -1.0))
    assert proj.outcome == ProjectionResult.BEHIND_CAMERA
    assert proj.pixel is None


def test_project_out_of_image():
    proj = project_to_image(_camera(), (1.0, 0.0, 1.0))
    assert proj.outcome == ProjectionResult.OUT_OF_IMAGE
    np.testing.assert_allclose(proj.pixel, [150.0, 50.0])


def test_project_depth_is_camera_z_not_range():
    # camera translated and yawed; depth must be the z coordinate in the
    # camera frame, not the Euclidean distance
    extr = Pose(rot_z(math.pi / 2), np.array([5.0, 0.0, 0.0]))
    cam = Camera(_camera().intrinsics, extr, (100, 100))
    point = np.array([2.0, 7.0, 0.0])
    p_cam = se3_invert(extr).apply_points(point[None, :])[0]
    proj = project_to_image(cam, point)
    assert proj.depth == pytest.approx(p_cam[2])
    assert proj.depth != pytest.approx(np.linalg.norm(point - extr.translation))


def test_camera_invariants():
    with pytest.raises(ValidationError):
        Camera(np.array([[0.0, 0, 50], [0, 100, 50], [0, 0, 1]]), Pose.identity(), (10, 10))
    with pytest.raises(ValidationError):
        Camera(np.array([[100.0, 0, 50], [0, 100, 50], [1, 0, 1]]), Pose.identity(), (10, 10))


def test_normalize_angle_range_and_idempotence():
    assert normalize_angle(math.pi) == math.pi
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(3 * math.pi) == pytest.approx(math.pi)
    for theta in (-3.14, -1.0, 0.0, 1.0, 3.14, math.pi):
        assert normalize_angle(theta) == theta

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from edgecal.geometry import (
    CameraIntrinsics,
    ExtrinsicParams,
    PanoramaGeometry,
    angles_from_rotation,
    cylindrical_project,
    project_to_image,
    rotation_from_angles,
    transform_point,
    wrap_angle,
)
from oracles import rotation_oracle

angle = st.floats(-math.pi, math.pi, allow_nan=False)
coord = st.floats(-50, 50, allow_nan=False)


def test_identity_rotation():
    assert np.allclose(rotation_from_angles(0, 0, 0), np.eye(3), atol=0)


def test_quarter_turn_about_z():
    R = rotation_from_angles(0, 0, math.pi / 2)
    assert np.allclose(R, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_reference_kitti_angles_give_proper_rotation():
    # rotation part of the published KITTI multi-frame mean estimate
    R = rotation_from_angles(0.470, -1.554, 1.100)
    assert abs(np.linalg.det(R) - 1) < 1e-12
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)


def test_non_finite_angle_rejected():
    with pytest.raises(ValueError):
        rotation_from_angles(float("nan"), 0, 0)


@given(angle, angle, angle)
def test_rotation_matches_composition_oracle(rx, ry, rz):
    assert np.allclose(rotation_from_angles(rx, ry, rz), rotation_oracle(rx, ry, rz), atol=1e-12)


def test_rotation_orthonormal_on_1000_random_triples(rng):
    for rx, ry, rz in rng.uniform(-math.pi, math.pi, (1000, 3)):
        R = rotation_from_angles(rx, ry, rz)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-10)
        assert abs(np.linalg.det(R) - 1) < 1e-10


@given(angle, st.floats(-1.5, 1.5), angle)
def test_angles_round_trip_away_from_gimbal_lock(rx, ry, rz):
    R = rotation_from_angles(rx, ry, rz)
    back = angles_from_rotation(R)
    assert np.allclose(rotation_from_angles(*back), R, atol=1e-9)


def test_angles_from_rotation_at_gimbal_lock_reproduces_matrix():
    for ry in (math.pi / 2, -math.pi / 2):
        R = rotation_from_angles(0.3, ry, -0.7)
        assert np.allclose(rotation_from_angles(*angles_from_rotation(R)), R, atol=1e-9)


def test_extrinsics_wrap_angles_into_half_open_interval():
    th = ExtrinsicParams(3 * math.pi, -math.pi, 0.0, 0, 0, 0)
    assert th.rx == pytest.approx(math.pi)
    assert th.ry == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


@pytest.mark.parametrize(
    "theta,p,expected",
    [
        ((0, 0, 0, 0, 0, 0), (1, 2, 3), (1, 2, 3)),
        ((0, 0, 0, 1, 0, 0), (0, 0, 0), (1, 0, 0)),
        ((0, 0, math.pi / 2, 0, 0, 0), (1, 0, 0), (0, 1, 0)),
    ],
)
def test_transform_point_examples(theta, p, expected):
    assert np.allclose(transform_point(theta, p), expected, atol=1e-15)


@given(st.lists(angle, min_size=3, max_size=3), st.lists(coord, min_size=6, max_size=6))
def test_transform_preserves_distances(ang, xyz):
    th = ExtrinsicParams(*ang, 0.5, -1.0, 2.0)
    a, b = np.array(xyz[:3]), np.array(xyz[3:])
    ta, tb = transform_point(th, np.stack([a, b]))
    assert abs(np.linalg.norm(ta - tb) - np.linalg.norm(a - b)) < 1e-9


def test_project_on_optical_axis():
    k = CameraIntrinsics(np.array([[1.0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]), 10, 10)
    uv, depth, inside = project_to_image(k, (0, 0, 5))
    assert np.allclose(uv, (0, 0)) and depth == 5 and inside


def test_project_similar_triangles():
    k = CameraIntrinsics.from_pinhole(100, 100, 50, 50, 100, 100)
    uv, depth, inside = project_to_image(k, (1, 0, 10))
    assert np.allclose(uv, (60, 50)) and inside


def test_project_behind_camera_flagged():
    k = CameraIntrinsics.from_pinhole(100, 100, 50, 50, 100, 100)
    _, depth, inside = project_to_image(k, (0, 0, -1))
    assert depth == -1 and not inside


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 50))
def test_projection_unprojection_round_trip(x, y, z):
    k = CameraIntrinsics.from_pinhole(721.5, 720.0, 609.6, 172.9, 1242, 375)
    uv, depth, _ = project_to_image(k, (x, y, z))
    back = np.array([(uv[0] - k.cx) * depth / k.fx, (uv[1] - k.cy) * depth / k.fy, depth])
    assert np.allclose(back, (x, y, z), atol=1e-9)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics.from_pinhole(-1, 100, 50, 50, 100, 100)
    with pytest.raises(ValueError):
        CameraIntrinsics.from_pinhole(100, 100, 150, 50, 100, 100)


def _geom():
    return PanoramaGeometry(math.radians(1.0), math.radians(1.0), 0.0, math.pi, math.radians(-60), math.radians(60))


def test_cylindrical_on_x_axis_is_center_cell():
    g = _geom()
    col, row, valid = cylindrical_project(np.array([[5.0, 0, 0]]), g)
    assert valid[0]
    assert col[0] == (g.width - 1) // 2
    assert row[0] == round(math.radians(60) / math.radians(1.0))


def test_cylindrical_45_degree_azimuth_and_elevation():
    g = _geom()
    c0, r0, _ = cylindrical_project(np.array([[1.0, 0, 0]]), g)
    c1, _, _ = cylindrical_project(np.array([[1.0, 1.0, 0]]), g)
    _, r2, _ = cylindrical_project(np.array([[1.0, 0, 1.0]]), g)
    assert c1[0] - c0[0] == 45
    assert r0[0] - r2[0] == 45  # rows grow downwards


def test_cylindrical_zero_point_rejected():
    with pytest.raises(ValueError):
        cylindrical_project(np.zeros((1, 3)), _geom())


def test_cylindrical_outside_window_flagged():
    g = PanoramaGeometry(math.radians(1.0), math.radians(1.0), 0.0, math.radians(30))
    _, _, valid = cylindrical_project(np.array([[-1.0, 0, 0], [1.0, 0.1, 0]]), g)
    assert list(valid) == [False, True]


def test_cylindrical_column_monotone_in_azimuth():
    g = PanoramaGeometry(math.radians(0.2), math.radians(0.5), 0.3, math.radians(50), math.radians(-25), math.radians(3))
    az = np.linspace(0.3 - math.radians(50), 0.3 + math.radians(50), 10 * g.width)
    p = np.stack([np.cos(az), np.sin(az), np.zeros_like(az)], axis=1)
    col, _, valid = cylindrical_project(p, g)
    assert valid.all()
    assert np.all(np.diff(col) >= 0)
    assert col.min() >= 0 and col.max() < g.width


def test_panorama_for_camera_covers_fov_with_padding():
    from edgecal.synth import DEFAULT_THETA, default_camera

    k = default_camera()
    g = PanoramaGeometry.for_camera(
        DEFAULT_THETA, k, math.radians(0.2), math.radians(0.5), math.radians(-25), math.radians(3)
    )
    assert g.az_half_width == pytest.approx(k.horizontal_fov() / 2 + math.radians(10))
    assert g.width >= 2 and g.height >= 2

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edgecal.geometry import PanoramaGeometry, cylindrical_project
from edgecal.segmentation import (
    FLAG_BACKGROUND,
    FLAG_FOREGROUND,
    Cluster,
    LabeledCloud,
    NoPlaneError,
    classify_clusters,
    dbscan,
    label_cloud,
    occlusion_filter,
    planar_centroid_distance,
    ransac_plane,
)
from oracles import dbscan_oracle


def _ground_scene(rng, n_plane=1000, n_up=50):
    plane = np.column_stack([rng.uniform(-10, 10, (n_plane, 2)), np.zeros(n_plane)])
    up = np.column_stack([rng.uniform(-10, 10, (n_up, 2)), np.full(n_up, 5.0)])
    return np.vstack([plane, up])


# ---------------------------------------------------------------- RANSAC


def test_ransac_flat_ground_with_elevated_points(rng):
    pts = _ground_scene(rng)
    plane, inliers, outliers = ransac_plane(pts, 0.2, 300, seed=1)
    angle = math.degrees(math.acos(min(1.0, abs(plane.normal @ [0, 0, 1]))))
    assert angle < 1.0
    assert set(outliers) == set(range(1000, 1050))
    assert abs(np.linalg.norm(plane.normal) - 1) < 1e-12


def test_ransac_distance_rule():
    from edgecal.segmentation import PlaneModel

    p = PlaneModel(0, 0, 1, 0, 0)
    assert p.distance(np.array([[3.0, 4.0, 0.0]]))[0] == 0
    assert p.distance(np.array([[0.0, 0.0, 0.5]]))[0] == 0.5


def test_ransac_bit_reproducible(rng):
    pts = _ground_scene(rng) + rng.normal(0, 0.05, (1050, 3))
    a = ransac_plane(pts, 0.2, 200, seed=7)
    b = ransac_plane(pts, 0.2, 200, seed=7)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_ransac_all_degenerate_raises():
    line = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    with pytest.raises(NoPlaneError):
        ransac_plane(line, 0.2, 50, seed=0)


def test_ransac_too_few_points():
    with pytest.raises(NoPlaneError):
        ransac_plane(np.zeros((2, 3)), 0.2)


# ---------------------------------------------------------------- DBSCAN


def test_dbscan_two_groups():
    a = np.column_stack([np.arange(10) * 0.02, np.zeros(10), np.zeros(10)])
    b = a + [5.0, 0, 0]
    labels = dbscan(np.vstack([a, b]), 0.25, 8)
    assert sorted(set(labels)) == [1, 2]
    assert np.all(labels[:10] == 1) and np.all(labels[10:] == 2)


def test_dbscan_isolated_point_is_noise():
    assert list(dbscan(np.zeros((1, 3)), 0.25, 8)) == [0]


def test_dbscan_empty():
    assert len(dbscan(np.zeros((0, 3)))) == 0


@given(
    arrays(np.float64, st.tuples(st.integers(1, 80), st.just(3)), elements=st.floats(0, 2)),
    st.floats(0.1, 0.6),
    st.integers(1, 6),
)
def test_dbscan_matches_sequential_oracle(pts, radius, m):
    assert np.array_equal(dbscan(pts, radius, m), dbscan_oracle(pts, radius, m))


def test_dbscan_clusters_have_at_least_m_members(rng):
    pts = rng.uniform(0, 3, (300, 3))
    labels = dbscan(pts, 0.4, 5)
    for k in set(labels) - {0}:
        assert np.count_nonzero(labels == k) >= 5


# ---------------------------------------------------------------- classification


def test_centroid_distance_examples():
    assert planar_centroid_distance(np.array([[4.0, 0, 9], [0, 6.0, -1]])) == 5.0
    c3 = Cluster(1, np.arange(3), planar_centroid_distance(np.array([[3.0, 0, 0]] * 3)))
    c30 = Cluster(2, np.arange(3), 30.0)
    assert classify_clusters([c3, c30], 10.0) == {1: FLAG_FOREGROUND, 2: FLAG_BACKGROUND}


def test_classify_rejects_empty_cluster_and_bad_delta():
    with pytest.raises(ValueError):
        classify_clusters([Cluster(1, np.array([], int), 1.0)], 10)
    with pytest.raises(ValueError):
        classify_clusters([], 0)


def test_distance_equal_to_delta_is_background():
    assert classify_clusters([Cluster(1, np.arange(2), 12.0)], 12.0) == {1: FLAG_BACKGROUND}


@given(st.permutations(list(range(12))))
def test_classify_invariant_to_member_order(perm):
    pts = np.column_stack([np.linspace(1, 20, 12), np.linspace(0, 3, 12), np.zeros(12)])
    d1 = planar_centroid_distance(pts)
    d2 = planar_centroid_distance(pts[list(perm)])
    assert d1 == pytest.approx(d2, rel=1e-15)


# ---------------------------------------------------------------- labeling and occlusion


def _geom():
    return PanoramaGeometry(math.radians(1.0), math.radians(1.0), math.pi / 2, math.radians(40), math.radians(-30), math.radians(10))


def _cloud(points, flags):
    g = _geom()
    p = np.column_stack([points, np.zeros(len(points))])
    col, row, valid = cylindrical_project(points, g)
    return LabeledCloud(p, np.zeros(len(p), int), np.asarray(flags), col, row, valid), g


def test_label_cloud_flags_plane_and_foreground(rng):
    ground = np.column_stack([rng.uniform(-8, 8, 3000), rng.uniform(2, 30, 3000), np.full(3000, -1.7)])
    box = np.column_stack([rng.uniform(-0.5, 0.5, 400), rng.uniform(5, 6, 400), rng.uniform(-1.5, 0, 400)])
    far = np.column_stack([rng.uniform(-3, 3, 400), np.full(400, 25.0), rng.uniform(-1.5, 2, 400)])
    pts = np.column_stack([np.vstack([ground, box, far]), np.zeros(3800)])
    lc, plane = label_cloud(pts, _geom(), 0.2, 0.5, 4, 12.0, 300, 0)
    assert np.all(lc.flags[:3000] == FLAG_BACKGROUND)
    assert np.all(lc.flags[3000:3400] == FLAG_FOREGROUND)
    assert np.all(lc.flags[3400:] == FLAG_BACKGROUND)
    assert np.all(lc.cluster_id[:3000] == 0)


def test_occlusion_no_foreground_is_identity():
    pts = np.array([[0.0, 10, 0], [1.0, 10, 0]])
    lc, g = _cloud(pts, [1, 1])
    out = occlusion_filter(lc, g, 2)
    assert len(out) == 2


def test_occlusion_removes_background_inside_blob_only():
    # foreground blob around azimuth 90 deg, elevation 0
    az = np.radians(np.arange(85, 96))
    el = np.radians(np.arange(-5, 6))
    A, E = np.meshgrid(az, el)
    fg = np.column_stack([5 * np.cos(A.ravel()), 5 * np.sin(A.ravel()), 5 * np.tan(E.ravel())])
    bg_in = np.array([[20 * math.cos(math.radians(90.2)), 20 * math.sin(math.radians(90.2)), 0.0]])
    gap = 2 * 2 + 2
    off = math.radians(95 + gap)
    bg_out = np.array([[20 * math.cos(off), 20 * math.sin(off), 0.0]])
    pts = np.vstack([fg, bg_in, bg_out])
    flags = [2] * len(fg) + [1, 1]
    lc, g = _cloud(pts, flags)
    out = occlusion_filter(lc, g, 2)
    assert np.count_nonzero(out.flags == 2) == len(fg)
    assert len(out) == len(fg) + 1
    assert np.allclose(out.points[-1, :3], bg_out[0])

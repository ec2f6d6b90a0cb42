import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgecal.edges import EdgePointSet
from edgecal.geometry import CameraIntrinsics
from edgecal.objective import (
    NoEdgesError,
    bb_ascent,
    evaluate_cost,
    make_cost,
    numeric_gradient,
)
from oracles import cost_oracle

K = CameraIntrinsics.from_pinhole(100, 100, 50, 40, 100, 80)
ZERO = np.zeros(6)


def _pts_at_pixels(uv, depth=10.0):
    """3-D points that land on the given pixels with identity extrinsics."""
    uv = np.asarray(uv, dtype=float)
    x = (uv[:, 0] - K.cx) * depth / K.fx
    y = (uv[:, 1] - K.cy) * depth / K.fy
    return np.column_stack([x, y, np.full(len(uv), depth)])


def _edges(points, prob=None):
    n = len(points)
    prob = np.ones(n) if prob is None else np.asarray(prob, float)
    return EdgePointSet(np.arange(n), np.asarray(points, float), prob, n)


def test_zero_edge_map():
    c = evaluate_cost(ZERO, _edges(_pts_at_pixels([[10, 10], [20, 30]])), np.zeros((80, 100)), K)
    assert c.J == 0 and c.n_matched == 0


def test_single_matched_point():
    e_c = np.zeros((80, 100))
    e_c[10, 20] = 1.0
    c = evaluate_cost(ZERO, _edges(_pts_at_pixels([[20, 10]])), e_c, K, 0.5)
    assert c.precision == 1 and c.J == pytest.approx(1.0)


def test_two_points_half_precision():
    e_c = np.zeros((80, 100))
    e_c[10, 20] = 1.0
    c = evaluate_cost(ZERO, _edges(_pts_at_pixels([[20, 10], [60, 50]])), e_c, K, 0.5)
    assert (c.n_matched, c.raw_sum, c.J) == (1, pytest.approx(1.0), pytest.approx(0.5))


def test_no_edges_is_an_error():
    with pytest.raises(NoEdgesError):
        evaluate_cost(ZERO, _edges(np.zeros((0, 3))), np.zeros((80, 100)), K)
    with pytest.raises(NoEdgesError):
        make_cost(_edges(np.zeros((0, 3))), np.zeros((80, 100)), K)


def test_out_of_view_points_are_unmatched_but_counted():
    e_c = np.ones((80, 100))
    pts = np.vstack([_pts_at_pixels([[20, 10]]), [[0, 0, -5.0]], _pts_at_pixels([[500, 10]])])
    c = evaluate_cost(ZERO, _edges(pts), e_c, K, 0.5)
    assert c.n_edge == 3 and c.n_matched == 1
    assert c.J == pytest.approx(1 / 3)


@pytest.fixture(scope="module")
def random_frame():
    rng = np.random.default_rng(3)
    e_c = rng.random((80, 100))
    pts = _pts_at_pixels(rng.uniform(-20, 120, (200, 2)), 8.0) + rng.normal(0, 0.1, (200, 3))
    return e_c, pts, rng.random(200)


@pytest.mark.parametrize("theta", [ZERO, [0.05, -0.02, 0.03, 0.2, -0.1, 0.3]])
def test_matches_loop_oracle(random_frame, theta):
    e_c, pts, prob = random_frame
    c = evaluate_cost(theta, _edges(pts, prob), e_c, K, 0.2)
    J, m, raw = cost_oracle(np.asarray(theta, float), pts, prob, e_c, K.P, 100, 80, 0.2)
    assert c.n_matched == m
    assert c.raw_sum == pytest.approx(raw, rel=1e-12)
    assert c.J == pytest.approx(J, rel=1e-12)


@given(st.permutations(list(range(200))))
@settings(max_examples=20)
def test_permutation_invariant(random_frame, perm):
    e_c, pts, prob = random_frame
    a = evaluate_cost(ZERO, _edges(pts, prob), e_c, K)
    b = evaluate_cost(ZERO, _edges(pts[list(perm)], prob[list(perm)]), e_c, K)
    assert a.n_matched == b.n_matched
    assert a.J == pytest.approx(b.J, rel=1e-12)


def test_zero_threshold_counts_in_image_points(random_frame):
    e_c, pts, prob = random_frame
    c = evaluate_cost(ZERO, _edges(pts, prob), e_c, K, 0.0)
    h = pts @ K.P[:, :3].T
    u, v = h[:, 0] / h[:, 2], h[:, 1] / h[:, 2]
    inside = (pts[:, 2] > 0) & (u >= 0) & (u <= 99) & (v >= 0) & (v <= 79)
    assert c.n_matched == inside.sum()
    assert 0 <= c.precision <= 1


def test_doubling_probabilities_doubles_raw_sum(random_frame):
    e_c, pts, prob = random_frame
    a = evaluate_cost(ZERO, _edges(pts, prob), e_c, K)
    b = evaluate_cost(ZERO, _edges(pts, 2 * prob), e_c, K)
    assert b.raw_sum == pytest.approx(2 * a.raw_sum)
    assert b.n_matched == a.n_matched and b.precision == a.precision


def test_sum_over_edges_equals_sum_over_whole_cloud(random_frame):
    e_c, pts, prob = random_frame
    prob = np.where(np.arange(200) % 3 == 0, 0.0, prob)
    full = cost_oracle(ZERO, pts, prob, e_c, K.P, 100, 80, 0.2)[2]
    keep = prob > 0
    sub = evaluate_cost(ZERO, _edges(pts[keep], prob[keep]), e_c, K)
    assert sub.raw_sum == pytest.approx(full)


# ---------------------------------------------------------------- gradient


def test_gradient_of_constant_is_zero():
    assert np.all(numeric_gradient(lambda t: 3.0, ZERO, 1e-3) == 0)


def test_gradient_of_quadratic():
    th = np.array([1.0, 0, 0, 0, 0, 0])
    g = numeric_gradient(lambda t: float(t @ t), th, 1e-4)
    assert np.allclose(g, [2, 0, 0, 0, 0, 0], atol=1e-6)


def test_gradient_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        numeric_gradient(lambda t: 0.0, ZERO, [1e-3, 0, 1e-3, 1e-3, 1e-3, 1e-3])


def _five_point(cost, th, h):
    g = np.empty(6)
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        g[i] = (-cost(th + 2 * e) + 8 * cost(th + e) - 8 * cost(th - e) + cost(th - 2 * e)) / (12 * h)
    return g


def test_gradient_matches_five_point_stencil_on_scene(urban, urban_features):
    # threshold 0 keeps N_m fixed around theta, so J is smooth on the stencil
    scene, _, _, _ = urban
    edges, e_c = urban_features.edges, urban_features.e_c_levels[0]
    cost = make_cost(edges, e_c, scene.camera, 0.0)
    th = scene.theta.as_array() + np.array([0.02, -0.015, 0.01, 0.05, -0.04, 0.03])
    counts = {evaluate_cost(th + d, edges, e_c, scene.camera, 0.0).n_matched for d in (-2e-3, 0.0, 2e-3)}
    assert len(counts) == 1
    g = numeric_gradient(cost, th, 1e-3)
    ref = _five_point(cost, th, 1e-3)
    assert np.all(np.abs(g - ref) <= 0.05 * np.abs(ref))


# ---------------------------------------------------------------- ascent


def test_zero_gradient_start_returns_immediately():
    res = bb_ascent(lambda t: -float(t @ t), ZERO)
    assert res.termination == "converged" and res.iterations == 0
    assert np.array_equal(res.theta.as_array(), ZERO)


def test_parameter_validation():
    with pytest.raises(ValueError):
        bb_ascent(lambda t: 0.0, ZERO, epsilon=0)
    with pytest.raises(ValueError):
        bb_ascent(lambda t: 0.0, ZERO, max_iter=0)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_paraboloid_converges(seed):
    rng = np.random.default_rng(seed)
    star = rng.uniform(-1, 1, 6)
    d = rng.normal(size=6)
    th0 = star + d / np.linalg.norm(d) * rng.uniform(0.01, 0.3)
    res = bb_ascent(lambda t: -float((t - star) @ (t - star)), th0, max_iter=50)
    assert np.linalg.norm(res.theta.as_array() - star) <= 1e-4
    assert res.iterations <= 50
    dist = np.linalg.norm(res.trace.thetas - star, axis=1)
    assert np.all(np.diff(dist[2:]) <= 1e-12)
    assert np.array_equal(res.theta.as_array(), res.trace.thetas[-1])


def test_converged_implies_small_last_step():
    star = np.array([0.1, 0.2, -0.1, 0.5, 0, 1])
    res = bb_ascent(lambda t: -float((t - star) @ (t - star)), star + 0.2)
    assert res.termination == "converged"
    th = res.trace.thetas
    assert np.linalg.norm(th[-1] - th[-2]) <= 1e-5


def test_max_step_caps_every_step():
    res = bb_ascent(lambda t: -float(t @ t), np.full(6, 1.0), max_iter=30, max_step=0.05, gamma0=1.0)
    assert max(e.step for e in res.trace.entries) <= 0.05

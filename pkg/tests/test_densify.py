import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from edgecal.densify import (
    SparsePanorama,
    build_sparse_panorama,
    prox_tv,
    total_variation,
    tv_inpaint,
    tv_objective,
)
from edgecal.geometry import PanoramaGeometry, cylindrical_project
from edgecal.segmentation import LabeledCloud
from oracles import tv_objective_oracle, tv_oracle

cvxpy = pytest.importorskip("cvxpy")


def _sparse(values, mask, feature="depth"):
    return SparsePanorama(np.asarray(values, float), np.asarray(mask, bool), feature)


def _random_instance(seed, shape=(12, 16), density=0.3):
    rng = np.random.default_rng(seed)
    base = np.zeros(shape)
    base[:, shape[1] // 2 :] = 5.0
    base += rng.normal(0, 0.3, shape)
    mask = rng.random(shape) < density
    mask[0, 0] = True
    return np.where(mask, base, 0.0), mask


# ---------------------------------------------------------------- sparse scatter


def test_sparse_nearest_point_wins_cell():
    g = PanoramaGeometry(np.radians(1), np.radians(1), np.pi / 2, np.radians(20), np.radians(-10), np.radians(10))
    pts = np.array([[0.0, 10.0, 0.0, 0.3], [0.0, 5.0, 0.0, 0.9]])
    col, row, valid = cylindrical_project(pts, g)
    lc = LabeledCloud(pts, np.zeros(2, int), np.array([1, 2]), col, row, valid)
    for feat, expected in (("depth", 5.0), ("reflectivity", 0.9), ("object", 2.0)):
        sp = build_sparse_panorama(lc, feat, g)
        assert sp.mask.sum() == 1
        assert sp.values[sp.mask][0] == expected


def test_sparse_unknown_feature():
    g = PanoramaGeometry(np.radians(1), np.radians(1), np.pi / 2, np.radians(20), np.radians(-10), np.radians(10))
    lc = LabeledCloud(np.zeros((0, 4)), np.zeros(0, int), np.zeros(0, int), np.zeros(0, int), np.zeros(0, int), np.zeros(0, bool))
    with pytest.raises(ValueError):
        build_sparse_panorama(lc, "colour", g)


# ---------------------------------------------------------------- TV completion


def test_constant_observations_fill_constant():
    mask = np.zeros((8, 8), bool)
    mask[::3, ::2] = True
    d = tv_inpaint(_sparse(np.where(mask, 4.0, 0), mask), lam=0.05)
    assert np.allclose(d.values, 4.0, atol=1e-6)


def test_single_observation_spreads_everywhere():
    mask = np.zeros((5, 7), bool)
    mask[2, 3] = True
    d = tv_inpaint(_sparse(np.where(mask, 2.5, 0), mask), lam=0.05)
    assert np.allclose(d.values, 2.5, atol=1e-6)


def test_stripe_boundary_is_kept():
    vals = np.zeros((10, 10))
    vals[:, 5:] = 1.0
    mask = np.zeros_like(vals, bool)
    mask[:, [0, 2, 4, 5, 7, 9]] = True
    d = tv_inpaint(_sparse(np.where(mask, vals, 0), mask), lam=0.01, max_iter=2000)
    assert np.all(d.values[:, :5] < 0.05)
    assert np.all(d.values[:, 5:] > 0.95)


def test_empty_mask_rejected():
    with pytest.raises(ValueError, match="no observed"):
        tv_inpaint(_sparse(np.zeros((3, 3)), np.zeros((3, 3))))


def test_nonfinite_observation_rejected():
    v = np.zeros((3, 3))
    v[1, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        tv_inpaint(_sparse(v, np.ones((3, 3))))


def test_objective_matches_loop_oracle(rng):
    phi = rng.normal(size=(6, 9))
    u = rng.normal(size=(6, 9))
    m = rng.random((6, 9)) < 0.4
    assert tv_objective(phi, u, m, 0.3) == pytest.approx(tv_objective_oracle(phi, np.where(m, u, 0), m, 0.3))


@pytest.mark.parametrize("seed", range(3))
def test_within_half_percent_of_generic_solver(seed):
    u, mask = _random_instance(seed)
    ref, _ = tv_oracle(u, mask, 0.05)
    d = tv_inpaint(_sparse(u, mask), lam=0.05, max_iter=3000, tol=1e-9)
    assert d.objective <= ref * 1.005 + 1e-9


@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
@settings(max_examples=25)
def test_objective_not_above_mean_fill_or_zero_fill(seed, lam):
    u, mask = _random_instance(seed, (8, 10))
    d = tv_inpaint(_sparse(u, mask), lam=lam, max_iter=60)
    mean_fill = np.where(mask, u, u[mask].mean())
    zero_fill = np.where(mask, u, 0.0)
    assert d.objective <= tv_objective(mean_fill, u, mask, lam) + 1e-9
    assert d.objective <= tv_objective(zero_fill, u, mask, lam) + 1e-9
    assert np.all(np.diff(d.history) <= 1e-12)


def test_larger_lambda_gives_smaller_tv():
    u, mask = _random_instance(5)
    tvs = [total_variation(tv_inpaint(_sparse(u, mask), lam=lam, max_iter=2000, tol=1e-10).values) for lam in (0.01, 0.1, 1.0)]
    assert tvs[0] >= tvs[1] - 1e-6 >= tvs[2] - 2e-6


def test_transpose_invariance():
    u, mask = _random_instance(11)
    a = tv_inpaint(_sparse(u, mask), lam=0.05, max_iter=2000, tol=1e-10)
    b = tv_inpaint(_sparse(u.T, mask.T), lam=0.05, max_iter=2000, tol=1e-10)
    assert a.objective == pytest.approx(b.objective, rel=1e-4)


@given(arrays(np.float64, (6, 7), elements=st.floats(-3, 3)), st.floats(0.01, 2.0))
@settings(max_examples=30)
def test_prox_tv_decreases_prox_objective(z, tau):
    x, _ = prox_tv(z, tau, iterations=50)

    def f(v):
        return 0.5 * np.sum((v - z) ** 2) + tau * total_variation(v)

    assert f(x) <= f(z) + 1e-9

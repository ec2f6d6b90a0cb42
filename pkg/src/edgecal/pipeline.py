"""End-to-end single-frame calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .densify import FEATURES, build_sparse_panorama, tv_inpaint
from .edges import EdgePointSet, crop_to_view, feature_edges, mixed_edge_map, select_edge_points
from .geometry import CameraIntrinsics, ExtrinsicParams, PanoramaGeometry, cylindrical_project
from .image import camera_edge_map
from .objective import (
    CalibrationResult,
    NoEdgesError,
    OptimizerTrace,
    TraceEntry,
    bb_ascent,
    evaluate_cost,
    make_cost,
)
from .segmentation import label_cloud, occlusion_filter

log = logging.getLogger(__name__)


@dataclass
class FrameFeatures:
    """Everything the optimizer needs from one frame, plus intermediates for dumps."""

    geom: PanoramaGeometry
    e_c: np.ndarray
    edges: EdgePointSet
    mixed: np.ndarray
    e_c_levels: list = field(default_factory=list, repr=False)
    extras: dict = field(default_factory=dict, repr=False)


def extract_features(
    cloud,
    image,
    k: CameraIntrinsics,
    theta0,
    cfg: PipelineConfig,
    keep_intermediates: bool = False,
) -> FrameFeatures:
    """Camera edge map and LiDAR edge points for one frame.

    ``theta0`` positions the panorama window on the camera's field of view
    and decides which edge points are far enough inside the image to keep.
    Points outside the window are dropped before segmentation.
    ``e_c_levels`` holds one camera edge map per optimization stage, coarse
    to fine; the last one is ``e_c``.
    """
    e_c_levels = [camera_edge_map(image, s, cfg.hist_bins) for s in cfg.sigma_schedule]
    e_c = e_c_levels[-1]
    geom = cfg.panorama(theta0, k)

    cloud = np.asarray(cloud, dtype=float)
    nonzero = np.any(cloud[:, :3] != 0, axis=1)
    cloud = cloud[nonzero]
    _, _, in_window = cylindrical_project(cloud[:, :3], geom)
    cloud = cloud[in_window]

    labeled, plane = label_cloud(
        cloud,
        geom,
        cfg.ransac_gamma,
        cfg.dbscan_radius,
        cfg.dbscan_min_points,
        cfg.foreground_delta,
        cfg.ransac_iterations,
        cfg.seed,
    )
    filtered = occlusion_filter(labeled, geom, cfg.closing_radius)

    sparse = {}
    dense = {}
    for name in FEATURES:
        sparse[name] = build_sparse_panorama(filtered, name, geom)
        dense[name] = tv_inpaint(sparse[name], cfg.tv_lambda, cfg.tv_max_iter, cfg.tv_tol, cfg.tv_inner_iter)
    edge_maps = feature_edges({n: d.values for n, d in dense.items()}, cfg.canny_thresholds, cfg.canny_sigma)
    mixed = mixed_edge_map(edge_maps["depth"], edge_maps["reflectivity"], edge_maps["object"])
    all_edges = select_edge_points(filtered, mixed)
    edges = crop_to_view(all_edges, theta0, k, cfg.edge_margin_px)
    log.info(
        "panorama %dx%d, %d points in window, %d after occlusion filter, %d edge points, %d in view",
        geom.height,
        geom.width,
        len(labeled),
        len(filtered),
        all_edges.n_edge,
        edges.n_edge,
    )
    extras = {}
    if keep_intermediates:
        extras = dict(
            labeled=labeled,
            filtered=filtered,
            plane=plane,
            sparse=sparse,
            dense=dense,
            edge_maps=edge_maps,
            all_edges=all_edges,
        )
    return FrameFeatures(geom, e_c, edges, mixed, e_c_levels, extras)


def _stage_end(trace: OptimizerTrace) -> np.ndarray:
    """Where a stage hands over: its last iterate if converged, else its best one.

    Ascent on the piecewise-constant objective can wander off in its last
    iterations without ever meeting the step tolerance.
    """
    if trace.termination == "converged":
        return trace.entries[-1].theta
    return trace.entries[int(np.argmax(trace.values))].theta


def calibrate_features(feats: FrameFeatures, k: CameraIntrinsics, theta0, cfg: PipelineConfig) -> CalibrationResult:
    """Run one ascent per edge-map level, each starting where the previous ended.

    The returned trace concatenates the stages; its termination is the last
    stage's. A stage that did not converge ends at its best iterate, which
    is appended to the trace when it is not already the last entry.
    """
    if feats.edges.n_edge == 0:
        raise NoEdgesError("no LiDAR edge points fall inside the camera view")
    levels = feats.e_c_levels or [feats.e_c]
    theta = theta0
    entries = []
    for i, e_c in enumerate(levels):
        cost = make_cost(feats.edges, e_c, k, cfg.match_threshold)
        stage = bb_ascent(
            cost,
            theta,
            epsilon=cfg.opt_epsilon,
            max_iter=cfg.opt_max_iter,
            delta_h=cfg.delta_h,
            gamma0=cfg.opt_gamma0,
            max_step=cfg.opt_max_step,
        )
        # each stage restarts from the previous end point, which is already recorded
        entries += stage.trace.entries if i == 0 else stage.trace.entries[1:]
        end = _stage_end(stage.trace)
        if not np.array_equal(end, entries[-1].theta):
            best = next(e for e in stage.trace.entries if e.theta is end)
            entries.append(TraceEntry(end.copy(), best.J, best.grad_norm, 0.0))
        theta = ExtrinsicParams.from_array(end)
        log.debug("stage %d/%d: %s after %d steps", i + 1, len(levels), stage.termination, stage.iterations)
    result = CalibrationResult(ExtrinsicParams.from_array(entries[-1].theta), OptimizerTrace(entries, stage.trace.termination))
    result.cost = evaluate_cost(result.theta, feats.edges, feats.e_c, k, cfg.match_threshold)
    result.config = cfg.as_dict()
    return result


def calibrate(cloud, image, k: CameraIntrinsics, theta0, cfg: PipelineConfig | None = None) -> CalibrationResult:
    """Estimate the LiDAR-to-camera extrinsics of one frame starting from ``theta0``."""
    cfg = cfg or PipelineConfig()
    theta0 = theta0 if isinstance(theta0, ExtrinsicParams) else ExtrinsicParams.from_array(theta0)
    feats = extract_features(cloud, image, k, theta0, cfg)
    return calibrate_features(feats, k, theta0, cfg)

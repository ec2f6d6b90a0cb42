"""Pipeline configuration: one flat record of every tunable."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .geometry import CameraIntrinsics, PanoramaGeometry


@dataclass
class PipelineConfig:
    seed: int = 0
    # ground plane / clustering
    ransac_gamma: float = 0.2
    ransac_iterations: int = 300
    ransac_early_exit: float = 0.8
    dbscan_radius: float = 0.25
    dbscan_min_points: int = 8
    foreground_delta: float = 12.0
    closing_radius: int = 2
    # panorama
    pano_delta_h_deg: float = 0.2
    pano_delta_v_deg: float = 28.0 / 31.0
    pano_el_min_deg: float = -25.0
    pano_el_max_deg: float = 3.0
    pano_scale: float = 1.0
    pano_pad_deg: float = 10.0
    pano_full_360: bool = False
    # camera edges
    hist_bins: int = 256
    edge_sigma: float = 3.0
    # extra coarse stages, each doubling edge_sigma (0 = single stage)
    edge_coarse_levels: int = 3
    # edge points projecting closer than this to the image border at theta0 are dropped
    edge_margin_px: float = 40.0
    # dense completion
    tv_lambda: float = 0.05
    tv_max_iter: int = 400
    tv_tol: float = 1e-5
    tv_inner_iter: int = 20
    # LiDAR edges
    canny_sigma: float = 1.4
    canny_depth_low: float = 0.08
    canny_depth_high: float = 0.2
    canny_refl_low: float = 0.15
    canny_refl_high: float = 0.4
    canny_obj_low: float = 0.1
    canny_obj_high: float = 0.3
    # objective / optimizer
    match_threshold: float = 0.2
    opt_epsilon: float = 1e-5
    opt_max_iter: int = 200
    opt_gamma0: float = 1e-2
    opt_max_step: float = 0.02
    opt_delta_rot: float = 1e-3
    opt_delta_trans: float = 1e-3
    # command-line defaults (the matching flags override these)
    sweep_range: float = 0.3
    sweep_samples: int = 61
    sweep_normalize: bool = False
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        errors = []

        def need(cond, msg):
            if not cond:
                errors.append(msg)

        need(self.ransac_gamma > 0, "ransac_gamma must be > 0")
        need(self.ransac_iterations >= 1, "ransac_iterations must be >= 1")
        need(0 < self.ransac_early_exit <= 1, "ransac_early_exit must lie in (0, 1]")
        need(self.dbscan_radius > 0, "dbscan_radius must be > 0")
        need(self.dbscan_min_points >= 1, "dbscan_min_points must be >= 1")
        need(self.foreground_delta > 0, "foreground_delta must be > 0")
        need(self.closing_radius >= 1, "closing_radius must be >= 1")
        need(self.pano_delta_h_deg > 0 and self.pano_delta_v_deg > 0, "panorama resolutions must be > 0")
        need(self.pano_el_max_deg > self.pano_el_min_deg, "pano_el_max_deg must exceed pano_el_min_deg")
        need(self.pano_scale > 0, "pano_scale must be > 0")
        need(self.pano_pad_deg >= 0, "pano_pad_deg must be >= 0")
        need(self.hist_bins >= 2, "hist_bins must be >= 2")
        need(self.edge_sigma > 0, "edge_sigma must be > 0")
        need(self.edge_coarse_levels >= 0, "edge_coarse_levels must be >= 0")
        need(self.edge_margin_px >= 0, "edge_margin_px must be >= 0")
        need(self.tv_lambda > 0, "tv_lambda must be > 0")
        need(self.tv_max_iter >= 1 and self.tv_inner_iter >= 1, "TV iteration counts must be >= 1")
        need(self.tv_tol >= 0, "tv_tol must be >= 0")
        need(self.canny_sigma >= 0, "canny_sigma must be >= 0")
        for name in ("depth", "refl", "obj"):
            lo = getattr(self, f"canny_{name}_low")
            hi = getattr(self, f"canny_{name}_high")
            need(0 <= lo < hi <= 1, f"canny_{name}: need 0 <= low < high <= 1")
        need(0 <= self.match_threshold <= 1, "match_threshold must lie in [0, 1]")
        need(self.opt_epsilon > 0, "opt_epsilon must be > 0")
        need(self.opt_max_iter >= 1, "opt_max_iter must be >= 1")
        need(self.opt_gamma0 > 0 and self.opt_max_step > 0, "optimizer step sizes must be > 0")
        need(self.opt_delta_rot > 0 and self.opt_delta_trans > 0, "finite-difference steps must be > 0")
        need(self.sweep_range > 0, "sweep_range must be > 0")
        need(self.sweep_samples >= 3, "sweep_samples must be >= 3")
        need(self.jobs >= 1, "jobs must be >= 1")
        if errors:
            raise ValueError("invalid configuration: " + "; ".join(errors))

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> PipelineConfig:
        d = self.as_dict()
        d.update(changes)
        return PipelineConfig(**d)

    @property
    def delta_h(self) -> np.ndarray:
        return np.array([self.opt_delta_rot] * 3 + [self.opt_delta_trans] * 3)

    @property
    def sigma_schedule(self) -> list[float]:
        """Camera edge blur per optimization stage, coarse to fine."""
        return [self.edge_sigma * 2.0**i for i in range(self.edge_coarse_levels, -1, -1)]

    @property
    def canny_thresholds(self) -> dict:
        return {
            "depth": (self.canny_depth_low, self.canny_depth_high),
            "reflectivity": (self.canny_refl_low, self.canny_refl_high),
            "object": (self.canny_obj_low, self.canny_obj_high),
        }

    def panorama(self, theta, k: CameraIntrinsics) -> PanoramaGeometry:
        return PanoramaGeometry.for_camera(
            theta,
            k,
            math.radians(self.pano_delta_h_deg),
            math.radians(self.pano_delta_v_deg),
            math.radians(self.pano_el_min_deg),
            math.radians(self.pano_el_max_deg),
            pad=math.radians(self.pano_pad_deg),
            full_360=self.pano_full_360,
            scale=self.pano_scale,
        )

"""LiDAR edge extraction: per-feature Canny maps fused into an edge probability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, project_to_image, transform_point
from .image import canny
from .segmentation import LabeledCloud


def mixed_edge_map(e_depth, e_refl, e_obj) -> np.ndarray:
    """Equal-weight average of the three edge maps (values in {0, 1/3, 2/3, 1} for binary input)."""
    maps = [np.asarray(e, dtype=float) for e in (e_depth, e_refl, e_obj)]
    if not (maps[0].shape == maps[1].shape == maps[2].shape):
        raise ValueError(f"edge maps differ in shape: {[m.shape for m in maps]}")
    return (maps[0] + maps[1] + maps[2]) / 3.0


def feature_edges(dense: dict, thresholds: dict, sigma: float = 1.4) -> dict:
    """Canny edges per feature; ``thresholds`` maps feature -> (low, high)."""
    return {
        name: canny(dense[name], sigma, *thresholds[name])
        for name in ("depth", "reflectivity", "object")
    }


@dataclass
class EdgePointSet:
    indices: np.ndarray
    points: np.ndarray
    prob: np.ndarray
    n_total: int

    @property
    def n_edge(self) -> int:
        return len(self.indices)

    def __len__(self):
        return self.n_edge

    def subset(self, keep) -> EdgePointSet:
        keep = np.asarray(keep)
        return EdgePointSet(self.indices[keep], self.points[keep], self.prob[keep], self.n_total)


def select_edge_points(cloud: LabeledCloud, mixed) -> EdgePointSet:
    """Every point whose panorama cell has non-zero edge probability."""
    mixed = np.asarray(mixed, dtype=float)
    v = cloud.valid
    prob = np.zeros(len(cloud))
    prob[v] = mixed[cloud.row[v], cloud.col[v]]
    idx = np.flatnonzero(prob > 0)
    return EdgePointSet(idx, cloud.points[idx, :3].copy(), prob[idx], len(cloud))


def crop_to_view(edges: EdgePointSet, theta0, k: CameraIntrinsics, margin: float) -> EdgePointSet:
    """Keep edge points that project at least ``margin`` px inside the image at ``theta0``.

    Points near the border would drift in and out of view as theta moves,
    and every point entering the image raises J regardless of alignment.
    """
    uv, _, inside = project_to_image(k, transform_point(theta0, edges.points))
    uv = np.where(np.isfinite(uv), uv, -np.inf)
    keep = (
        inside
        & (uv[:, 0] >= margin)
        & (uv[:, 0] <= k.width - 1 - margin)
        & (uv[:, 1] >= margin)
        & (uv[:, 1] <= k.height - 1 - margin)
    )
    return edges.subset(keep)

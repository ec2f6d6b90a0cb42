"""Point-cloud structuring: ground removal, clustering, foreground labels and
occlusion removal on the panorama.

Object flags
------------
* ``2`` - member of a cluster whose mean planar range is below ``delta``
  (foreground).
* ``1`` - everything else that is an actual LiDAR return: background
  clusters, ground-plane inliers and clustering noise.
* ``0`` - reserved for panorama cells without any return.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import PanoramaGeometry, cylindrical_project
from .image import close

log = logging.getLogger(__name__)

FLAG_EMPTY = 0
FLAG_BACKGROUND = 1
FLAG_FOREGROUND = 2


class NoPlaneError(RuntimeError):
    """Raised when RANSAC cannot produce any non-degenerate plane."""


@dataclass(frozen=True)
class PlaneModel:
    """Plane ``A x + B y + C z + D = 0`` with unit normal ``(A, B, C)``."""

    A: float
    B: float
    C: float
    D: float
    inlier_count: int

    @property
    def normal(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C])

    def distance(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)[..., :3]
        return np.abs(p @ self.normal + self.D)


def _plane_from_points(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    scale = max(np.linalg.norm(p1 - p0) * np.linalg.norm(p2 - p0), 1e-300)
    if norm <= 1e-9 * scale:
        return None
    n = n / norm
    # canonical orientation: C >= 0, ties broken on B then A
    for comp in (n[2], n[1], n[0]):
        if comp != 0:
            if comp < 0:
                n = -n
            break
    return n, -float(n @ p0)


def ransac_plane(
    points,
    gamma: float = 0.2,
    iterations: int = 300,
    seed: int = 0,
    early_exit_ratio: float = 0.8,
):
    """Fit the dominant plane by RANSAC.

    Each trial samples three distinct points; collinear samples are skipped.
    The plane with the most points at distance ``<= gamma`` wins.

    Returns ``(plane, inlier_idx, outlier_idx)`` where the outliers are the
    non-plane points (distance ``> gamma``).
    """
    pts = np.asarray(points, dtype=float)[:, :3]
    n = len(pts)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if n < 3:
        raise NoPlaneError(f"need at least 3 points, got {n}")
    rng = np.random.default_rng(seed)

    best = None
    best_count = -1
    for _ in range(iterations):
        idx = rng.choice(n, size=3, replace=False)
        fit = _plane_from_points(pts[idx[0]], pts[idx[1]], pts[idx[2]])
        if fit is None:
            continue
        normal, D = fit
        count = int(np.count_nonzero(np.abs(pts @ normal + D) <= gamma))
        if count > best_count:
            best, best_count = (normal, D), count
            if count > early_exit_ratio * n:
                break
    if best is None:
        raise NoPlaneError("all RANSAC samples were degenerate")

    normal, D = best
    plane = PlaneModel(*normal.tolist(), D, best_count)
    dist = np.abs(pts @ normal + D)
    inliers = np.flatnonzero(dist <= gamma)
    outliers = np.flatnonzero(dist > gamma)
    return plane, inliers, outliers


def dbscan(points, radius: float = 0.25, min_points: int = 8) -> np.ndarray:
    """Density-based clustering; returns ``cluster_id`` per point (0 = noise).

    A point is a core point when at least ``min_points`` points (itself
    included) lie within ``radius``. Clusters are numbered 1, 2, ... in the
    order of their lowest-index core point, and a border point reachable from
    several clusters joins the one with the smallest number, which is what a
    sequential scan in input order produces.
    """
    if radius <= 0 or min_points < 1:
        raise ValueError("need radius > 0 and min_points >= 1")
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.zeros(n, dtype=np.int64)
    if n == 0:
        return labels
    pts = pts[:, :3]

    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    counts = 1 + np.bincount(i, minlength=n) + np.bincount(j, minlength=n)
    core = counts >= min_points
    if not core.any():
        return labels

    cc = core[i] & core[j]
    core_idx = np.flatnonzero(core)
    pos = np.full(n, -1)
    pos[core_idx] = np.arange(len(core_idx))
    graph = coo_matrix(
        (np.ones(cc.sum()), (pos[i[cc]], pos[j[cc]])), shape=(len(core_idx),) * 2
    )
    ncomp, comp = connected_components(graph, directed=False)

    # renumber components by their smallest member index
    first = np.full(ncomp, n)
    np.minimum.at(first, comp, core_idx)
    order = np.argsort(first)
    rank = np.empty(ncomp, dtype=np.int64)
    rank[order] = np.arange(1, ncomp + 1)
    labels[core_idx] = rank[comp]

    # border points: non-core neighbours of core points
    best = np.full(n, np.iinfo(np.int64).max)
    for a, b in ((i, j), (j, i)):
        m = core[a] & ~core[b]
        np.minimum.at(best, b[m], labels[a[m]])
    border = (~core) & (best < np.iinfo(np.int64).max)
    labels[border] = best[border]
    return labels


@dataclass
class Cluster:
    id: int
    member_indices: np.ndarray
    centroid_distance: float


def planar_centroid_distance(points) -> float:
    """Mean of ``sqrt(x^2 + y^2)`` over the points."""
    p = np.asarray(points, dtype=float)
    if len(p) == 0:
        raise ValueError("empty cluster")
    return float(np.mean(np.hypot(p[:, 0], p[:, 1])))


def clusters_from_labels(points, labels) -> list[Cluster]:
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    out = []
    for k in np.unique(labels[labels > 0]):
        members = np.flatnonzero(labels == k)
        out.append(Cluster(int(k), members, planar_centroid_distance(pts[members])))
    return out


def classify_clusters(clusters, delta: float = 12.0) -> dict[int, int]:
    """Object flag per cluster id: 2 if the centroid distance is below ``delta``, else 1."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    flags = {}
    for c in clusters:
        if len(c.member_indices) == 0:
            raise ValueError(f"cluster {c.id} is empty")
        flags[c.id] = FLAG_FOREGROUND if c.centroid_distance < delta else FLAG_BACKGROUND
    return flags


@dataclass
class LabeledCloud:
    """Points ``(N, 4)`` = x, y, z, reflectivity, with per-point labels.

    ``cluster_id`` is 0 for noise and non-clustered points. ``col``/``row``
    are panorama cells (-1 when outside the window).
    """

    points: np.ndarray
    cluster_id: np.ndarray
    flags: np.ndarray
    col: np.ndarray
    row: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return len(self.points)

    def subset(self, keep) -> LabeledCloud:
        return LabeledCloud(
            self.points[keep],
            self.cluster_id[keep],
            self.flags[keep],
            self.col[keep],
            self.row[keep],
            self.valid[keep],
        )


def label_cloud(
    points,
    geom: PanoramaGeometry,
    gamma: float = 0.2,
    radius: float = 0.25,
    min_points: int = 8,
    delta: float = 12.0,
    ransac_iterations: int = 300,
    seed: int = 0,
):
    """Ground removal, clustering, foreground classification and panorama cells.

    Clustering is restricted to non-plane points; plane inliers and noise get
    flag 1. Returns ``(LabeledCloud, PlaneModel)``.
    """
    pts = np.asarray(points, dtype=float)
    plane, _, above = ransac_plane(pts, gamma, ransac_iterations, seed)
    cluster_id = np.zeros(len(pts), dtype=np.int64)
    cluster_id[above] = dbscan(pts[above], radius, min_points)
    flags = np.full(len(pts), FLAG_BACKGROUND, dtype=np.int64)
    clusters = clusters_from_labels(pts, cluster_id)
    for cid, flag in classify_clusters(clusters, delta).items():
        flags[cluster_id == cid] = flag
    col, row, valid = cylindrical_project(pts[:, :3], geom)
    log.debug(
        "plane inliers=%d, clusters=%d, foreground points=%d",
        plane.inlier_count,
        len(clusters),
        int(np.count_nonzero(flags == FLAG_FOREGROUND)),
    )
    return LabeledCloud(pts, cluster_id, flags, col, row, valid), plane


def foreground_mask(cloud: LabeledCloud, geom: PanoramaGeometry, kernel_radius: int = 2):
    """Closed binary panorama of foreground cells."""
    u_obj = np.zeros(geom.shape, dtype=bool)
    fg = cloud.valid & (cloud.flags == FLAG_FOREGROUND)
    u_obj[cloud.row[fg], cloud.col[fg]] = True
    return close(u_obj, kernel_radius)


def occlusion_filter(cloud: LabeledCloud, geom: PanoramaGeometry, kernel_radius: int = 2):
    """Drop background (flag 1) points that fall inside the closed foreground mask."""
    mask = foreground_mask(cloud, geom, kernel_radius)
    hit = np.zeros(len(cloud), dtype=bool)
    v = cloud.valid
    hit[v] = mask[cloud.row[v], cloud.col[v]]
    drop = hit & (cloud.flags == FLAG_BACKGROUND)
    return cloud.subset(~drop)

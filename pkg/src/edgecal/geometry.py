"""Rigid transforms, pinhole projection and cylindrical (panorama) projection.

Rotation convention
-------------------
Extrinsics are stored as six numbers ``[rx, ry, rz, tx, ty, tz]`` mapping a
point from the LiDAR frame to the camera frame::

    p_cam = R @ p_lidar + t,      R = Rz(rz) @ Ry(ry) @ Rx(rx)

The Euler composition order is fixed to Z-Y-X. Published angle triples are
only comparable when they use the same convention, so check this before
copying numbers from elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PARAM_NAMES = ("rx", "ry", "rz", "tx", "ty", "tz")


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    # in-range values pass through bit-exact
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class ExtrinsicParams:
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        vals = [self.rx, self.ry, self.rz, self.tx, self.ty, self.tz]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"extrinsic parameters must be finite, got {vals}")
        for name in ("rx", "ry", "rz"):
            object.__setattr__(self, name, wrap_angle(float(getattr(self, name))))
        for name in ("tx", "ty", "tz"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def from_array(cls, arr) -> ExtrinsicParams:
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.shape != (6,):
            raise ValueError(f"expected 6 parameters, got shape {arr.shape}")
        return cls(*arr.tolist())

    @classmethod
    def from_matrix(cls, R, t) -> ExtrinsicParams:
        rx, ry, rz = angles_from_rotation(R)
        t = np.asarray(t, dtype=float).ravel()
        return cls(rx, ry, rz, *t.tolist())

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz, self.tx, self.ty, self.tz])

    def rotation(self) -> np.ndarray:
        return rotation_from_angles(self.rx, self.ry, self.rz)

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])


def _as_theta(theta) -> np.ndarray:
    if isinstance(theta, ExtrinsicParams):
        return theta.as_array()
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (6,):
        raise ValueError(f"expected 6 parameters, got shape {theta.shape}")
    return theta


def rotation_from_angles(rx: float, ry: float, rz: float) -> np.ndarray:
    """Return ``Rz(rz) @ Ry(ry) @ Rx(rx)``."""
    if not all(math.isfinite(a) for a in (rx, ry, rz)):
        raise ValueError(f"rotation angles must be finite, got {(rx, ry, rz)}")
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    return np.array(
        [
            [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
            [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
            [-sy, cy * sx, cy * cx],
        ]
    )


def angles_from_rotation(R) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_from_angles` (Z-Y-X Euler angles).

    At the gimbal-lock singularity (``ry = +-pi/2``) only ``rx -+ rz`` is
    determined; ``rz`` is then reported as 0.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"expected 3x3 rotation, got {R.shape}")
    sy = -R[2, 0]
    ry = math.asin(max(-1.0, min(1.0, sy)))
    if abs(R[2, 0]) < 1.0 - 1e-12:
        rx = math.atan2(R[2, 1], R[2, 2])
        rz = math.atan2(R[1, 0], R[0, 0])
    else:
        rz = 0.0
        if sy > 0:
            rx = math.atan2(R[0, 1], R[1, 1])
        else:
            rx = math.atan2(-R[0, 1], R[1, 1])
    return wrap_angle(rx), wrap_angle(ry), wrap_angle(rz)


def transform_point(theta, p) -> np.ndarray:
    """Map LiDAR-frame point(s) ``p`` (shape (3,) or (N, 3)) into the camera frame."""
    th = _as_theta(theta)
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("points must be finite")
    R = rotation_from_angles(*th[:3])
    return p @ R.T + th[3:]


@dataclass(frozen=True)
class CameraIntrinsics:
    """3x4 projection matrix plus the image size (width N, height M) in pixels."""

    P: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        P = np.array(self.P, dtype=float).reshape(3, 4)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        if not (P[0, 0] > 0 and P[1, 1] > 0):
            raise ValueError("focal entries P[0,0] and P[1,1] must be positive")
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2")
        if not (0 <= P[0, 2] < self.width and 0 <= P[1, 2] < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_pinhole(cls, fx, fy, cx, cy, width, height) -> CameraIntrinsics:
        P = np.array([[fx, 0.0, cx, 0.0], [0.0, fy, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return cls(P, int(width), int(height))

    @property
    def fx(self) -> float:
        return float(self.P[0, 0])

    @property
    def fy(self) -> float:
        return float(self.P[1, 1])

    @property
    def cx(self) -> float:
        return float(self.P[0, 2])

    @property
    def cy(self) -> float:
        return float(self.P[1, 2])

    def horizontal_fov(self) -> float:
        """Full horizontal field of view in radians."""
        left = math.atan2(self.cx, self.fx)
        right = math.atan2(self.width - 1 - self.cx, self.fx)
        return left + right

    def __eq__(self, other):
        if not isinstance(other, CameraIntrinsics):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.P, other.P)
        )

    __hash__ = None


def project_to_image(k: CameraIntrinsics, p_cam):
    """Pinhole projection of camera-frame point(s).

    Returns ``(uv, depth, inside)``: pixel coordinates (column, row), the
    forward (z) coordinate, and a flag that is true when the point is in
    front of the camera and lands inside ``[0, N) x [0, M)``.
    Points behind the camera get NaN pixel coordinates.
    """
    p = np.asarray(p_cam, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    h = p @ k.P[:, :3].T + k.P[:, 3]
    depth = p[:, 2]
    front = (depth > 0) & (h[:, 2] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[:, :2] / h[:, 2:3]
    uv[~front] = np.nan
    inside = (
        front
        & (uv[:, 0] >= 0)
        & (uv[:, 0] < k.width)
        & (uv[:, 1] >= 0)
        & (uv[:, 1] < k.height)
    )
    if single:
        return uv[0], float(depth[0]), bool(inside[0])
    return uv, depth, inside


@dataclass(frozen=True)
class PanoramaGeometry:
    """Cylindrical panorama grid.

    Columns follow azimuth ``atan2(y, x)`` (increasing column = increasing
    azimuth), rows follow elevation with the highest elevation on row 0.
    ``scale`` is the dimensionless factor ``h``; the cell size is
    ``delta_h / scale`` by ``delta_v / scale`` radians.
    """

    delta_h: float
    delta_v: float
    az_center: float = 0.0
    az_half_width: float = math.pi
    el_min: float = math.radians(-25.0)
    el_max: float = math.radians(3.0)
    scale: float = 1.0
    width: int = field(init=False)
    height: int = field(init=False)

    def __post_init__(self):
        if not (self.delta_h > 0 and self.delta_v > 0 and self.scale > 0):
            raise ValueError("delta_h, delta_v and scale must be positive")
        if not (0 < self.az_half_width <= math.pi):
            raise ValueError("az_half_width must lie in (0, pi]")
        if not self.el_max > self.el_min:
            raise ValueError("el_max must exceed el_min")
        object.__setattr__(self, "az_center", wrap_angle(self.az_center))
        w = int(round(2.0 * self.az_half_width * self.scale / self.delta_h)) + 1
        h = int(round((self.el_max - self.el_min) * self.scale / self.delta_v)) + 1
        if w < 2 or h < 2:
            raise ValueError(f"panorama too small ({h}x{w})")
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "height", h)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def for_camera(
        cls,
        theta,
        k: CameraIntrinsics,
        delta_h: float,
        delta_v: float,
        el_min: float,
        el_max: float,
        pad: float = math.radians(10.0),
        full_360: bool = False,
        scale: float = 1.0,
    ) -> PanoramaGeometry:
        """Azimuth window covering the camera's horizontal FOV plus ``pad`` per side."""
        if full_360:
            return cls(delta_h, delta_v, 0.0, math.pi, el_min, el_max, scale)
        R = rotation_from_angles(*_as_theta(theta)[:3])
        axis = R[2]  # optical axis in the LiDAR frame
        center = math.atan2(axis[1], axis[0])
        half = min(math.pi, 0.5 * k.horizontal_fov() + pad)
        return cls(delta_h, delta_v, center, half, el_min, el_max, scale)


def cylindrical_project(p, geom: PanoramaGeometry):
    """Panorama cell(s) for LiDAR point(s).

    Returns ``(col, row, valid)``; ``valid`` is false for points outside the
    azimuth/elevation window (their indices are -1). A single (3,) point
    returns scalars.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)[:, :3]
    rho = np.hypot(p[:, 0], p[:, 1])
    if np.any((rho == 0) & (p[:, 2] == 0)):
        raise ValueError("cannot project a point at the origin")
    az = np.arctan2(p[:, 1], p[:, 0])
    el = np.arctan2(p[:, 2], rho)
    d_az = np.mod(az - geom.az_center + np.pi, 2.0 * np.pi) - np.pi
    el_c = 0.5 * (geom.el_min + geom.el_max)
    half_v = 0.5 * (geom.el_max - geom.el_min)
    tol = 1e-12
    valid = (np.abs(d_az) <= geom.az_half_width + tol) & (np.abs(el - el_c) <= half_v + tol)

    col_c = 0.5 * (geom.width - 1)
    row_c = 0.5 * (geom.height - 1)
    col = np.floor(col_c + geom.scale / geom.delta_h * d_az + 0.5).astype(np.int64)
    row = np.floor(row_c - geom.scale / geom.delta_v * (el - el_c) + 0.5).astype(np.int64)
    col = np.clip(col, 0, geom.width - 1)
    row = np.clip(row, 0, geom.height - 1)
    col[~valid] = -1
    row[~valid] = -1
    if single:
        return int(col[0]), int(row[0]), bool(valid[0])
    return col, row, valid

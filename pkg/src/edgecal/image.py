"""Camera-side image processing and shared 2D primitives.

All images are float arrays indexed ``[row, col]``. Borders are handled by
edge replication everywhere so that no operator invents an edge along the
frame.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage


def _check_image(img, min_size=2):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")
    if img.shape[0] < min_size or img.shape[1] < min_size:
        raise ValueError(f"image must be at least {min_size}x{min_size}, got {img.shape}")
    return img


def histogram_equalize(img, bins: int = 256) -> np.ndarray:
    """Map every intensity in [0, 1] to the cumulative histogram value of its bin."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    img = _check_image(img)
    q = np.clip(np.floor(img * bins).astype(np.int64), 0, bins - 1)
    hist = np.bincount(q.ravel(), minlength=bins)
    cdf = np.cumsum(hist) / q.size
    return cdf[q]


def sobel_gradients(img):
    """Horizontal and vertical Sobel responses (unnormalized 3x3 kernels)."""
    img = _check_image(img, 3)
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return gx, gy


def sobel_edges(img) -> np.ndarray:
    """Gradient magnitude ``sqrt(gx**2 + gy**2)``.

    A unit step between two flat regions yields magnitude 4 on both
    step-adjacent columns.
    """
    gx, gy = sobel_gradients(img)
    return np.hypot(gx, gy)


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with radius ``ceil(3*sigma)``."""
    k = gaussian_kernel(sigma)
    img = np.asarray(img, dtype=float)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def camera_edge_map(img, sigma: float = 3.0, bins: int = 256) -> np.ndarray:
    """Equalize, Sobel, Gaussian-expand and rescale to a peak of 1."""
    e = gaussian_blur(sobel_edges(histogram_equalize(img, bins)), sigma)
    peak = e.max()
    if peak <= 0:
        return np.zeros_like(e)
    return e / peak


# neighbour offsets (drow, dcol) across the edge for each quantized direction
_NMS_OFFSETS = {
    0: (0, 1),  # gradient along columns
    1: (1, 1),  # 45 deg
    2: (1, 0),  # gradient along rows
    3: (1, -1),  # 135 deg
}


def _shift(a, dr, dc):
    """``out[r, c] = a[r + dr, c + dc]`` with edge replication."""
    p = np.pad(a, 1, mode="edge")
    h, w = a.shape
    return p[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]


def canny(img, sigma: float = 1.4, low: float = 0.1, high: float = 0.3) -> np.ndarray:
    """Binary Canny edges.

    ``low`` and ``high`` are fractions of the maximum gradient magnitude.
    Gradient orientation is quantized to 0/45/90/135 degrees for
    non-maximum suppression; weak pixels survive only when 8-connected to a
    strong one.
    """
    if not (0 <= low < high <= 1):
        raise ValueError(f"need 0 <= low < high <= 1, got low={low}, high={high}")
    img = _check_image(img, 3)
    smooth = gaussian_blur(img, sigma) if sigma > 0 else img
    gx, gy = sobel_gradients(smooth)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-12 * max(1.0, np.abs(img).max()):
        return np.zeros(img.shape, dtype=bool)

    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector = (np.floor((angle + 22.5) / 45.0).astype(int)) % 4

    keep = np.zeros(img.shape, dtype=bool)
    for s, (dr, dc) in _NMS_OFFSETS.items():
        fwd = _shift(mag, dr, dc)
        back = _shift(mag, -dr, -dc)
        # asymmetric tie rule keeps exactly one pixel of a symmetric ridge
        local_max = (mag >= fwd) & (mag > back)
        keep |= (sector == s) & local_max
    keep &= mag > 0

    strong = keep & (mag >= high * peak)
    weak = keep & (mag >= low * peak)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(img.shape, dtype=bool)
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[np.unique(labels[strong])] = True
    has_strong[0] = False
    return has_strong[labels]


def _check_radius(kernel_radius):
    if kernel_radius < 1:
        raise ValueError("kernel_radius must be >= 1")
    return 2 * int(kernel_radius) + 1


def dilate(mask, kernel_radius: int) -> np.ndarray:
    """Binary dilation with a square ``(2r+1)^2`` structuring element."""
    size = _check_radius(kernel_radius)
    return ndimage.maximum_filter(np.asarray(mask, dtype=bool), size=size, mode="nearest")


def erode(mask, kernel_radius: int) -> np.ndarray:
    """Binary erosion with a square ``(2r+1)^2`` structuring element."""
    size = _check_radius(kernel_radius)
    return ndimage.minimum_filter(np.asarray(mask, dtype=bool), size=size, mode="nearest")


def close(mask, kernel_radius: int) -> np.ndarray:
    """Morphological closing: ``erode(dilate(mask))`` with the same kernel."""
    return erode(dilate(mask, kernel_radius), kernel_radius)


def bilinear_sample(grid, u):
    """Bilinear interpolation of ``grid`` at continuous pixel coordinates.

    ``u`` holds ``(col, row)`` pairs, shape (2,) or (N, 2). Returns
    ``(values, inside)``; samples outside ``[0, N-1] x [0, M-1]`` (or NaN)
    get value 0 and ``inside`` False.
    """
    grid = np.asarray(grid, dtype=float)
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    h, w = grid.shape
    x, y = u[:, 0], u[:, 1]
    with np.errstate(invalid="ignore"):
        inside = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xs = np.where(inside, x, 0.0)
    ys = np.where(inside, y, 0.0)
    x0 = np.minimum(np.floor(xs).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(ys).astype(np.int64), h - 2)
    fx = xs - x0
    fy = ys - y0
    v = (
        grid[y0, x0] * (1 - fx) * (1 - fy)
        + grid[y0, x0 + 1] * fx * (1 - fy)
        + grid[y0 + 1, x0] * (1 - fx) * fy
        + grid[y0 + 1, x0 + 1] * fx * fy
    )
    v = np.where(inside, v, 0.0)
    if single:
        return float(v[0]), bool(inside[0])
    return v, inside

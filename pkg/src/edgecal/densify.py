"""Sparse feature panoramas and their dense completion by masked TV minimization.

The completion problem is::

    min_phi  ||H * (u - phi)||_2^2 + lam * sum(|Dx phi| + |Dy phi|)

with ``H`` the binary observation mask and forward differences ``Dx``,
``Dy`` that vanish across the last row/column (replicate boundary). It is
solved with monotone FISTA: gradient steps on the fidelity term (Lipschitz
constant 2) followed by the anisotropic TV proximal operator, itself
computed by a warm-started fast dual projected gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .segmentation import LabeledCloud
from .geometry import PanoramaGeometry

log = logging.getLogger(__name__)

FEATURES = ("depth", "reflectivity", "object")


@dataclass
class SparsePanorama:
    values: np.ndarray
    mask: np.ndarray
    feature: str

    @property
    def density(self) -> float:
        return float(self.mask.mean())


@dataclass
class DensePanorama:
    values: np.ndarray
    feature: str
    iterations: int = 0
    objective: float = float("nan")
    history: list = field(default_factory=list, repr=False)


def feature_values(cloud: LabeledCloud, feature: str) -> np.ndarray:
    p = cloud.points
    if feature == "depth":
        return np.linalg.norm(p[:, :3], axis=1)
    if feature == "reflectivity":
        return p[:, 3].astype(float)
    if feature == "object":
        return cloud.flags.astype(float)
    raise ValueError(f"unknown feature {feature!r}; expected one of {FEATURES}")


def build_sparse_panorama(cloud: LabeledCloud, feature: str, geom: PanoramaGeometry) -> SparsePanorama:
    """Scatter a per-point feature into the panorama; the nearest return wins a cell."""
    if feature not in FEATURES:
        raise ValueError(f"unknown feature {feature!r}; expected one of {FEATURES}")
    values = np.zeros(geom.shape)
    mask = np.zeros(geom.shape, dtype=bool)
    v = cloud.valid
    if not v.any():
        return SparsePanorama(values, mask, feature)
    feat = feature_values(cloud, feature)[v]
    rng = np.linalg.norm(cloud.points[v, :3], axis=1)
    row, col = cloud.row[v], cloud.col[v]
    # write far-to-near so the nearest point is written last; stable on ties
    order = np.argsort(-rng, kind="stable")
    values[row[order], col[order]] = feat[order]
    mask[row, col] = True
    return SparsePanorama(values, mask, feature)


def _grad(x):
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gx[:, :-1] = x[:, 1:] - x[:, :-1]
    gy[:-1, :] = x[1:, :] - x[:-1, :]
    return gx, gy


def _grad_adj(px, py):
    """Adjoint of :func:`_grad` (negative divergence)."""
    out = np.zeros_like(px)
    out[:, :-1] -= px[:, :-1]
    out[:, 1:] += px[:, :-1]
    out[:-1, :] -= py[:-1, :]
    out[1:, :] += py[:-1, :]
    return out


def total_variation(x) -> float:
    gx, gy = _grad(x)
    return float(np.abs(gx).sum() + np.abs(gy).sum())


def tv_objective(phi, u, mask, lam) -> float:
    r = np.where(mask, u - phi, 0.0)
    return float(np.sum(r * r) + lam * total_variation(phi))


def prox_tv(z, tau, dual=None, iterations=20):
    """``argmin_x 0.5||x - z||^2 + tau * TVaniso(x)`` by fast dual projection.

    ``dual`` is a ``(px, py)`` warm start; the updated dual is returned with
    the solution.
    """
    if tau <= 0:
        return z.copy(), dual
    if dual is None:
        px = np.zeros_like(z)
        py = np.zeros_like(z)
    else:
        px, py = dual
    qx, qy = px, py
    t = 1.0
    step = 1.0 / (8.0 * tau)
    for _ in range(iterations):
        x = z - tau * _grad_adj(qx, qy)
        gx, gy = _grad(x)
        nx = np.clip(qx + step * gx, -1.0, 1.0)
        ny = np.clip(qy + step * gy, -1.0, 1.0)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = (t - 1.0) / t_next
        qx = nx + w * (nx - px)
        qy = ny + w * (ny - py)
        px, py, t = nx, ny, t_next
    return z - tau * _grad_adj(px, py), (px, py)


def tv_inpaint(
    sparse: SparsePanorama,
    lam: float = 0.05,
    max_iter: int = 400,
    tol: float = 1e-5,
    inner_iter: int = 20,
    patience: int = 5,
) -> DensePanorama:
    """Dense completion of a sparse panorama by anisotropic TV minimization.

    Stops after ``max_iter`` iterations or once the relative objective change
    stays below ``tol`` for ``patience`` consecutive iterations. The returned
    objective never exceeds the objective of the starting point (observed
    cells kept, unobserved ones set to the observed mean).
    """
    mask = np.asarray(sparse.mask, dtype=bool)
    u = np.asarray(sparse.values, dtype=float)
    if not mask.any():
        raise ValueError(f"{sparse.feature} panorama has no observed cells")
    if not np.all(np.isfinite(u[mask])):
        raise ValueError(f"{sparse.feature} panorama holds non-finite observations")
    if lam <= 0:
        raise ValueError("lam must be positive")
    u = np.where(mask, u, 0.0)

    L = 2.0
    x = np.where(mask, u, u[mask].mean())
    f_x = tv_objective(x, u, mask, lam)
    history = [f_x]
    y = x.copy()
    t = 1.0
    dual = None
    quiet = 0
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * np.where(mask, y - u, 0.0)
        z, dual = prox_tv(y - grad / L, lam / L, dual, inner_iter)
        f_z = tv_objective(z, u, mask, lam)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if f_z <= f_x:
            x_next, f_next = z, f_z
        else:
            x_next, f_next = x, f_x
        y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x)
        rel = abs(f_x - f_next) / max(abs(f_x), 1e-30)
        x, f_x, t = x_next, f_next, t_next
        history.append(f_x)
        quiet = quiet + 1 if rel < tol else 0
        if quiet >= patience:
            break
    log.debug("tv_inpaint %s: %d iterations, objective %.6g", sparse.feature, it, f_x)
    return DensePanorama(x, sparse.feature, it, f_x, history)

"""Edge-alignment objective and its Barzilai-Borwein gradient-ascent optimizer.

The objective for extrinsics ``theta`` is::

    J(theta) = (N_m / N_e) * sum_n E_C(proj_theta(p_n)) * P_n

over the ``N_e`` LiDAR edge points ``p_n`` with edge probabilities ``P_n``.
``E_C`` is the expanded camera edge map sampled bilinearly, and ``N_m``
counts edge points landing on a camera edge pixel (``E_C >= threshold``).
Points projecting outside the image or behind the camera contribute zero
and stay in ``N_e``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .edges import EdgePointSet
from .geometry import CameraIntrinsics, ExtrinsicParams, rotation_from_angles
from .image import bilinear_sample

log = logging.getLogger(__name__)


class NoEdgesError(ValueError):
    """The frame has no LiDAR edge points, so the objective is undefined."""


@dataclass(frozen=True)
class CostBreakdown:
    J: float
    n_matched: int
    n_edge: int
    raw_sum: float

    @property
    def precision(self) -> float:
        return self.n_matched / self.n_edge


def _theta_array(theta) -> np.ndarray:
    if isinstance(theta, ExtrinsicParams):
        return theta.as_array()
    return np.asarray(theta, dtype=float).ravel()


def projected_edge_values(theta, points, e_c, k: CameraIntrinsics):
    """Sampled camera edge value per point (0 when not visible) and visibility."""
    th = _theta_array(theta)
    R = rotation_from_angles(*th[:3])
    pc = points @ R.T + th[3:]
    h = pc @ k.P[:, :3].T + k.P[:, 3]
    front = (pc[:, 2] > 0) & (h[:, 2] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[:, :2] / h[:, 2:3]
    uv[~front] = np.nan
    vals, inside = bilinear_sample(e_c, uv)
    return vals, inside & front


def evaluate_cost(
    theta,
    edges: EdgePointSet,
    e_c,
    k: CameraIntrinsics,
    match_threshold: float = 0.2,
) -> CostBreakdown:
    if edges.n_edge == 0:
        raise NoEdgesError("no edge points: the objective is undefined")
    vals, visible = projected_edge_values(theta, edges.points, e_c, k)
    # fixed-order reduction keeps the value independent of chunking
    raw = float(np.sum(vals * edges.prob))
    matched = int(np.count_nonzero(visible & (vals >= match_threshold)))
    return CostBreakdown(matched / edges.n_edge * raw, matched, edges.n_edge, raw)


def make_cost(edges: EdgePointSet, e_c, k: CameraIntrinsics, match_threshold: float = 0.2):
    """Return ``theta -> J`` for a fixed frame."""
    if edges.n_edge == 0:
        raise NoEdgesError("no edge points: the objective is undefined")
    e_c = np.asarray(e_c, dtype=float)

    def cost(theta) -> float:
        return evaluate_cost(theta, edges, e_c, k, match_threshold).J

    return cost


def numeric_gradient(cost, theta, delta_h) -> np.ndarray:
    """Central differences ``(J(theta + h_i e_i) - J(theta - h_i e_i)) / (2 h_i)``."""
    th = _theta_array(theta)
    h = np.broadcast_to(np.asarray(delta_h, dtype=float), th.shape)
    if np.any(h <= 0):
        raise ValueError("all delta_h components must be positive")
    g = np.empty_like(th)
    for i in range(len(th)):
        e = np.zeros_like(th)
        e[i] = h[i]
        g[i] = (cost(th + e) - cost(th - e)) / (2.0 * h[i])
    return g


@dataclass
class TraceEntry:
    theta: np.ndarray
    J: float
    grad_norm: float
    step: float


@dataclass
class OptimizerTrace:
    entries: list = field(default_factory=list)
    termination: str = "max_iter"

    def __len__(self):
        return len(self.entries)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([e.theta for e in self.entries])

    @property
    def values(self) -> np.ndarray:
        return np.array([e.J for e in self.entries])


@dataclass
class CalibrationResult:
    theta: ExtrinsicParams
    trace: OptimizerTrace
    cost: CostBreakdown | None = None
    config: dict = field(default_factory=dict)

    @property
    def termination(self) -> str:
        return self.trace.termination

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


DEFAULT_DELTA_H = (1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 1e-3)


def bb_ascent(
    cost,
    theta0,
    epsilon: float = 1e-5,
    max_iter: int = 200,
    delta_h=DEFAULT_DELTA_H,
    gamma0: float = 1e-2,
    max_step: float | None = None,
) -> CalibrationResult:
    """Maximize ``cost`` by normalized gradient ascent with Barzilai-Borwein steps.

    The update is ``theta + gamma_k * G_k / |G_k|``. The first step has
    length ``gamma0``; afterwards the BB curvature estimate
    ``-s.s / s.g`` (``s``, ``g`` = change in theta and in gradient) is
    turned into a step length by multiplying with ``|G_k|``. A non-positive
    or non-finite estimate falls back to ``gamma0``. ``max_step`` optionally
    caps the step length. Iteration stops when a step is shorter than
    ``epsilon``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    cap = math.inf if max_step is None else float(max_step)
    theta = _theta_array(theta0).astype(float).copy()
    J = float(cost(theta))
    G = numeric_gradient(cost, theta, delta_h)
    trace = OptimizerTrace([TraceEntry(theta.copy(), J, float(np.linalg.norm(G)), 0.0)])

    prev_theta = prev_G = None
    termination = "max_iter"
    for k in range(max_iter):
        gnorm = float(np.linalg.norm(G))
        if not np.isfinite(gnorm):
            termination = "degenerate_step"
            break
        if gnorm == 0.0:
            termination = "converged"
            break
        gamma = gamma0
        if prev_theta is not None:
            s = theta - prev_theta
            sg = float(s @ (G - prev_G))
            if sg != 0.0:
                bb = -float(s @ s) / sg * gnorm
                if math.isfinite(bb) and bb > 0:
                    gamma = bb
        gamma = min(gamma, cap)
        prev_theta, prev_G = theta, G
        theta = theta + gamma * G / gnorm
        J = float(cost(theta))
        G = numeric_gradient(cost, theta, delta_h)
        trace.entries.append(TraceEntry(theta.copy(), J, float(np.linalg.norm(G)), gamma))
        if np.linalg.norm(theta - prev_theta) <= epsilon:
            termination = "converged"
            break
    trace.termination = termination
    log.debug("bb_ascent: %s after %d steps, J=%.6g", termination, len(trace) - 1, J)
    return CalibrationResult(ExtrinsicParams.from_array(theta), trace)

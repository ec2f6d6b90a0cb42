"""Objective slices and multi-frame error statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PARAM_NAMES, ExtrinsicParams


@dataclass(frozen=True)
class SweepSpec:
    """One 1-D slice of the objective around a center θ."""

    param: int
    half_range: float = 0.3
    samples: int = 61
    normalize: bool = False

    def __post_init__(self):
        if isinstance(self.param, str):
            if self.param not in PARAM_NAMES:
                raise ValueError(f"unknown parameter {self.param!r}; expected one of {', '.join(PARAM_NAMES)}")
            object.__setattr__(self, "param", PARAM_NAMES.index(self.param))
        if not 0 <= self.param < 6:
            raise ValueError("param index must lie in 0..5")
        if self.samples < 3:
            raise ValueError("a sweep needs at least 3 samples")
        if not self.half_range > 0:
            raise ValueError("half_range must be positive")

    @property
    def name(self) -> str:
        return PARAM_NAMES[self.param]

    def offsets(self) -> np.ndarray:
        return np.linspace(-self.half_range, self.half_range, self.samples)


def normalize_slice(values) -> np.ndarray:
    """Affine map onto [0, 1]; a constant slice maps to zeros.

    Only the maxima map to exactly 1, so the argmax survives rounding.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    n = (v - lo) / (hi - lo)
    n[v == lo] = 0.0
    n[v == hi] = 1.0
    n[(v < hi) & (n >= 1.0)] = np.nextafter(1.0, 0.0)
    return n


def sweep(cost, center, spec: SweepSpec) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``cost`` along one parameter; returns (offsets, values)."""
    c = center.as_array() if isinstance(center, ExtrinsicParams) else np.asarray(center, dtype=float)
    offsets = spec.offsets()
    vals = np.empty_like(offsets)
    for i, o in enumerate(offsets):
        th = c.copy()
        th[spec.param] += o
        vals[i] = cost(th)
    if spec.normalize:
        vals = normalize_slice(vals)
    return offsets, vals


def format_sweep(spec: SweepSpec, offsets, values) -> str:
    lines = [f"# param={spec.name} samples={spec.samples} half_range={spec.half_range!r} normalize={spec.normalize}"]
    lines.append("offset\tJ")
    lines += [f"{float(o)!r}\t{float(v)!r}" for o, v in zip(offsets, values)]
    return "\n".join(lines) + "\n"


def parse_sweep(text: str) -> tuple[np.ndarray, np.ndarray]:
    rows = [ln.split("\t") for ln in text.splitlines() if ln and not ln.startswith("#") and not ln.startswith("offset")]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


@dataclass
class MultiFrameReport:
    """Per-frame estimates against a shared ground truth.

    ``mean_error`` is the signed average residual and ``mae`` the mean of
    absolute residuals. They differ whenever residuals change sign.
    """

    frame_ids: list
    estimates: np.ndarray
    truth: np.ndarray
    terminations: list | None = None

    def __post_init__(self):
        self.estimates = np.atleast_2d(np.asarray(self.estimates, dtype=float))
        self.truth = np.asarray(self.truth, dtype=float).reshape(6)
        if self.estimates.shape[1] != 6 or len(self.frame_ids) != len(self.estimates):
            raise ValueError("need one 6-vector estimate per frame id")
        if len(self.estimates) == 0:
            raise ValueError("report needs at least one frame")

    @property
    def residuals(self) -> np.ndarray:
        r = self.estimates - self.truth
        r[:, :3] = (r[:, :3] + np.pi) % (2 * np.pi) - np.pi
        return r

    @property
    def mean_estimate(self) -> np.ndarray:
        return self.estimates.mean(axis=0)

    @property
    def mean_error(self) -> np.ndarray:
        return self.residuals.mean(axis=0)

    @property
    def mae(self) -> np.ndarray:
        return np.abs(self.residuals).mean(axis=0)

    def quartiles(self) -> np.ndarray:
        """Rows min, q1, median, q3, max of the signed residuals."""
        return np.quantile(self.residuals, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)

    def format(self) -> str:
        names = "\t".join(PARAM_NAMES)

        def row(label, v):
            return label + "\t" + "\t".join(repr(float(x)) for x in v)

        lines = [f"# multi-frame report, {len(self.frame_ids)} frames", "[summary]", "stat\t" + names]
        lines.append(row("truth", self.truth))
        lines.append(row("mean_estimate", self.mean_estimate))
        lines.append(row("mean_error", self.mean_error))
        lines.append(row("mae", self.mae))
        lines += ["[quartiles]", "stat\t" + names]
        for label, q in zip(("min", "q1", "median", "q3", "max"), self.quartiles()):
            lines.append(row(label, q))
        lines += ["[frames]", "frame\t" + names + "\ttermination"]
        terms = self.terminations or [""] * len(self.frame_ids)
        for fid, est, term in zip(self.frame_ids, self.estimates, terms):
            lines.append(row(str(fid), est) + f"\t{term}")
        return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    """Read a formatted report back into ``{section: {label: values}}``."""
    out: dict = {}
    section = None
    for ln in text.splitlines():
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("["):
            section = ln.strip("[]")
            out[section] = {}
            continue
        parts = ln.split("\t")
        if parts[0] in ("stat", "frame"):
            continue
        out[section][parts[0]] = np.array(parts[1:7], dtype=float)
    return out

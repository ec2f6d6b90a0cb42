"""File formats: KITTI velodyne scans, PGM/PPM images, calibration text,
flat key-value configuration and result files.

Panorama dumps are 16-bit P5 images. The header carries a comment line
``# value = offset + scale * pixel`` giving the affine map back to feature
units.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .geometry import PARAM_NAMES, CameraIntrinsics, ExtrinsicParams, rotation_from_angles
from .objective import CalibrationResult


class ParseError(ValueError):
    """Malformed input file."""


@dataclass
class FramePair:
    cloud: np.ndarray
    image: np.ndarray
    intrinsics: CameraIntrinsics
    frame_id: str = ""
    truth: ExtrinsicParams | None = None

    def __post_init__(self):
        if len(self.cloud) == 0:
            raise ValueError(f"frame {self.frame_id!r}: empty point cloud")
        h, w = self.image.shape
        if (w, h) != (self.intrinsics.width, self.intrinsics.height):
            raise ValueError(
                f"frame {self.frame_id!r}: image is {w}x{h} but intrinsics say "
                f"{self.intrinsics.width}x{self.intrinsics.height}"
            )


# ---------------------------------------------------------------- point clouds


def load_velodyne_bin(path) -> np.ndarray:
    """Little-endian float32 records ``x y z reflectance`` -> ``(N, 4)`` float array."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 16:
        raise ParseError(
            f"{path}: length {len(data)} is not a multiple of 16 bytes "
            f"(truncated record at byte offset {len(data) - len(data) % 16})"
        )
    pts = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(float)
    bad = ~np.isfinite(pts)
    if bad.any():
        first = int(np.flatnonzero(bad.ravel())[0])
        raise ParseError(f"{path}: non-finite value at byte offset {4 * first}")
    return pts


def write_velodyne_bin(path, points) -> None:
    pts = np.asarray(points, dtype="<f4")
    if pts.ndim != 2 or pts.shape[1] != 4:
        raise ValueError("points must have shape (N, 4)")
    Path(path).write_bytes(pts.tobytes())


# ---------------------------------------------------------------- images


def _read_netpbm_header(data: bytes, path):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError(f"{path}: truncated header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace before the raster
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{path}: bad header fields {tokens[1:]}") from None
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise ParseError(f"{path}: bad dimensions or maxval {tokens[1:]}")
    return magic, width, height, maxval, pos


def load_gray_image(path) -> np.ndarray:
    """Load a binary PGM (P5) or PPM (P6) as a float image in [0, 1].

    Colour images are reduced with luma weights 0.299 R + 0.587 G + 0.114 B.
    """
    path = Path(path)
    data = path.read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"{path}: unsupported magic number {magic!r} (need P5 or P6)")
    magic, w, h, maxval, pos = _read_netpbm_header(data, path)
    channels = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * channels
    nbytes = n * np.dtype(dtype).itemsize
    raster = data[pos:]
    if len(raster) != nbytes:
        raise ParseError(f"{path}: expected {nbytes} raster bytes for {w}x{h}, found {len(raster)}")
    arr = np.frombuffer(raster, dtype=dtype).astype(float) / maxval
    if channels == 3:
        arr = arr.reshape(h, w, 3) @ np.array([0.299, 0.587, 0.114])
    else:
        arr = arr.reshape(h, w)
    return np.clip(arr, 0.0, 1.0)


def write_pgm(path, img, bits: int = 8, comment: str | None = None) -> None:
    """Write a [0, 1] float image as binary PGM with 8 or 16 bits per pixel."""
    img = np.asarray(img, dtype=float)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 255 if bits == 8 else 65535
    q = np.round(np.clip(img, 0.0, 1.0) * maxval)
    raster = q.astype("u1" if bits == 8 else ">u2").tobytes()
    header = "P5\n"
    if comment:
        header += "".join(f"# {line}\n" for line in comment.splitlines())
    header += f"{img.shape[1]} {img.shape[0]}\n{maxval}\n"
    Path(path).write_bytes(header.encode("ascii") + raster)


def write_panorama(pano, path) -> tuple[float, float]:
    """16-bit P5 dump of a panorama (or any 2D array); returns ``(offset, scale)``."""
    values = np.asarray(getattr(pano, "values", pano), dtype=float)
    lo, hi = float(values.min()), float(values.max())
    scale = (hi - lo) / 65535.0 if hi > lo else 1.0
    norm = (values - lo) / (scale * 65535.0) if hi > lo else np.zeros_like(values)
    feature = getattr(pano, "feature", "array")
    write_pgm(
        path,
        norm,
        bits=16,
        comment=f"feature: {feature}\nvalue = offset + scale * pixel, offset={lo!r} scale={scale!r}",
    )
    return lo, scale


def read_panorama(path) -> np.ndarray:
    """Inverse of :func:`write_panorama` (up to 16-bit quantization)."""
    path = Path(path)
    text = path.read_bytes().split(b"\n", 4)
    m = None
    for line in text:
        m = re.search(rb"offset=(\S+) scale=(\S+)", line)
        if m:
            break
    if m is None:
        raise ParseError(f"{path}: missing value scaling comment")
    offset, scale = float(m.group(1)), float(m.group(2))
    return offset + scale * np.round(load_gray_image(path) * 65535.0)


# ---------------------------------------------------------------- calibration


def _parse_kv_floats(path):
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            out[key.strip()] = [float(v) for v in rest.split()]
        except ValueError:
            # non-numeric records (e.g. calib_time) are ignored unless needed
            out[key.strip()] = ParseError(f"{path}:{lineno}: malformed number in {key.strip()!r}")
    return out


def _need(rec, keys, count, path):
    for key in keys:
        if key in rec:
            val = rec[key]
            if isinstance(val, ParseError):
                raise val
            if len(val) != count:
                raise ParseError(f"{path}: {key!r} needs {count} values, got {len(val)}")
            return val
    raise ParseError(f"{path}: missing key {keys[0]!r}")


def load_calib(path, image_size=None):
    """Read intrinsics and (if present) ground-truth extrinsics.

    Recognized keys: projection ``P_rect_02`` / ``P2`` / ``P`` (12 values,
    row-major), image size ``S_rect_02`` / ``S`` (width height), extrinsic
    ``R`` (9) + ``T`` (3) or ``Tr_velo_to_cam`` (12). ``image_size`` overrides
    or supplies the size when the file has none.

    Returns ``(CameraIntrinsics, ExtrinsicParams or None)``.
    """
    rec = _parse_kv_floats(path)
    P = _need(rec, ("P_rect_02", "P2", "P"), 12, path)
    if image_size is None:
        size = _need(rec, ("S_rect_02", "S"), 2, path)
        image_size = (int(size[0]), int(size[1]))
    k = CameraIntrinsics(np.array(P).reshape(3, 4), int(image_size[0]), int(image_size[1]))

    truth = None
    if "R" in rec or "T" in rec:
        R = np.array(_need(rec, ("R",), 9, path)).reshape(3, 3)
        T = _need(rec, ("T",), 3, path)
        truth = ExtrinsicParams.from_matrix(R, T)
    elif "Tr_velo_to_cam" in rec:
        Tr = np.array(_need(rec, ("Tr_velo_to_cam",), 12, path)).reshape(3, 4)
        truth = ExtrinsicParams.from_matrix(Tr[:, :3], Tr[:, 3])
    return k, truth


def write_calib(path, k: CameraIntrinsics, truth: ExtrinsicParams | None = None) -> None:
    lines = [
        "P_rect_02: " + " ".join(repr(float(v)) for v in k.P.ravel()),
        f"S_rect_02: {k.width} {k.height}",
    ]
    if truth is not None:
        R = rotation_from_angles(truth.rx, truth.ry, truth.rz)
        lines.append("R: " + " ".join(repr(float(v)) for v in R.ravel()))
        lines.append("T: " + " ".join(repr(float(v)) for v in truth.translation()))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- config


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(raw: str, typ, key, where):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ParseError(f"{where}: bad value {raw!r} for {key!r}") from None


_TYPES = {"int": int, "float": float, "bool": bool}


def parse_config_lines(lines, where="<config>", base: PipelineConfig | None = None) -> PipelineConfig:
    valid = {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type for f in dataclasses.fields(PipelineConfig)}
    values = (base or PipelineConfig()).as_dict()
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ParseError(f"{where}:{lineno}: expected 'key = value'")
        if key not in valid:
            raise ParseError(f"{where}:{lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(valid))}")
        values[key] = _parse_value(raw, valid[key], key, f"{where}:{lineno}")
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Flat ``key = value`` file with ``#`` comments; missing keys keep defaults."""
    return parse_config_lines(Path(path).read_text().splitlines(), str(path), base)


def format_config(cfg: PipelineConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in cfg.as_dict().items())


def write_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text("# pipeline configuration\n" + format_config(cfg))


# ---------------------------------------------------------------- results


def format_result(result: CalibrationResult) -> str:
    lines = ["# extrinsic calibration result (R = Rz*Ry*Rx, p_cam = R p_lidar + t)"]
    for name, v in zip(PARAM_NAMES, result.theta.as_array()):
        lines.append(f"theta.{name} = {float(v)!r}")
    lines.append(f"termination = {result.termination}")
    lines.append(f"iterations = {result.iterations}")
    if result.cost is not None:
        c = result.cost
        lines += [
            f"cost.J = {c.J!r}",
            f"cost.n_matched = {c.n_matched}",
            f"cost.n_edge = {c.n_edge}",
            f"cost.precision = {c.precision!r}",
            f"cost.raw_sum = {c.raw_sum!r}",
        ]
    for key, v in result.config.items():
        lines.append(f"config.{key} = {_format_value(v)}")
    for i, e in enumerate(result.trace.entries):
        th = " ".join(repr(float(x)) for x in e.theta)
        lines.append(f"trace.{i} = {th} {e.J!r} {e.grad_norm!r} {e.step!r}")
    return "\n".join(lines) + "\n"


def write_result(result: CalibrationResult, path) -> None:
    try:
        Path(path).write_text(format_result(result))
    except OSError as exc:
        raise OSError(f"cannot write result file {path}: {exc}") from exc


def read_result(path) -> dict:
    """Parse a result file back into a flat ``{key: str}`` mapping."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def result_theta(fields: dict) -> ExtrinsicParams:
    return ExtrinsicParams(*(float(fields[f"theta.{n}"]) for n in PARAM_NAMES))

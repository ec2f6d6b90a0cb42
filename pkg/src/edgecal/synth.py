"""Synthetic scenes with exact ground truth.

A scene is a ground plane plus boxes, vertical cylinders and flat ground
patches (road markings). The LiDAR sits at the origin of its frame (z up)
and the camera pose comes from the true extrinsics. Both sensors are
rendered by ray casting; the camera image uses flat per-face albedo.

Scene files use the same flat ``key = value`` syntax as pipeline configs,
with indexed keys for objects::

    ground_height = 1.73
    box.0.center = 3.0 9.0 -0.9
    box.0.size = 1.8 4.2 1.6
    box.0.albedo = 0.3          # one value, or six (+x -x +y -y +z -z)
    cylinder.0.base = -2.0 6.0  # x y
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .geometry import CameraIntrinsics, ExtrinsicParams

# faces in the box frame: +x, -x, +y, -y, +z, -z
N_FACES = 6


def _six(v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size == 1:
        return np.repeat(v, N_FACES)
    if v.size != N_FACES:
        raise ValueError(f"need 1 or {N_FACES} per-face values, got {v.size}")
    return v


@dataclass
class Box:
    center: tuple
    size: tuple
    yaw: float = 0.0
    albedo: object = 0.5
    reflectivity: object = 0.2

    def __post_init__(self):
        self.center = tuple(float(c) for c in self.center)
        self.size = tuple(float(s) for s in self.size)
        self.albedo = _six(self.albedo)
        self.reflectivity = _six(self.reflectivity)


@dataclass
class Cylinder:
    base: tuple  # (x, y) of the axis
    z_min: float
    z_max: float
    radius: float
    albedo: float = 0.5
    reflectivity: float = 0.2


@dataclass
class GroundPatch:
    """Axis-aligned rectangle on the ground with its own albedo/reflectivity."""

    x_range: tuple
    y_range: tuple
    albedo: float = 0.9
    reflectivity: float = 0.8


@dataclass
class ShadowBand:
    """Ground rectangle darkened by ``factor`` in the camera image only."""

    x_range: tuple
    y_range: tuple
    factor: float = 0.4


@dataclass
class LidarModel:
    n_rings: int = 32
    el_min_deg: float = -25.0
    el_max_deg: float = 3.0
    az_step_deg: float = 0.2
    az_min_deg: float = -180.0
    az_max_deg: float = 180.0
    max_range: float = 80.0
    noise_sigma: float = 0.01

    def ring_elevations(self) -> np.ndarray:
        if self.n_rings == 1:
            return np.radians([self.el_min_deg])
        return np.radians(np.linspace(self.el_min_deg, self.el_max_deg, self.n_rings))

    def azimuths(self) -> np.ndarray:
        n = int(round((self.az_max_deg - self.az_min_deg) / self.az_step_deg))
        if self.az_max_deg - self.az_min_deg >= 360.0 - 1e-9:
            az = self.az_min_deg + self.az_step_deg * np.arange(n)
        else:
            az = self.az_min_deg + self.az_step_deg * np.arange(n + 1)
        return np.radians(az)

    @property
    def delta_v_deg(self) -> float:
        return (self.el_max_deg - self.el_min_deg) / max(self.n_rings - 1, 1)


def default_camera() -> CameraIntrinsics:
    """KITTI-like rectified camera (1242 x 375)."""
    return CameraIntrinsics.from_pinhole(721.5, 721.5, 609.6, 172.9, 1242, 375)


# camera looking along the LiDAR +y axis, 27 cm ahead and 8 cm below
DEFAULT_THETA = ExtrinsicParams(math.pi / 2 + 0.01, -0.02, 0.015, 0.06, -0.08, -0.27)


@dataclass
class SceneSpec:
    ground_height: float = 1.73
    ground_albedo: float = 0.35
    ground_reflectivity: float = 0.1
    sky_albedo: float = 0.85
    boxes: list = field(default_factory=list)
    cylinders: list = field(default_factory=list)
    patches: list = field(default_factory=list)
    shadows: list = field(default_factory=list)
    lidar: LidarModel = field(default_factory=LidarModel)
    camera: CameraIntrinsics = field(default_factory=default_camera)
    theta: ExtrinsicParams = DEFAULT_THETA
    seed: int = 0
    name: str = "scene"

    def validate(self):
        if not (self.boxes or self.cylinders):
            raise ValueError("scene needs at least one object")
        for b in self.boxes:
            if math.hypot(b.center[0], b.center[1]) > self.lidar.max_range:
                raise ValueError(f"box at {b.center} is beyond max range")
        for c in self.cylinders:
            if math.hypot(*c.base) > self.lidar.max_range:
                raise ValueError(f"cylinder at {c.base} is beyond max range")
        if self.ground_height <= 0:
            raise ValueError("ground_height must be positive (ground below the LiDAR)")


# ---------------------------------------------------------------- ray casting


class _Hits:
    """Nearest hit per ray with surface attributes."""

    def __init__(self, n):
        self.t = np.full(n, np.inf)
        self.albedo = np.zeros(n)
        self.refl = np.zeros(n)
        self.ground = np.zeros(n, dtype=bool)

    def update(self, t, albedo, refl, ground=False):
        better = t < self.t
        self.t[better] = t[better]
        self.albedo[better] = np.broadcast_to(albedo, t.shape)[better]
        self.refl[better] = np.broadcast_to(refl, t.shape)[better]
        self.ground[better] = ground


def _safe(d):
    return np.where(np.abs(d) < 1e-12, np.where(d < 0, -1e-12, 1e-12), d)


def _hit_box(o, d, box: Box):
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    Rt = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])  # world -> box
    ol = (o - np.asarray(box.center)) @ Rt.T
    dl = _safe(d @ Rt.T)
    half = 0.5 * np.asarray(box.size)
    t1 = (-half - ol) / dl
    t2 = (half - ol) / dl
    tnear = np.minimum(t1, t2)
    tfar = np.maximum(t1, t2)
    t_enter = tnear.max(axis=1)
    t_exit = tfar.min(axis=1)
    hit = (t_exit >= t_enter) & (t_enter > 1e-9)
    axis = tnear.argmax(axis=1)
    rows = np.arange(len(axis))
    entered_low = t1[rows, axis] < t2[rows, axis]  # came in through the -face
    face = 2 * axis + entered_low.astype(int)
    t = np.where(hit, t_enter, np.inf)
    return t, box.albedo[face], box.reflectivity[face]


def _hit_cylinder(o, d, cyl: Cylinder):
    ox = o[..., 0] - cyl.base[0]
    oy = o[..., 1] - cyl.base[1]
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    cc = ox * ox + oy * oy - cyl.radius**2
    disc = b * b - 4.0 * a * cc
    ok = (disc >= 0) & (a > 1e-15)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = np.where(ok, (-b - sq) / (2.0 * a), np.inf)
    z = o[..., 2] + t_side * dz
    side = ok & (t_side > 1e-9) & (z >= cyl.z_min) & (z <= cyl.z_max)
    t = np.where(side, t_side, np.inf)
    # top cap
    dzs = _safe(dz)
    t_cap = (cyl.z_max - o[..., 2]) / dzs
    px = ox + t_cap * dx
    py = oy + t_cap * dy
    cap = (t_cap > 1e-9) & (px * px + py * py <= cyl.radius**2)
    t = np.where(cap & (t_cap < t), t_cap, t)
    return t, cyl.albedo, cyl.reflectivity


def cast_rays(scene: SceneSpec, origin, dirs) -> _Hits:
    o = np.asarray(origin, dtype=float)
    d = np.asarray(dirs, dtype=float)
    hits = _Hits(len(d))

    # ground plane z = -ground_height
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = (-scene.ground_height - o[..., 2]) / d[:, 2]
    tg = np.where((d[:, 2] < 0) & (tg > 1e-9), tg, np.inf)
    with np.errstate(invalid="ignore"):
        gx = o[..., 0] + tg * d[:, 0]
        gy = o[..., 1] + tg * d[:, 1]
    g_alb = np.full(len(d), scene.ground_albedo)
    g_ref = np.full(len(d), scene.ground_reflectivity)
    for p in scene.patches:
        inside = (gx >= p.x_range[0]) & (gx <= p.x_range[1]) & (gy >= p.y_range[0]) & (gy <= p.y_range[1])
        g_alb[inside] = p.albedo
        g_ref[inside] = p.reflectivity
    hits.update(tg, g_alb, g_ref, ground=True)
    hits.gx, hits.gy = gx, gy

    for box in scene.boxes:
        hits.update(*_hit_box(o, d, box))
    for cyl in scene.cylinders:
        hits.update(*_hit_cylinder(o, d, cyl))
    return hits


def render_lidar(scene: SceneSpec) -> np.ndarray:
    """Ray-cast every (ring, azimuth) beam; returns ``(N, 4)`` x, y, z, reflectivity."""
    lid = scene.lidar
    el = lid.ring_elevations()
    az = lid.azimuths()
    E, A = np.meshgrid(el, az, indexing="ij")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    hits = cast_rays(scene, np.zeros(3), dirs)
    keep = np.isfinite(hits.t) & (hits.t <= lid.max_range)
    rng = np.random.default_rng(scene.seed)
    noise = rng.normal(0.0, lid.noise_sigma, size=len(dirs)) if lid.noise_sigma > 0 else np.zeros(len(dirs))
    r = np.where(keep, hits.t + noise, 0.0)
    pts = dirs * r[:, None]
    return np.column_stack([pts, hits.refl])[keep]


def camera_rays(scene: SceneSpec):
    """Camera centre and per-pixel unit ray directions (LiDAR frame)."""
    k = scene.camera
    R = scene.theta.rotation()
    t = scene.theta.translation()
    center = -R.T @ t
    K3 = k.P[:, :3]
    # a non-zero fourth column shifts the centre of projection
    offset = np.linalg.solve(K3, k.P[:, 3])
    center = center - R.T @ offset
    v, u = np.mgrid[0 : k.height, 0 : k.width]
    pix = np.stack([u.ravel(), v.ravel(), np.ones(u.size)], axis=1).astype(float)
    rays_cam = np.linalg.solve(K3, pix.T).T
    rays = rays_cam @ R
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return center, rays


def render_camera(scene: SceneSpec) -> np.ndarray:
    """Flat-shaded grayscale render seen through the true extrinsics."""
    k = scene.camera
    center, rays = camera_rays(scene)
    hits = cast_rays(scene, center, rays)
    img = np.where(np.isfinite(hits.t), hits.albedo, scene.sky_albedo)
    for sh in scene.shadows:
        inside = (
            hits.ground
            & np.isfinite(hits.t)
            & (hits.gx >= sh.x_range[0])
            & (hits.gx <= sh.x_range[1])
            & (hits.gy >= sh.y_range[0])
            & (hits.gy <= sh.y_range[1])
        )
        img = np.where(inside, img * sh.factor, img)
    return np.clip(img, 0.0, 1.0).reshape(k.height, k.width)


def perturb(theta, magnitudes, seed: int = 0) -> ExtrinsicParams:
    """Add independent uniform noise in ``[-m_i, m_i]`` to each component."""
    th = theta.as_array() if isinstance(theta, ExtrinsicParams) else np.asarray(theta, dtype=float)
    mags = np.broadcast_to(np.asarray(magnitudes, dtype=float), (6,))
    if np.any(mags < 0):
        raise ValueError("magnitudes must be non-negative")
    rng = np.random.default_rng(seed)
    return ExtrinsicParams.from_array(th + rng.uniform(-1.0, 1.0, 6) * mags)


# ---------------------------------------------------------------- layouts


def street_lidar() -> LidarModel:
    """64-ring sensor restricted to the half space in front of the camera."""
    return LidarModel(n_rings=64, az_min_deg=20.0, az_max_deg=160.0)


def random_urban_scene(seed: int, theta: ExtrinsicParams = DEFAULT_THETA, lidar: LidarModel | None = None) -> SceneSpec:
    """Randomized street canyon in front of the camera (LiDAR +y direction).

    Facade blocks line both sides of the street at 7.5 to 10.5 m, with
    parked cars and poles along the curbs, dashed lane markings and a
    zebra crossing a few metres ahead.
    """
    rng = np.random.default_rng(seed)
    g = 1.73
    boxes, cyls, patches = [], [], []
    for side in (-1.0, 1.0):
        y = 2.0
        while y < 45.0:
            length = rng.uniform(6.0, 12.0)
            setback = rng.uniform(7.5, 10.5)
            h = rng.uniform(5.0, 12.0)
            boxes.append(
                Box((side * (setback + 3.0), y + length / 2, h / 2 - g), (6.0, length, h), 0.0,
                    rng.uniform(0.4, 0.85), rng.uniform(0.1, 0.5))
            )
            y += length + rng.uniform(0.5, 3.0)
        y = rng.uniform(3.0, 6.0)
        while y < 30.0:
            alb = rng.uniform(0.05, 0.3) if rng.random() < 0.5 else rng.uniform(0.6, 0.95)
            boxes.append(
                Box((side * rng.uniform(3.0, 3.6), y + 2.2, 0.8 - g), (1.8, 4.4, rng.uniform(1.4, 1.7)),
                    rng.uniform(-0.05, 0.05), alb, rng.uniform(0.2, 0.7))
            )
            y += 4.4 + rng.uniform(1.0, 6.0)
        y = rng.uniform(3.0, 8.0)
        while y < 35.0:
            cyls.append(
                Cylinder((side * rng.uniform(4.6, 5.4), y), -g, rng.uniform(2.5, 5.0) - g, rng.uniform(0.1, 0.2),
                         float(rng.choice([0.1, 0.9])), rng.uniform(0.5, 0.9))
            )
            y += rng.uniform(6.0, 10.0)
    y = 3.0
    while y < 35.0:
        patches.append(GroundPatch((-0.08, 0.08), (y, y + 1.5), 0.9, 0.85))
        y += 4.0
    y0 = rng.uniform(6.5, 10.0)
    x = -6.0
    while x < 6.0:
        patches.append(GroundPatch((x, x + 0.5), (y0, y0 + 3.0), 0.9, 0.85))
        x += 1.0
    patches.append(GroundPatch((-6.0, 0.0), (y0 - 2.0, y0 - 1.6), 0.9, 0.85))

    scene = SceneSpec(g, 0.3, 0.08, 0.9, boxes, cyls, patches, [], lidar or street_lidar(), default_camera(),
                      theta, seed, f"urban-{seed}")
    scene.validate()
    return scene


def cluttered_scene(seed: int, theta: ExtrinsicParams = DEFAULT_THETA) -> SceneSpec:
    """Street canyon with extra pedestrians, bollards and a car in the near field."""
    scene = random_urban_scene(seed, theta)
    rng = np.random.default_rng(seed + 7919)
    g = scene.ground_height
    for _ in range(8):
        y = rng.uniform(3.0, 8.0)
        x = rng.uniform(-0.7, 0.7) * y
        scene.cylinders.append(
            Cylinder((x, y), -g, rng.uniform(0.8, 1.9) - g, rng.uniform(0.15, 0.3),
                     float(rng.choice([0.1, 0.9])), rng.uniform(0.3, 0.9))
        )
    scene.boxes.append(Box((rng.uniform(-1.5, 1.5), rng.uniform(6.0, 8.0), 0.8 - g), (1.8, 4.4, 1.5), 0.3, 0.15, 0.5))
    scene.name = f"cluttered-{seed}"
    scene.validate()
    return scene


def shadow_scene(seed: int, theta: ExtrinsicParams = DEFAULT_THETA) -> SceneSpec:
    """Sparse 32-ring street canyon with dark shadow bands across the road."""
    scene = random_urban_scene(seed, theta, LidarModel(n_rings=32, az_min_deg=20.0, az_max_deg=160.0))
    rng = np.random.default_rng(seed + 104729)
    y = rng.uniform(4.0, 8.0)
    while y < 30.0:
        depth = rng.uniform(1.5, 4.0)
        scene.shadows.append(ShadowBand((-12.0, rng.uniform(-2.0, 4.0)), (y, y + depth), rng.uniform(0.3, 0.5)))
        y += depth + rng.uniform(3.0, 8.0)
    scene.name = f"shadow-{seed}"
    scene.validate()
    return scene


def config_for_scene(scene: SceneSpec, base=None):
    """Pipeline config whose panorama matches the scene's LiDAR rings."""
    base = base or PipelineConfig()
    lid = scene.lidar
    return base.replace(
        pano_delta_v_deg=lid.delta_v_deg,
        pano_delta_h_deg=lid.az_step_deg,
        pano_el_min_deg=lid.el_min_deg,
        pano_el_max_deg=lid.el_max_deg,
    )


# ---------------------------------------------------------------- scene files


def _floats(raw):
    return [float(v) for v in raw.split()]


_OBJ_TYPES = {"box": Box, "cylinder": Cylinder, "patch": GroundPatch, "shadow": ShadowBand}
_OBJ_LISTS = {"box": "boxes", "cylinder": "cylinders", "patch": "patches", "shadow": "shadows"}


def parse_scene(text: str, where: str = "<scene>") -> SceneSpec:
    top = {}
    objs: dict = {kind: {} for kind in _OBJ_TYPES}
    lidar = {}
    cam = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ValueError(f"{where}:{lineno}: expected 'key = value'")
        parts = key.split(".")
        if parts[0] in _OBJ_TYPES and len(parts) == 3:
            objs[parts[0]].setdefault(int(parts[1]), {})[parts[2]] = raw
        elif parts[0] == "lidar" and len(parts) == 2:
            lidar[parts[1]] = raw
        elif parts[0] == "camera" and len(parts) == 2:
            cam[parts[1]] = raw
        else:
            top[key] = raw

    spec = SceneSpec()
    for key, raw in top.items():
        if key == "theta":
            spec.theta = ExtrinsicParams(*_floats(raw))
        elif key in ("ground_height", "ground_albedo", "ground_reflectivity", "sky_albedo"):
            setattr(spec, key, float(raw))
        elif key == "seed":
            spec.seed = int(raw)
        elif key == "name":
            spec.name = raw
        else:
            raise ValueError(f"{where}: unknown scene key {key!r}")

    lid_fields = {f.name: f for f in fields(LidarModel)}
    lid_kw = {}
    for k, raw in lidar.items():
        if k not in lid_fields:
            raise ValueError(f"{where}: unknown lidar key {k!r}")
        lid_kw[k] = int(raw) if k == "n_rings" else float(raw)
    spec.lidar = LidarModel(**lid_kw)

    if cam:
        try:
            fx, fy, cx, cy = (float(cam[k]) for k in ("fx", "fy", "cx", "cy"))
            spec.camera = CameraIntrinsics.from_pinhole(fx, fy, cx, cy, int(cam["width"]), int(cam["height"]))
        except KeyError as exc:
            raise ValueError(f"{where}: camera section missing {exc.args[0]!r}") from None

    for kind, items in objs.items():
        out = []
        for idx in sorted(items):
            kw = {}
            for k, raw in items[idx].items():
                vals = _floats(raw)
                kw[k] = vals[0] if len(vals) == 1 and k not in ("center", "size", "base", "x_range", "y_range") else vals
            out.append(_OBJ_TYPES[kind](**kw))
        setattr(spec, _OBJ_LISTS[kind], out)
    spec.validate()
    return spec


def format_scene(spec: SceneSpec) -> str:
    def f(v):
        return " ".join(repr(float(x)) for x in np.atleast_1d(v))

    lines = [
        f"name = {spec.name}",
        f"seed = {spec.seed}",
        f"theta = {f(spec.theta.as_array())}",
        f"ground_height = {spec.ground_height!r}",
        f"ground_albedo = {spec.ground_albedo!r}",
        f"ground_reflectivity = {spec.ground_reflectivity!r}",
        f"sky_albedo = {spec.sky_albedo!r}",
    ]
    for fl in fields(LidarModel):
        lines.append(f"lidar.{fl.name} = {getattr(spec.lidar, fl.name)!r}")
    k = spec.camera
    lines += [
        f"camera.fx = {k.fx!r}",
        f"camera.fy = {k.fy!r}",
        f"camera.cx = {k.cx!r}",
        f"camera.cy = {k.cy!r}",
        f"camera.width = {k.width}",
        f"camera.height = {k.height}",
    ]
    for kind, attr in _OBJ_LISTS.items():
        for i, obj in enumerate(getattr(spec, attr)):
            for fl in fields(obj):
                lines.append(f"{kind}.{i}.{fl.name} = {f(getattr(obj, fl.name))}")
    return "\n".join(lines) + "\n"


def load_scene(path) -> SceneSpec:
    return parse_scene(Path(path).read_text(), str(path))


def write_scene(spec: SceneSpec, path) -> None:
    Path(path).write_text(format_scene(spec))


PRESETS = ("urban", "cluttered", "shadow")


def load_preset(name: str) -> SceneSpec:
    """Bundled scene presets: ``urban``, ``cluttered`` (near field) and ``shadow``."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("edgecal.presets").joinpath(f"{name}.scene").read_text()
    return parse_scene(text, f"preset:{name}")


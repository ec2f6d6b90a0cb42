"""Command-line interface: ``edgecal <subcommand> ...``.

Exit codes
  0  calibration converged (or the subcommand finished)
  1  bad input: unreadable file, malformed record, invalid configuration
  2  command-line usage error
  3  no ground plane found
  4  no LiDAR edge points in the camera view
  5  optimizer stopped without converging (result file is still written)
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io, synth
from .config import PipelineConfig
from .evaluation import MultiFrameReport, SweepSpec, format_sweep, sweep
from .geometry import PARAM_NAMES, ExtrinsicParams
from .objective import NoEdgesError, make_cost
from .pipeline import calibrate_features, extract_features
from .segmentation import NoPlaneError

log = logging.getLogger("edgecal")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_PLANE = 3
EXIT_NO_EDGES = 4
EXIT_NOT_CONVERGED = 5


class CliError(Exception):
    def __init__(self, msg, code=EXIT_INPUT):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- shared helpers


def _config(args) -> PipelineConfig:
    cfg = io.load_config(args.config) if args.config else PipelineConfig()
    changes = {}
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        changes[key.strip()] = raw.strip()
    if changes:
        cfg = io.parse_config_lines([f"{k} = {v}" for k, v in changes.items()], "--set", base=cfg)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _load_frame(cloud, image, calib, frame_id=""):
    k, truth = io.load_calib(calib)
    return io.FramePair(io.load_velodyne_bin(cloud), io.load_gray_image(image), k, frame_id, truth)


def _initial_theta(args, frame: io.FramePair, cfg: PipelineConfig, offset: int = 0) -> ExtrinsicParams:
    if args.init is not None:
        theta = ExtrinsicParams.from_array(args.init)
    elif args.init_from is not None:
        theta = io.result_theta(io.read_result(args.init_from))
    elif frame.truth is not None:
        theta = frame.truth
    else:
        raise CliError("no initial extrinsics: pass --init, --init-from, or a calib file with R/T")
    if args.perturb is not None:
        rot, trans = args.perturb
        theta = synth.perturb(theta, [rot] * 3 + [trans] * 3, seed=cfg.seed + offset)
    return theta


def _add_frame_args(p, required=True):
    p.add_argument("--cloud", required=required, help="KITTI velodyne .bin point cloud")
    p.add_argument("--image", required=required, help="grayscale PGM (P5) or color PPM (P6) image")
    p.add_argument("--calib", required=required, help="calibration text file (P_rect_02, S_rect_02, optional R/T)")


def _add_init_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--init", type=float, nargs=6, metavar=tuple(PARAM_NAMES), help="initial extrinsics")
    g.add_argument("--init-from", metavar="RESULT", help="take the initial extrinsics from a result file")
    p.add_argument(
        "--perturb",
        type=float,
        nargs=2,
        metavar=("ROT", "TRANS"),
        help="add seeded uniform noise of at most ROT rad / TRANS m to the initial extrinsics",
    )


# ---------------------------------------------------------------- subcommands


def _calibrate_frame(frame: io.FramePair, theta0, cfg: PipelineConfig):
    feats = extract_features(frame.cloud, frame.image, frame.intrinsics, theta0, cfg)
    return calibrate_features(feats, frame.intrinsics, theta0, cfg)


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    frame = _load_frame(args.cloud, args.image, args.calib)
    theta0 = _initial_theta(args, frame, cfg)
    result = _calibrate_frame(frame, theta0, cfg)
    io.write_result(result, args.out)
    log.info("wrote %s (%s after %d iterations)", args.out, result.termination, result.iterations)
    return EXIT_OK if result.termination == "converged" else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cfg = _config(args)
    frame = _load_frame(args.cloud, args.image, args.calib)
    center = _initial_theta(args, frame, cfg)
    # the slices use the finest edge map only
    feats = extract_features(frame.cloud, frame.image, frame.intrinsics, center, cfg.replace(edge_coarse_levels=0))
    if feats.edges.n_edge == 0:
        raise NoEdgesError("no LiDAR edge points fall inside the camera view")
    cost = make_cost(feats.edges, feats.e_c, frame.intrinsics, cfg.match_threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.param or PARAM_NAMES:
        spec = SweepSpec(
            name,
            cfg.sweep_range if args.range is None else args.range,
            cfg.sweep_samples if args.samples is None else args.samples,
            cfg.sweep_normalize or args.normalize,
        )
        offsets, values = sweep(cost, center, spec)
        path = out / f"sweep_{spec.name}.tsv"
        path.write_text(format_sweep(spec, offsets, values))
        log.info("%s: argmax offset %+.3f", spec.name, offsets[int(np.argmax(values))])
    return EXIT_OK


def _read_frame_list(path):
    base = Path(path).parent
    frames = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise CliError(f"{path}:{lineno}: expected 'id cloud image calib'")
        fid, *files = parts
        frames.append((fid, *[str(base / f) for f in files]))
    if not frames:
        raise CliError(f"{path}: no frames listed")
    return frames


def _eval_one(job):
    fid, cloud, image, calib, theta0, cfg = job
    frame = _load_frame(cloud, image, calib, fid)
    try:
        result = _calibrate_frame(frame, theta0, cfg)
    except (NoPlaneError, NoEdgesError) as exc:
        return fid, None, type(exc).__name__
    return fid, result.theta.as_array(), result.termination


def cmd_eval_multiframe(args) -> int:
    cfg = _config(args)
    listed = _read_frame_list(args.frames)
    truth = None
    work = []
    for i, (fid, cloud, image, calib) in enumerate(listed):
        k, t = io.load_calib(calib)
        if t is None:
            raise CliError(f"{calib}: multi-frame evaluation needs ground-truth R/T in every calib file")
        if truth is None:
            truth = t
        elif not np.allclose(t.as_array(), truth.as_array(), atol=1e-9):
            raise CliError(f"{calib}: ground truth differs from the first frame's")
        frame_stub = io.FramePair(np.zeros((1, 4)), np.zeros((k.height, k.width)), k, fid, t)
        work.append((fid, cloud, image, calib, _initial_theta(args, frame_stub, cfg, offset=i), cfg))
    workers = cfg.jobs if args.jobs is None else args.jobs
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_eval_one, work))
    else:
        outcomes = [_eval_one(j) for j in work]
    # map() keeps submission order; sort by id as the stable report order
    outcomes.sort(key=lambda o: o[0])
    failed = [fid for fid, est, _ in outcomes if est is None]
    done = [o for o in outcomes if o[1] is not None]
    if not done:
        raise CliError("every frame failed", EXIT_NO_EDGES)
    report = MultiFrameReport([o[0] for o in done], np.array([o[1] for o in done]), truth.as_array(), [o[2] for o in done])
    text = report.format()
    if failed:
        text += "[failed]\n" + "\n".join(f"{fid}\t{term}" for fid, term in ((o[0], o[2]) for o in outcomes if o[1] is None)) + "\n"
    Path(args.out).write_text(text)
    log.info("MAE %s", " ".join(f"{n}={v:.4f}" for n, v in zip(PARAM_NAMES, report.mae)))
    return EXIT_OK


DUMP_STAGES = ("camera", "labels", "sparse", "dense", "canny", "mixed")


def cmd_dump(args) -> int:
    cfg = _config(args)
    frame = _load_frame(args.cloud, args.image, args.calib)
    theta0 = _initial_theta(args, frame, cfg)
    feats = extract_features(frame.cloud, frame.image, frame.intrinsics, theta0, cfg, keep_intermediates=True)
    ex = feats.extras
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stages = DUMP_STAGES if "all" in args.stage else args.stage
    written = []

    def put(name, arr):
        io.write_panorama(arr, out / name)
        written.append(name)

    if "camera" in stages:
        for s, e_c in zip(cfg.sigma_schedule, feats.e_c_levels):
            put(f"camera_edges_sigma{s:g}.pgm", e_c)
    if "labels" in stages:
        geom = feats.geom
        flags = np.zeros(geom.shape)
        lab = ex["labeled"]
        v = lab.valid
        flags[lab.row[v], lab.col[v]] = lab.flags[v]
        put("flags.pgm", flags)
    for name in ("depth", "reflectivity", "object"):
        if "sparse" in stages:
            put(f"sparse_{name}.pgm", ex["sparse"][name].values)
        if "dense" in stages:
            put(f"dense_{name}.pgm", ex["dense"][name].values)
        if "canny" in stages:
            put(f"canny_{name}.pgm", ex["edge_maps"][name])
    if "mixed" in stages:
        put("mixed.pgm", feats.mixed)
    log.info("wrote %d files to %s", len(written), out)
    return EXIT_OK


def _write_frame(scene, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    io.write_velodyne_bin(out / "cloud.bin", synth.render_lidar(scene))
    io.write_pgm(out / "image.pgm", synth.render_camera(scene))
    io.write_calib(out / "calib.txt", scene.camera, scene.theta)
    synth.write_scene(scene, out / "scene.txt")
    io.write_config(synth.config_for_scene(scene), out / "config.txt")


def cmd_synth(args) -> int:
    out = Path(args.out)
    seed = args.seed or 0
    if args.frames:
        lines = []
        for i in range(args.frames):
            fid = f"{i:04d}"
            _write_frame(synth.random_urban_scene(seed + i), out / fid)
            lines.append(f"{fid} {fid}/cloud.bin {fid}/image.pgm {fid}/calib.txt")
        (out / "frames.txt").write_text("\n".join(lines) + "\n")
        log.info("wrote %d frames to %s", args.frames, out)
        return EXIT_OK
    if args.scene:
        scene = synth.load_scene(args.scene)
    elif args.preset == "random":
        scene = synth.random_urban_scene(seed)
    else:
        scene = synth.load_preset(args.preset)
    _write_frame(scene, out)
    log.info("wrote %s to %s", scene.name, out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="edgecal",
        description="Targetless LiDAR-camera extrinsic calibration by edge alignment.",
        epilog=__doc__.split("\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline config file (key = value lines)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")
        sp.add_argument("--seed", type=int, help="random seed (overrides the config's seed)")

    c = sub.add_parser("calibrate", help="estimate extrinsics for one frame")
    common(c)
    _add_frame_args(c)
    _add_init_args(c)
    c.add_argument("--out", required=True, help="result file")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("sweep", help="1-D objective slices around a center")
    common(s)
    _add_frame_args(s)
    _add_init_args(s)
    s.add_argument("--param", action="append", choices=PARAM_NAMES, help="parameter to sweep (repeatable; default all)")
    s.add_argument("--range", type=float, help="half width of each slice in rad or m (default 0.3)")
    s.add_argument("--samples", type=int, help="samples per slice (default 61)")
    s.add_argument("--normalize", action="store_true", help="rescale every slice to [0, 1]")
    s.add_argument("--out", required=True, help="output directory for sweep_<param>.tsv")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval-multiframe", help="calibrate many frames and report errors")
    common(e)
    e.add_argument("--frames", required=True, help="list file: one 'id cloud image calib' line per frame")
    _add_init_args(e)
    e.add_argument("--jobs", type=int, help="worker processes (default 1)")
    e.add_argument("--out", required=True, help="report file")
    e.set_defaults(func=cmd_eval_multiframe)

    d = sub.add_parser("dump", help="write intermediate maps as 16-bit PGM")
    common(d)
    _add_frame_args(d)
    _add_init_args(d)
    d.add_argument("--stage", action="append", choices=DUMP_STAGES + ("all",), default=None, help="stage to dump")
    d.add_argument("--out", required=True, help="output directory")
    d.set_defaults(func=cmd_dump)

    y = sub.add_parser("synth", help="render a synthetic frame with ground truth")
    y.add_argument("--preset", choices=synth.PRESETS + ("random",), default="urban")
    y.add_argument("--scene", help="scene file (overrides --preset)")
    y.add_argument("--frames", type=int, help="render this many random layouts plus a frames.txt list")
    y.add_argument("--seed", type=int, help="layout seed for random scenes")
    y.add_argument("--out", required=True, help="output directory")
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "stage", "x") is None:
        args.stage = ["all"]
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        build_parser().error("--jobs must be >= 1")
    if getattr(args, "samples", None) is not None and args.samples < 3:
        build_parser().error("--samples must be >= 3")
    if getattr(args, "range", None) is not None and not args.range > 0:
        build_parser().error("--range must be positive")
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NoPlaneError as exc:
        log.error("no ground plane: %s", exc)
        return EXIT_NO_PLANE
    except NoEdgesError as exc:
        log.error("no edges: %s", exc)
        return EXIT_NO_EDGES
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (io.ParseError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

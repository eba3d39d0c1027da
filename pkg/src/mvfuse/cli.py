"""Command-line interface: ``mvfuse <subcommand> [options]``.

Exit status is 0 on success, 1 when any frame failed (details in the
output's ``errors.log``) and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import formats, pipeline
from .config import RunConfig
from .errors import ConfigError, MvfuseError
from .evaluation import compare_methods, evaluate
from .fusion import SamplingGrid
from .geometry import PLANES, compute_obb, depth_to_pointcloud, project_to_planes
from .prior import fit_pose_prior
from .synth import NoiseSpec, default_generator, make_scene

log = logging.getLogger("mvfuse")

# flag dest -> RunConfig field
_OVERRIDES = {
    "fx": "fx", "fy": "fy", "cx": "cx", "cy": "cy",
    "image_width": "image_width", "image_height": "image_height",
    "resolution": "projection_resolution", "heatmap_size": "heatmap_size",
    "sigma": "heatmap_sigma", "grid_n": "grid_n", "components": "components",
    "prior": "prior_path", "prior_frame": "prior_frame", "noise_sigma": "noise_sigma",
    "spurious_probability": "spurious_probability", "spurious_amplitude": "spurious_amplitude",
    "density": "cloud_density", "radius": "capsule_radius", "seed": "seed",
    "out": "output", "adapter": "adapter",
}


def _add_common(p):
    p.add_argument("--config", help="key = value config file; flags override its values")
    p.add_argument("--out", help="output directory (or file for fit-prior)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_camera(p):
    g = p.add_argument_group("camera intrinsics")
    g.add_argument("--fx", type=float, help="focal length x (pixels)")
    g.add_argument("--fy", type=float, help="focal length y (pixels)")
    g.add_argument("--cx", type=float, help="principal point x (pixels)")
    g.add_argument("--cy", type=float, help="principal point y (pixels)")
    g.add_argument("--image-width", type=int, help="depth image width (pixels)")
    g.add_argument("--image-height", type=int, help="depth image height (pixels)")
    g.add_argument("--adapter", choices=["canonical", "msra_like"],
                   help="depth file reader; msra_like is experimental")


def _add_inputs(p, prior=True):
    src = p.add_argument_group("inputs")
    src.add_argument("--scene", help="scene directory written by 'synth'")
    src.add_argument("--depth", help="directory of <frame_id>.mvdf depth files")
    src.add_argument("--heatmaps", help="directory of <frame_id>_<plane>.mvhm files (with --depth)")
    src.add_argument("--clean", action="store_true", help="use the clean heat-maps of a scene")
    src.add_argument("--resolution", type=int, help="projected image size in pixels (default 96)")
    if prior:
        src.add_argument("--prior", help="MVPP prior file")
        src.add_argument("--prior-frame", choices=["camera", "obb"], help="coordinate frame of the prior")
        src.add_argument("--components", type=int, help="use only the leading M prior components")
        src.add_argument("--grid-n", type=int, help="fusion samples per axis (default 32)")
    _add_camera(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="mvfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="depth frames -> three normalized orthographic views")
    _add_common(p)
    p.add_argument("--depth", required=True, help="a .mvdf file or a directory of them")
    p.add_argument("--resolution", type=int, help="projected image size in pixels (default 96)")
    p.add_argument("--no-cleanup", action="store_true", help="skip median filter and opening")
    _add_camera(p)

    p = sub.add_parser("synth", help="generate labelled synthetic scenes")
    _add_common(p)
    p.add_argument("--frames", type=int, default=10, help="number of frames")
    p.add_argument("--seed", type=int, help="base seed; frame i uses seed + i")
    p.add_argument("--noise-sigma", type=float, help="Gaussian heat-map noise std")
    p.add_argument("--spurious-probability", type=float, help="chance of a decoy fingertip blob per frame")
    p.add_argument("--spurious-amplitude", type=float, help="decoy blob peak value")
    p.add_argument("--resolution", type=int, help="projected image size in pixels")
    p.add_argument("--heatmap-size", type=int, help="heat-map size in pixels")
    p.add_argument("--sigma", type=float, help="heat-map blob std in heat-map pixels")
    p.add_argument("--density", type=float, help="cloud points per mm of bone")
    p.add_argument("--radius", type=float, help="capsule radius in mm")

    p = sub.add_parser("fit-prior", help="PCA pose prior from a joints file")
    _add_common(p)
    p.add_argument("--joints", required=True, help="training joints text file")
    p.add_argument("--components", type=int, help="number of components (default 35)")
    p.add_argument("--prior-frame", choices=["camera", "obb"], help="coordinate frame of the joints")

    p = sub.add_parser("fuse", help="multi-view fine fusion")
    _add_common(p)
    _add_inputs(p)

    p = sub.add_parser("baseline", help="single-view or coarse-fusion baseline")
    p.add_argument("method", choices=["single", "coarse"])
    _add_common(p)
    _add_inputs(p, prior=False)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--pred", required=True, help="predicted joints file")
    p.add_argument("--gt", required=True, help="ground-truth joints file")
    p.add_argument("--method", default="", help="method name recorded in the report")
    _add_tolerances(p)

    p = sub.add_parser("report", help="compare methods; writes CSV, JSON and figures")
    _add_common(p)
    p.add_argument("--gt", help="ground-truth joints (default: the scene's gt_joints.txt)")
    p.add_argument("--pred", action="append", default=[], metavar="NAME=PATH",
                   help="a method's predictions; repeatable")
    p.add_argument("--scene", help="scene directory; runs fine, coarse and single on it")
    p.add_argument("--prior", help="MVPP prior for fine fusion (default: the scene's generator)")
    p.add_argument("--prior-frame", choices=["camera", "obb"], help="coordinate frame of the prior")
    p.add_argument("--components", type=int, help="prior components for fine fusion")
    p.add_argument("--grid-n", type=int, help="fusion samples per axis")
    p.add_argument("--clean", action="store_true", help="use the clean heat-maps of the scene")
    p.add_argument("--sweep", help="comma-separated component counts for a prior sweep, e.g. 5,10,15")
    p.add_argument("--train-joints", help="training joints for the sweep priors")
    _add_tolerances(p)
    return parser


def _add_tolerances(p):
    p.add_argument("--tolerance-max", type=float, default=80.0, help="largest tolerance in mm")
    p.add_argument("--tolerance-step", type=float, default=2.0, help="tolerance grid step in mm")


def _tolerances(args):
    return np.arange(0.0, args.tolerance_max + 1e-9, args.tolerance_step)


def _config(args):
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {field: getattr(args, dest, None) for dest, field in _OVERRIDES.items()}
    return cfg.updated(**overrides)


def _prior(cfg, required=True):
    if not cfg.prior_path:
        if required:
            raise ConfigError("a prior is required (--prior or prior_path)")
        return None
    try:
        prior = formats.read_prior(cfg.prior_path, cfg.prior_frame)
    except (OSError, MvfuseError) as exc:
        raise ConfigError(f"cannot load prior {cfg.prior_path}: {exc}") from None
    return prior.truncate(min(cfg.components, prior.m))


def _frame_sources(args, cfg):
    """List of (frame_id, loader) pairs, sorted by frame id."""
    if bool(args.scene) == bool(args.depth):
        raise ConfigError("give exactly one of --scene or --depth")
    if args.scene:
        root = Path(args.scene)
        if not root.is_dir():
            raise ConfigError(f"scene directory {root} not found")
        return [(fid, lambda fid=fid: pipeline.read_scene_frame(root, fid, args.clean))
                for fid in pipeline.scene_frame_ids(root)]
    if not args.heatmaps:
        raise ConfigError("--depth needs --heatmaps")
    files = sorted(Path(args.depth).glob("*.mvdf"))
    return [(f.stem, lambda f=f: pipeline.read_depth_frame_input(f, args.heatmaps, cfg)) for f in files]


def _run_frames(sources, method, prior, cfg, out):
    grid = SamplingGrid(cfg.grid_n)

    def work(item):
        fid, load = item
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                pose, diag = pipeline.estimate(load(), method, prior, grid)
            diag["warnings"] = [str(w.message) for w in caught]
            return fid, pose, diag, None
        except (MvfuseError, OSError, ValueError) as exc:
            return fid, None, None, f"{type(exc).__name__}: {exc}"

    results = pipeline.parallel_map(work, sources)
    out = Path(out)
    ok = [(fid, pose) for fid, pose, _, err in results if err is None]
    errors = [(fid, err) for fid, _, _, err in results if err is not None]
    for fid, _, diag, err in results:
        if err is None:
            diag.update(frame_id=fid, method=method, config_hash=cfg.config_hash())
            formats.atomic_write(out / "diagnostics" / f"{fid}.json", formats.dump_json(diag))
    formats.write_joints_file(out / "pred_joints.txt", [p for _, p in ok])
    summary = {
        "method": method,
        "config_hash": cfg.config_hash(),
        "frame_ids": [fid for fid, _ in ok],
        "failed": [fid for fid, _ in errors],
    }
    formats.atomic_write(out / "summary.json", formats.dump_json(summary))
    if errors:
        formats.atomic_write(out / "errors.log", "".join(f"{fid}: {err}\n" for fid, err in errors))
        for fid, err in errors:
            log.error("%s: %s", fid, err)
    return 1 if errors else 0


def cmd_project(args, cfg):
    src = Path(args.depth)
    files = sorted(src.glob("*.mvdf")) if src.is_dir() else [src]
    if not files:
        raise ConfigError(f"no depth files under {src}")
    out = Path(cfg.output or ".")
    failed = 0
    for f in files:
        try:
            frame = formats.load_depth_frame(f, cfg.adapter)
            cloud = depth_to_pointcloud(frame, cfg.intrinsics)
            obb = compute_obb(cloud)
            views = project_to_planes(cloud, obb, cfg.projection_resolution, cleanup=not args.no_cleanup)
            for plane, view in zip(PLANES, views):
                formats.write_view(out / f.stem / plane.name.lower(), view, obb)
        except (MvfuseError, OSError, ValueError) as exc:
            failed += 1
            log.error("%s: %s", f, exc)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "errors.log", "a") as fh:
                fh.write(f"{f.stem}: {type(exc).__name__}: {exc}\n")
    return 1 if failed else 0


def cmd_synth(args, cfg):
    if not cfg.output:
        raise ConfigError("synth needs --out")
    if args.frames < 1:
        raise ConfigError("--frames must be positive")
    out = Path(cfg.output)
    generator = default_generator()
    noise = NoiseSpec(cfg.noise_sigma, cfg.spurious_probability, cfg.spurious_amplitude)

    def one(i):
        scene = make_scene(generator, cfg.seed + i, noise, cfg.projection_resolution, cfg.heatmap_size,
                           cfg.heatmap_sigma, cfg.cloud_density, cfg.capsule_radius)
        pipeline.write_scene(out, pipeline.frame_id(i), scene)
        return scene

    scenes = pipeline.parallel_map(one, range(args.frames))
    formats.write_prior(out / "generator.mvpp", generator)
    formats.write_joints_file(out / "gt_joints.txt", [s.pose for s in scenes])
    formats.atomic_write(out / "config.txt", cfg.provenance().to_text())
    summary = {
        "config_hash": cfg.config_hash(),
        "frames": args.frames,
        "frame_ids": [pipeline.frame_id(i) for i in range(args.frames)],
        "ambiguous_frames": [pipeline.frame_id(i) for i, s in enumerate(scenes) if s.ambiguous],
    }
    formats.atomic_write(out / "summary.json", formats.dump_json(summary))
    return 0


def cmd_fit_prior(args, cfg):
    if not cfg.output:
        raise ConfigError("fit-prior needs --out")
    poses = formats.load_joints_file(args.joints, cfg.prior_frame)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        prior = fit_pose_prior(poses, cfg.components)
    for w in caught:
        log.warning("%s", w.message)
    formats.write_prior(cfg.output, prior)
    return 0


def cmd_fuse(args, cfg):
    if not cfg.output:
        raise ConfigError("fuse needs --out")
    return _run_frames(_frame_sources(args, cfg), "fine", _prior(cfg), cfg, cfg.output)


def cmd_baseline(args, cfg):
    if not cfg.output:
        raise ConfigError("baseline needs --out")
    return _run_frames(_frame_sources(args, cfg), args.method, None, cfg, cfg.output)


def _write_report(report, out):
    out = Path(out)
    formats.atomic_write(out / "per_joint.csv", formats.per_joint_csv(report))
    formats.atomic_write(out / "curve.csv", formats.curve_csv(report))


def cmd_eval(args, cfg):
    preds = formats.load_joints_file(args.pred)
    gts = formats.load_joints_file(args.gt)
    report = evaluate(preds, gts, _tolerances(args), method=args.method)
    out = Path(cfg.output or ".")
    _write_report(report, out)
    payload = report.to_dict()
    payload["config_hash"] = cfg.config_hash()
    formats.atomic_write(out / "report.json", formats.dump_json(payload))
    print(f"frames={report.frame_count} overall_mean_mm={report.overall_mean:.4f}")
    return 0


def cmd_report(args, cfg):
    from . import plotting

    out = Path(cfg.output or ".")
    tol = _tolerances(args)
    gt_path = args.gt or (Path(args.scene) / "gt_joints.txt" if args.scene else None)
    if gt_path is None:
        raise ConfigError("report needs --gt or --scene")
    gts = formats.load_joints_file(gt_path)

    reports = []
    status = 0
    if args.scene:
        if not cfg.prior_path:
            cfg = cfg.updated(prior_path=str(Path(args.scene) / "generator.mvpp"))
        prior = _prior(cfg)
        sources = [(fid, lambda fid=fid: pipeline.read_scene_frame(args.scene, fid, args.clean))
                   for fid in pipeline.scene_frame_ids(args.scene)]
        for method in pipeline.METHODS:
            status |= _run_frames(sources, method, prior if method == "fine" else None, cfg, out / method)
            preds = formats.load_joints_file(out / method / "pred_joints.txt")
            reports.append(evaluate(preds, gts, tol, method=method))
    for spec in args.pred:
        name, _, path = spec.partition("=")
        if not path:
            raise ConfigError(f"--pred expects NAME=PATH, got {spec!r}")
        reports.append(evaluate(formats.load_joints_file(path), gts, tol, method=name))

    if reports:
        table = compare_methods(reports)
        table["config_hash"] = cfg.config_hash()
        formats.atomic_write(out / "comparison.json", formats.dump_json(table))
        formats.atomic_write(out / "per_joint.csv", formats.rows_csv(table["per_joint"]))
        formats.atomic_write(out / "curve.csv", formats.rows_csv(table["curve"]))
        plotting.plot_per_joint(table, out / "per_joint.png")
        plotting.plot_worst_case(table, out / "worst_case.png")
        for name in table["ranking"]:
            print(f"{name}: overall_mean_mm={table['overall_mean_mm'][name]:.4f}")

    if args.sweep:
        if not (args.scene and args.train_joints):
            raise ConfigError("--sweep needs --scene and --train-joints")
        ms = [int(m) for m in args.sweep.split(",")]
        train = formats.load_joints_file(args.train_joints, cfg.prior_frame)
        rows = _sweep_scene(args.scene, train, ms, cfg, tol, args.clean)
        formats.atomic_write(out / "sweep.json", formats.dump_json(rows))
        flat = [{"components": r["components"], "overall_mean_mm": r["overall_mean_mm"]} for r in rows]
        formats.atomic_write(out / "sweep.csv", formats.rows_csv(flat))
        plotting.plot_sweep(rows, out / "sweep.png")
    return status


def _sweep_scene(root, train, ms, cfg, tol, clean):
    fids = pipeline.scene_frame_ids(root)
    frames = [pipeline.read_scene_frame(root, fid, clean) for fid in fids]
    gts = [pipeline.read_scene_truth(root, fid) for fid in fids]
    grid = SamplingGrid(cfg.grid_n)
    rows = []
    for m in ms:
        prior = fit_pose_prior(train, m)
        preds = pipeline.parallel_map(lambda f: pipeline.estimate(f, "fine", prior, grid)[0], frames)
        report = evaluate(preds, gts, tol, method=f"m={m}")
        rows.append({"components": m, "overall_mean_mm": report.overall_mean,
                     "tolerances_mm": report.tolerances.tolist(), "fractions": report.fractions.tolist()})
    return rows


COMMANDS = {
    "project": cmd_project,
    "synth": cmd_synth,
    "fit-prior": cmd_fit_prior,
    "fuse": cmd_fuse,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"mvfuse: config error: {exc}", file=sys.stderr)
        return 2
    except (MvfuseError, OSError) as exc:
        print(f"mvfuse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

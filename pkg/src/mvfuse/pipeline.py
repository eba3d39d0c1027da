"""Frame-set level composition: scene dumps, per-frame estimation, the prior-component sweep."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .evaluation import DEFAULT_TOLERANCES, evaluate
from .fusion import (
    SamplingGrid,
    coarse_fusion_estimate,
    fine_fusion_estimate,
    single_view_estimate,
    to_camera,
)
from .geometry import PLANES, ObbFrame, compute_obb, depth_to_pointcloud, project_to_planes
from .prior import JointSet, fit_pose_prior
from .synth import NoiseSpec, SyntheticScene, make_scene

log = logging.getLogger(__name__)

METHODS = ("fine", "coarse", "single")


@dataclass(frozen=True)
class FrameInput:
    frame_id: str
    obb: ObbFrame
    views: tuple
    stacks: tuple


def max_workers():
    cap = os.environ.get("MVFUSE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer MVFUSE_THREADS=%r", cap)
    return n


def parallel_map(fn, items):
    items = list(items)
    workers = min(max_workers(), max(len(items), 1))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def frame_id(index):
    return f"frame_{index:05d}"


def scene_input(scene: SyntheticScene, noisy=True, fid="") -> FrameInput:
    stacks = scene.noisy_stacks if noisy else scene.clean_stacks
    return FrameInput(fid, scene.obb, scene.views, stacks)


def estimate(frame: FrameInput, method, prior=None, grid=SamplingGrid()):
    """Run one estimator on a frame. Returns ``(camera-space JointSet, diagnostics dict)``."""
    if method == "fine":
        pose, problem = fine_fusion_estimate(frame.stacks, frame.obb, prior, grid)
        diag = {
            "masses": [g.mass for g in problem.gaussians],
            "flagged_joints": list(problem.flagged_joints),
            "condition": problem.condition,
            "regularized": problem.regularized,
            "alpha": problem.alpha.tolist(),
        }
        return to_camera(pose, frame.obb), diag
    if method == "coarse":
        return to_camera(coarse_fusion_estimate(frame.stacks, frame.obb), frame.obb), {}
    if method == "single":
        return to_camera(single_view_estimate(frame.stacks[0], frame.views[0], frame.obb), frame.obb), {}
    raise ValueError(f"unknown method {method!r}")


# -- scene directories ---------------------------------------------------------

def write_scene(root, fid, scene: SyntheticScene):
    """Dump one synthetic frame into ``root/fid``."""
    d = Path(root) / fid
    for plane, view in zip(PLANES, scene.views):
        formats.write_view(d / plane.name.lower(), view, scene.obb)
    for plane, clean, noisy in zip(PLANES, scene.clean_stacks, scene.noisy_stacks):
        formats.write_heatmap(d / formats.heatmap_filename(fid, plane), noisy)
        formats.write_heatmap(d / "clean" / formats.heatmap_filename(fid, plane), clean)
    formats.write_joints_file(d / "joints.txt", [scene.pose])
    info = {"seed": scene.seed, "hotspot": scene.hotspot, "points": int(len(scene.cloud))}
    formats.atomic_write(d / "scene.json", formats.dump_json(info))


def scene_frame_ids(root):
    return sorted(p.name for p in Path(root).iterdir() if p.is_dir() and (p / "joints.txt").exists())


def read_scene_frame(root, fid, clean=False) -> FrameInput:
    d = Path(root) / fid
    views, obb = [], None
    for plane in PLANES:
        view, view_obb = formats.read_view(d / plane.name.lower())
        views.append(view)
        obb = obb or view_obb
    if obb is None:
        raise formats.ParseError(f"{d}: view metadata lacks the OBB record")
    hm_dir = d / "clean" if clean else d
    stacks = tuple(formats.read_heatmap(hm_dir / formats.heatmap_filename(fid, p)) for p in PLANES)
    return FrameInput(fid, obb, tuple(views), stacks)


def read_scene_truth(root, fid) -> JointSet:
    return formats.load_joints_file(Path(root) / fid / "joints.txt")[0]


def read_depth_frame_input(depth_path, heatmap_dir, cfg) -> FrameInput:
    """Frame from a depth file plus separately supplied heat-maps."""
    depth_path = Path(depth_path)
    fid = depth_path.stem
    frame = formats.load_depth_frame(depth_path, cfg.adapter)
    cloud = depth_to_pointcloud(frame, cfg.intrinsics)
    obb = compute_obb(cloud)
    views = project_to_planes(cloud, obb, cfg.projection_resolution)
    stacks = tuple(formats.read_heatmap(Path(heatmap_dir) / formats.heatmap_filename(fid, p)) for p in PLANES)
    return FrameInput(fid, obb, views, stacks)


# -- experiments ---------------------------------------------------------------

def synthetic_suite(generator, count, seed=0, noise=NoiseSpec(), **kwargs):
    """Scenes with seeds ``seed, seed+1, ...``, generated in parallel."""
    return parallel_map(lambda s: make_scene(generator, s, noise, **kwargs), range(seed, seed + count))


def run_method(scenes, method, prior=None, grid=SamplingGrid(), noisy=True):
    frames = [scene_input(s, noisy) for s in scenes]
    return [p for p, _ in parallel_map(lambda f: estimate(f, method, prior, grid), frames)]


def prior_sweep(scenes, training_poses, ms, grid=SamplingGrid(), tolerances=DEFAULT_TOLERANCES, noisy=True):
    """Fine-fusion accuracy as a function of the number of prior components.

    A prior is fitted to ``training_poses`` for every ``m`` in ``ms``.
    Returns one row per ``m`` with the overall mean error and the
    worst-case curve.
    """
    gts = [s.pose for s in scenes]
    rows = []
    for m in ms:
        prior = fit_pose_prior(training_poses, m)
        preds = run_method(scenes, "fine", prior, grid, noisy)
        report = evaluate(preds, gts, tolerances, method=f"m={m}")
        rows.append({
            "components": int(m),
            "overall_mean_mm": report.overall_mean,
            "tolerances_mm": report.tolerances.tolist(),
            "fractions": report.fractions.tolist(),
        })
    return rows


def obb_contains_joints(scene: SyntheticScene, inflate=1.1):
    return bool(np.all(scene.obb.contains(scene.pose.joints, inflate)))

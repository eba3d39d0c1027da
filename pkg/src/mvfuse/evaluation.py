"""Joint error metrics and method comparison tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FrameSetMismatch, FrameTagMismatch, LengthMismatch

DEFAULT_TOLERANCES = np.arange(0.0, 80.0 + 1e-9, 2.0)


@dataclass(frozen=True)
class ErrorReport:
    per_joint_mean: np.ndarray
    overall_mean: float
    tolerances: np.ndarray
    fractions: np.ndarray
    frame_count: int
    method: str = ""
    frame_ids: tuple = field(default=())

    @property
    def worst_case_curve(self):
        return list(zip(self.tolerances.tolist(), self.fractions.tolist()))

    def to_dict(self):
        return {
            "method": self.method,
            "frame_count": self.frame_count,
            "overall_mean_mm": self.overall_mean,
            "per_joint_mean_mm": self.per_joint_mean.tolist(),
            "worst_case_curve": [{"tolerance_mm": t, "fraction": f} for t, f in self.worst_case_curve],
        }


def joint_errors(preds, gts) -> np.ndarray:
    """Euclidean error per frame and joint, shape ``(frames, K)``."""
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions for {len(gts)} ground-truth frames")
    for i, (p, g) in enumerate(zip(preds, gts)):
        if p.frame != g.frame:
            raise FrameTagMismatch(f"frame {i}: prediction in {p.frame!r}, ground truth in {g.frame!r}")
        if p.k != g.k:
            raise LengthMismatch(f"frame {i}: {p.k} predicted joints, {g.k} ground-truth joints")
    if not preds:
        return np.zeros((0, 0))
    return np.linalg.norm(np.stack([p.joints for p in preds]) - np.stack([g.joints for g in gts]), axis=2)


def mean_joint_error(preds, gts):
    """Per-joint mean error over frames, and the overall mean, in mm."""
    err = joint_errors(preds, gts)
    return err.mean(axis=0), float(err.mean())


def worst_case_accuracy(preds, gts, tolerances=DEFAULT_TOLERANCES) -> np.ndarray:
    """Fraction of frames whose largest joint error is within each tolerance."""
    tol = np.asarray(tolerances, dtype=np.float64)
    if np.any(np.diff(tol) < 0):
        raise ValueError("tolerances must be sorted ascending")
    worst = joint_errors(preds, gts).max(axis=1)
    return (worst[None, :] <= tol[:, None]).mean(axis=1)


def evaluate(preds, gts, tolerances=DEFAULT_TOLERANCES, method="", frame_ids=()) -> ErrorReport:
    per_joint, overall = mean_joint_error(preds, gts)
    tol = np.asarray(tolerances, dtype=np.float64)
    return ErrorReport(
        per_joint_mean=per_joint,
        overall_mean=overall,
        tolerances=tol,
        fractions=worst_case_accuracy(preds, gts, tol),
        frame_count=len(list(gts)),
        method=method,
        frame_ids=tuple(frame_ids),
    )


def compare_methods(reports):
    """Side-by-side table of several reports over the same frames.

    The first report is the reference for the ``delta`` columns. Returns a
    dict with ``methods``, ``per_joint`` rows, ``curve`` rows and a ranking
    by overall mean error.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to compare")
    ref = reports[0]
    for r in reports[1:]:
        if r.frame_count != ref.frame_count or (r.frame_ids and ref.frame_ids and r.frame_ids != ref.frame_ids):
            raise FrameSetMismatch(f"{r.method!r} was scored on a different frame set than {ref.method!r}")
        if not np.array_equal(r.tolerances, ref.tolerances):
            raise FrameSetMismatch("reports use different tolerance grids")
    names = [r.method or f"method{i}" for i, r in enumerate(reports)]

    per_joint = []
    for k in range(ref.per_joint_mean.size):
        row = {"joint_index": k}
        for name, r in zip(names, reports):
            row[name] = float(r.per_joint_mean[k])
            row[f"{name}_delta"] = float(r.per_joint_mean[k] - ref.per_joint_mean[k])
        per_joint.append(row)
    curve = []
    for i, t in enumerate(ref.tolerances):
        row = {"tolerance_mm": float(t)}
        for name, r in zip(names, reports):
            row[name] = float(r.fractions[i])
        curve.append(row)
    overall = {name: r.overall_mean for name, r in zip(names, reports)}
    return {
        "methods": names,
        "frame_count": ref.frame_count,
        "overall_mean_mm": overall,
        "overall_delta_mm": {n: overall[n] - overall[names[0]] for n in names},
        "ranking": sorted(names, key=lambda n: overall[n]),
        "per_joint": per_joint,
        "curve": curve,
    }

"""Joint sets and the linear PCA pose subspace."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, FrameTagMismatch, InsufficientData, RankDeficient

NUM_JOINTS = 21
DEFAULT_COMPONENTS = 35
FRAMES = ("camera", "obb")

JOINT_NAMES = (
    ["wrist"]
    + [f"{f}_mcp" for f in ("thumb", "index", "middle", "ring", "little")]
    + [f"{f}_pip" for f in ("thumb", "index", "middle", "ring", "little")]
    + [f"{f}_dip" for f in ("thumb", "index", "middle", "ring", "little")]
    + [f"{f}_tip" for f in ("thumb", "index", "middle", "ring", "little")]
)


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class JointSet:
    """K joint positions in millimetres, tagged with their coordinate frame."""

    joints: np.ndarray
    frame: str = "camera"

    def __post_init__(self):
        j = _frozen(self.joints).reshape(-1, 3)
        if not np.all(np.isfinite(j)):
            raise ValueError("joint coordinates must be finite")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame tag {self.frame!r}")
        object.__setattr__(self, "joints", j)

    @property
    def k(self):
        return self.joints.shape[0]

    def vector(self):
        """Joint-major flattening (x1, y1, z1, x2, ...)."""
        return self.joints.reshape(-1)

    @classmethod
    def from_vector(cls, vec, frame="camera"):
        return cls(np.asarray(vec, dtype=np.float64).reshape(-1, 3), frame)


@dataclass(frozen=True)
class PosePrior:
    """Affine pose subspace ``vec(pose) = components @ alpha + mean``."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    frame: str = "camera"

    def __post_init__(self):
        mean = _frozen(self.mean).reshape(-1)
        comps = _frozen(self.components).reshape(mean.size, -1)
        eig = _frozen(self.eigenvalues).reshape(-1)
        if mean.size % 3:
            raise DimensionMismatch("mean length must be a multiple of 3")
        if eig.size != comps.shape[1]:
            raise DimensionMismatch("one eigenvalue per component required")
        if comps.shape[1] > mean.size:
            raise DimensionMismatch("more components than dimensions")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def k(self):
        return self.mean.size // 3

    @property
    def m(self):
        return self.components.shape[1]

    def truncate(self, m):
        if not 1 <= m <= self.m:
            raise DimensionMismatch(f"cannot keep {m} of {self.m} components")
        return PosePrior(self.mean, self.components[:, :m], self.eigenvalues[:m], self.frame)


def _sign_fix(vecs):
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_pose_prior(poses, m=DEFAULT_COMPONENTS) -> PosePrior:
    """PCA of vectorized training poses, keeping the top ``m`` components.

    Each component is flipped so its largest-magnitude entry is positive.
    Emits :class:`RankDeficient` when eigenvalue ``m`` is negligible relative
    to the first.
    """
    poses = list(poses)
    if len(poses) < m + 1:
        raise InsufficientData(f"need at least {m + 1} poses to fit {m} components, got {len(poses)}")
    frames = {p.frame for p in poses}
    if len(frames) != 1:
        raise FrameTagMismatch(f"mixed frame tags in training poses: {sorted(frames)}")
    ks = {p.k for p in poses}
    if len(ks) != 1:
        raise DimensionMismatch(f"inconsistent joint counts: {sorted(ks)}")
    data = np.stack([p.vector() for p in poses])
    if m > data.shape[1]:
        raise DimensionMismatch(f"m={m} exceeds pose dimension {data.shape[1]}")
    # Sorting rows makes the floating-point sums independent of input order.
    data = data[np.lexsort(data.T[::-1])]

    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (len(data) - 1)
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.maximum(vals, 0.0)
    if vals[m - 1] <= 1e-12 * vals[0]:
        warnings.warn(
            f"eigenvalue {m} ({vals[m - 1]:.3g}) is negligible relative to the first ({vals[0]:.3g})",
            RankDeficient,
            stacklevel=2,
        )
    return PosePrior(mean, _sign_fix(vecs[:, :m]), vals[:m], frames.pop())


def project(prior: PosePrior, pose: JointSet) -> np.ndarray:
    if pose.vector().size != prior.mean.size:
        raise DimensionMismatch(f"pose has {pose.k} joints, prior expects {prior.k}")
    return prior.components.T @ (pose.vector() - prior.mean)


def reconstruct(prior: PosePrior, alpha) -> JointSet:
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if alpha.size != prior.m:
        raise DimensionMismatch(f"expected {prior.m} coefficients, got {alpha.size}")
    return JointSet.from_vector(prior.components @ alpha + prior.mean, prior.frame)

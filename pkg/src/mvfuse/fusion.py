"""Multi-view heat-map fusion under a linear pose prior, plus the two baseline estimators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import FrameTagMismatch, DimensionMismatch, SingularSystem, ViewMismatch
from .geometry import PLANES, ObbFrame, Plane, ProjectedView, unproject_view_value, view_link
from .heatmap import HeatMapStack, sample_all
from .prior import JointSet, PosePrior, reconstruct

LOW_MASS = 1e-8


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform cell-centred grid over the OBB inflated by ``inflate``."""

    n: int = 32
    inflate: float = 1.1

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 samples per axis")

    def axes(self, obb: ObbFrame):
        half = obb.extents * self.inflate
        t = (np.arange(self.n) + 0.5) / self.n
        return [-h + 2 * h * t for h in half]

    def spacing(self, obb: ObbFrame):
        return 2 * obb.extents * self.inflate / self.n

    def regularization(self, obb: ObbFrame):
        return max(1.0, (float(self.spacing(obb).max()) / 2) ** 2)


@dataclass(frozen=True)
class JointGaussian:
    mu: np.ndarray
    sigma: np.ndarray
    mass: float
    frame: str = "obb"
    flagged: bool = False

    def transformed(self, obb: ObbFrame):
        """The same Gaussian expressed in camera coordinates."""
        if self.frame != "obb":
            raise FrameTagMismatch("only OBB-frame Gaussians can be moved to camera space")
        r = obb.axes
        return JointGaussian(obb.to_camera(self.mu), r @ self.sigma @ r.T, self.mass, "camera", self.flagged)


@dataclass(frozen=True)
class FusionProblem:
    a_matrix: np.ndarray
    b_vector: np.ndarray
    alpha: np.ndarray
    gaussians: tuple
    condition: float
    regularized: bool = False
    flagged_joints: tuple = field(default=())


def _check_views(stacks, obb: ObbFrame | None):
    stacks = tuple(stacks)
    if len(stacks) != 3 or tuple(s.plane for s in stacks) != PLANES:
        raise ViewMismatch("expected three stacks in XY, YZ, ZX order")
    ks = {s.k for s in stacks}
    if len(ks) != 1:
        raise ViewMismatch(f"stacks disagree on joint count: {sorted(ks)}")
    if obb is not None:
        for s in stacks:
            expected = view_link(obb, s.plane, s.link.size[0])
            if not s.link.isclose(expected):
                raise ViewMismatch(f"{s.plane.name} stack is not registered to this OBB")
    return stacks


def _view_samples(stacks, coords):
    xs, ys, zs = coords
    out = []
    for stack, (a, b) in zip(stacks, ((xs, ys), (ys, zs), (zs, xs))):
        aa, bb = np.meshgrid(a, b, indexing="ij")
        uv = stack.link.plane_to_uv(np.column_stack([aa.ravel(), bb.ravel()]))
        out.append(sample_all(stack, uv).reshape(stack.k, len(a), len(b)))
    return out


def estimate_joint_gaussians(stacks, obb: ObbFrame, grid: SamplingGrid = SamplingGrid()):
    """Fit a 3-D Gaussian to the per-joint product of the three view likelihoods.

    The product ``Q = XY(x, y) * YZ(y, z) * ZX(z, x)`` is evaluated on
    ``grid`` in OBB coordinates; its weighted mean and covariance (plus an
    isotropic floor) give the Gaussian. Joints with negligible total weight
    fall back to a broad Gaussian at the grid point of highest summed
    evidence and are flagged.
    """
    stacks = _check_views(stacks, obb)
    coords = grid.axes(obb)
    xy, yz, zx = _view_samples(stacks, coords)
    eps = grid.regularization(obb)
    xs, ys, zs = coords

    result = []
    for k in range(stacks[0].k):
        q = xy[k][:, :, None] * yz[k][None, :, :] * zx[k].T[:, None, :]
        mass = float(q.sum())
        if not mass >= LOW_MASS:
            score = xy[k][:, :, None] + yz[k][None, :, :] + zx[k].T[:, None, :]
            i, j, l = np.unravel_index(np.argmax(score), score.shape)
            mu = np.array([xs[i], ys[j], zs[l]])
            sigma = np.diag((obb.extents * grid.inflate) ** 2) + eps * np.eye(3)
            result.append(JointGaussian(mu, sigma, mass, "obb", True))
            continue

        qx = q.sum(axis=(1, 2))
        qy = q.sum(axis=(0, 2))
        qz = q.sum(axis=(0, 1))
        mu = np.array([qx @ xs, qy @ ys, qz @ zs]) / mass
        dx, dy, dz = xs - mu[0], ys - mu[1], zs - mu[2]
        qxy = q.sum(axis=2)
        qyz = q.sum(axis=0)
        qxz = q.sum(axis=1)
        cxx = qx @ dx**2
        cyy = qy @ dy**2
        czz = qz @ dz**2
        cxy = dx @ qxy @ dy
        cyz = dy @ qyz @ dz
        cxz = dx @ qxz @ dz
        cov = np.array([[cxx, cxy, cxz], [cxy, cyy, cyz], [cxz, cyz, czz]]) / mass
        result.append(JointGaussian(mu, cov + eps * np.eye(3), mass, "obb", False))
    return tuple(result)


def objective(alpha, gaussians, prior: PosePrior):
    """Sum of per-joint Mahalanobis distances of the reconstructed pose."""
    joints = reconstruct(prior, alpha).joints
    total = 0.0
    for phi, g in zip(joints, gaussians):
        r = phi - g.mu
        total += r @ np.linalg.solve(g.sigma, r)
    return total


def solve_pose(gaussians, prior: PosePrior):
    """Closed-form minimizer of the Gaussian objective over the prior subspace.

    Builds ``A = sum_k E_k^T S_k^-1 E_k`` and ``b = sum_k E_k^T S_k^-1 (mu_k - u_k)``
    and solves ``A alpha = b`` by Cholesky factorization.

    Returns
    -------
    pose : JointSet
        Reconstructed joints in the prior's frame.
    problem : FusionProblem
        The assembled system and its solution.
    """
    gaussians = tuple(gaussians)
    if len(gaussians) != prior.k:
        raise DimensionMismatch(f"{len(gaussians)} Gaussians for a {prior.k}-joint prior")
    if any(g.frame != prior.frame for g in gaussians):
        raise FrameTagMismatch(f"Gaussians and prior must share the {prior.frame!r} frame")
    m = prior.m
    e = prior.components.reshape(prior.k, 3, m)
    mu = np.stack([g.mu for g in gaussians])
    cov = np.stack([g.sigma for g in gaussians])
    resid = mu - prior.mean.reshape(prior.k, 3)

    rhs = np.concatenate([e, resid[:, :, None]], axis=2)
    weighted = np.linalg.solve(cov, rhs)
    a = np.einsum("kdi,kdj->ij", e, weighted[:, :, :m])
    b = np.einsum("kdi,kd->i", e, weighted[:, :, m])
    a = (a + a.T) / 2

    eig = np.linalg.eigvalsh(a)
    condition = float(eig[-1] / eig[0]) if eig[0] > 0 else np.inf
    regularized = False
    if eig[0] <= 1e-12 * eig[-1]:
        warnings.warn(f"fusion system is near-singular (condition {condition:.3g})", SingularSystem,
                      stacklevel=2)
        a = a + 1e-10 * np.trace(a) / m * np.eye(m)
        regularized = True

    alpha = linalg.cho_solve(linalg.cho_factor(a), b)
    problem = FusionProblem(
        a_matrix=a,
        b_vector=b,
        alpha=alpha,
        gaussians=gaussians,
        condition=condition,
        regularized=regularized,
        flagged_joints=tuple(i for i, g in enumerate(gaussians) if g.flagged),
    )
    return reconstruct(prior, alpha), problem


def fine_fusion_estimate(stacks, obb: ObbFrame, prior: PosePrior, grid: SamplingGrid = SamplingGrid()):
    """Heat-map stacks to prior-constrained joints, returned in the prior's frame."""
    gaussians = estimate_joint_gaussians(stacks, obb, grid)
    if prior.frame == "camera":
        gaussians = tuple(g.transformed(obb) for g in gaussians)
    return solve_pose(gaussians, prior)


def centroid_fit(heatmap):
    """Half-max thresholded weighted centroid of a 2-D map, in heat-map pixel coordinates.

    Pixel ``(row, col)`` has its center at ``(col + 0.5, row + 0.5)``.
    """
    hm = np.maximum(np.asarray(heatmap, dtype=np.float64), 0.0)
    peak = hm.max()
    h, w = hm.shape
    if peak <= 0:
        return np.array([w / 2, h / 2])
    weights = np.where(hm >= peak / 2, hm, 0.0)
    rows, cols = np.mgrid[0:h, 0:w]
    total = weights.sum()
    return np.array([(weights * (cols + 0.5)).sum() / total, (weights * (rows + 0.5)).sum() / total])


def _plane_estimates(stack: HeatMapStack):
    """Per-joint in-plane OBB coordinates from each joint's centroid."""
    hm = np.stack([centroid_fit(m) for m in stack.values])
    return stack.link.uv_to_plane(hm / stack.ratio)


def single_view_estimate(stack_xy: HeatMapStack, view_xy: ProjectedView, obb: ObbFrame) -> JointSet:
    """XY heat-map centroids with depth read back from the XY projected image.

    Joints whose estimated pixel is background get z = 0, the OBB center plane.
    """
    if stack_xy.plane != Plane.XY or view_xy.plane != Plane.XY:
        raise ViewMismatch("single-view baseline needs the XY stack and view")
    _check_views_single(stack_xy, obb)
    ab = _plane_estimates(stack_xy)
    uv = view_xy.plane_to_uv(ab)
    joints = np.zeros((stack_xy.k, 3))
    joints[:, :2] = ab
    for k, (u, v) in enumerate(uv):
        col, row = int(np.floor(u)), int(np.floor(v))
        if 0 <= row < view_xy.height and 0 <= col < view_xy.width and view_xy.mask[row, col]:
            joints[k, 2] = unproject_view_value(view_xy, (u, v), view_xy.values[row, col])
    return JointSet(joints, "obb")


def _check_views_single(stack, obb):
    expected = view_link(obb, stack.plane, stack.link.size[0])
    if not stack.link.isclose(expected):
        raise ViewMismatch(f"{stack.plane.name} stack is not registered to this OBB")


def coarse_fusion_estimate(stacks, obb: ObbFrame) -> JointSet:
    """Average each OBB coordinate over the two views that observe it."""
    xy, yz, zx = (_plane_estimates(s) for s in _check_views(stacks, obb))
    x = (xy[:, 0] + zx[:, 1]) / 2
    y = (xy[:, 1] + yz[:, 0]) / 2
    z = (yz[:, 1] + zx[:, 0]) / 2
    return JointSet(np.column_stack([x, y, z]), "obb")


def to_camera(pose: JointSet, obb: ObbFrame) -> JointSet:
    if pose.frame == "camera":
        return pose
    return JointSet(obb.to_camera(pose.joints), "camera")


def to_obb(pose: JointSet, obb: ObbFrame) -> JointSet:
    if pose.frame == "obb":
        return pose
    return JointSet(obb.to_local(pose.joints), "obb")

"""Synthetic labelled scenes: poses from a linear hand model, capsule point clouds, clean and noisy heat-maps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import PLANES, ObbFrame, compute_obb, project_to_planes, view_link
from .heatmap import DEFAULT_SIGMA, DEFAULT_SIZE, GaussianNoise, SpuriousHotspot, add_noise, synthesize_heatmaps
from .prior import JointSet, PosePrior

log = logging.getLogger(__name__)

# Bones as (parent, child) joint indices: wrist -> MCP -> PIP -> DIP -> tip per finger.
BONES = tuple(
    (a, b)
    for f in range(5)
    for a, b in ((0, 1 + f), (1 + f, 6 + f), (6 + f, 11 + f), (11 + f, 16 + f))
)
TIP_JOINTS = tuple(range(16, 21))

# Hand-local rest geometry in mm: palm in the x-y plane, fingers along +y,
# flexion curls toward -z.
_MCP = np.array([
    [-28.0, 28.0, -8.0],
    [-22.0, 84.0, 0.0],
    [-2.0, 88.0, 0.0],
    [17.0, 83.0, 0.0],
    [33.0, 74.0, 0.0],
])
_SEGMENTS = np.array([
    [36.0, 31.0, 27.0],
    [42.0, 25.0, 20.0],
    [46.0, 28.0, 22.0],
    [43.0, 27.0, 21.0],
    [34.0, 20.0, 18.0],
])
_HEADING = np.array([-0.85, -0.12, 0.0, 0.1, 0.22])
_REST_FLEX = 0.25
_HAND_POSITION = np.array([0.0, -45.0, 380.0])

# Standard deviations of the kinematic parameters around rest.
_STD_SPREAD = 0.08
_STD_FLEX = (0.35, 0.35, 0.25)
_STD_ROTATION = 0.15
_STD_TRANSLATION = (12.0, 12.0, 20.0)
_NOISE_FLOOR = 1.0  # mm^2 isotropic per coordinate


def _rot(axis, angle):
    x, y, z = axis / np.linalg.norm(axis)
    c, s = np.cos(angle), np.sin(angle)
    C = 1 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


N_PARAMS = 5 * 4 + 6


def forward_kinematics(params) -> np.ndarray:
    """Camera-space joints (21, 3) for a parameter vector offset from rest.

    Layout: per finger (spread, flex1, flex2, flex3) for 5 fingers, then
    global rotation vector (3) and translation (3).
    """
    p = np.asarray(params, dtype=np.float64)
    joints = np.zeros((21, 3))
    for f in range(5):
        spread, *flex = p[4 * f:4 * f + 4]
        heading = _HEADING[f] + spread
        direction = np.array([np.sin(heading), np.cos(heading), 0.0])
        lateral = np.cross(direction, [0.0, 0.0, 1.0])
        pos = _MCP[f].copy()
        joints[1 + f] = pos
        bend = 0.0
        for s in range(3):
            bend += _REST_FLEX + flex[s]
            seg_dir = _rot(lateral, bend) @ direction
            pos = pos + _SEGMENTS[f, s] * seg_dir
            joints[6 + 5 * s + f] = pos
    rotvec = p[20:23]
    angle = np.linalg.norm(rotvec)
    centroid = joints.mean(axis=0)
    if angle > 0:
        joints = (joints - centroid) @ _rot(rotvec, angle).T + centroid
    return joints - centroid + _HAND_POSITION + p[23:26]


@lru_cache(maxsize=1)
def _default_generator():
    h = 1e-6
    rest = forward_kinematics(np.zeros(N_PARAMS)).reshape(-1)
    jac = np.empty((rest.size, N_PARAMS))
    for i in range(N_PARAMS):
        d = np.zeros(N_PARAMS)
        d[i] = h
        jac[:, i] = (forward_kinematics(d).reshape(-1) - forward_kinematics(-d).reshape(-1)) / (2 * h)
    std = np.concatenate([
        np.tile([_STD_SPREAD, *_STD_FLEX], 5),
        np.full(3, _STD_ROTATION),
        _STD_TRANSLATION,
    ])
    cov = (jac * std**2) @ jac.T + _NOISE_FLOOR * np.eye(rest.size)
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return PosePrior(rest, vecs, vals, "camera")


def default_generator() -> PosePrior:
    """Linearized hand model as a full-rank (63-component) Gaussian pose generator."""
    return _default_generator()


def generate_pose(generator: PosePrior, seed) -> JointSet:
    rng = np.random.default_rng(seed)
    alpha = rng.standard_normal(generator.m) * np.sqrt(np.maximum(generator.eigenvalues, 0.0))
    return JointSet.from_vector(generator.components @ alpha + generator.mean, generator.frame)


def _bone_points(a, b, n, radius, rng):
    axis = b - a
    length = np.linalg.norm(axis)
    if length == 0 or n == 0:
        return np.empty((0, 3))
    axis_u = axis / length
    # Half of the capsule side that faces the camera at the origin.
    to_cam = -(a + b) / 2
    facing = to_cam - (to_cam @ axis_u) * axis_u
    if np.linalg.norm(facing) < 1e-12:
        facing = np.cross(axis_u, [1.0, 0.0, 0.0])
        if np.linalg.norm(facing) < 1e-12:
            facing = np.cross(axis_u, [0.0, 1.0, 0.0])
    facing /= np.linalg.norm(facing)
    side = np.cross(axis_u, facing)
    t = rng.random(n)
    theta = (rng.random(n) - 0.5) * np.pi
    normal = np.cos(theta)[:, None] * facing + np.sin(theta)[:, None] * side
    return a + t[:, None] * axis + radius * normal


def render_cloud(pose: JointSet, density=6.0, radius=8.0, seed=0, bones=BONES) -> np.ndarray:
    """Sample points on the camera-facing half of a capsule around every bone.

    ``density`` is points per mm of bone length; the camera sits at the
    origin looking along +z.
    """
    if density <= 0 or radius <= 0:
        raise ValueError("density and radius must be positive")
    rng = np.random.default_rng(seed)
    joints = pose.joints
    parts = []
    for a, b in bones:
        n = int(round(np.linalg.norm(joints[b] - joints[a]) * density))
        parts.append(_bone_points(joints[a], joints[b], n, radius, rng))
    return np.concatenate(parts)


@dataclass(frozen=True)
class NoiseSpec:
    """Heat-map corruption for a scene.

    ``spurious_probability`` is the chance that one view receives a decoy
    blob for one fingertip, placed at another fingertip's projection.
    """

    gaussian_sigma: float = 0.0
    spurious_probability: float = 0.0
    spurious_amplitude: float = 1.0

    @property
    def empty(self):
        return self.gaussian_sigma == 0 and self.spurious_probability == 0


@dataclass(frozen=True)
class SyntheticScene:
    pose: JointSet
    cloud: np.ndarray
    obb: ObbFrame
    views: tuple
    clean_stacks: tuple
    noisy_stacks: tuple
    seed: int
    joints_uv: tuple
    hotspot: dict | None = field(default=None)

    @property
    def ambiguous(self):
        return self.hotspot is not None


def joints_to_uv(pose: JointSet, obb: ObbFrame, resolution=96):
    """Continuous projected-image coordinates of every joint in each of the three views."""
    local = obb.to_local(pose.joints)
    out = []
    for plane in PLANES:
        pu, pv, _ = plane.axes
        out.append(view_link(obb, plane, resolution).plane_to_uv(local[:, [pu, pv]]))
    return tuple(out)


def _inside(uvs, resolution):
    return all(np.all((uv >= 0) & (uv < resolution)) for uv in uvs)


def make_scene(generator: PosePrior, seed: int, noise: NoiseSpec = NoiseSpec(), resolution=96,
               heatmap_size=DEFAULT_SIZE, sigma=DEFAULT_SIGMA, density=6.0, radius=8.0,
               max_attempts=100) -> SyntheticScene:
    """Run the full synthetic pipeline for one frame.

    Scenes whose joints project outside any view are re-drawn with a
    derived seed; each rejection is logged.
    """
    for attempt in range(max_attempts):
        ss = np.random.SeedSequence([seed, attempt])
        pose_seed, cloud_seed, noise_seed = ss.spawn(3)
        pose = generate_pose(generator, pose_seed)
        cloud = render_cloud(pose, density, radius, cloud_seed)
        obb = compute_obb(cloud)
        uvs = joints_to_uv(pose, obb, resolution)
        if _inside(uvs, resolution):
            break
        log.info("scene seed %d attempt %d rejected: joints project outside a view", seed, attempt)
    else:
        raise RuntimeError(f"no valid scene for seed {seed} after {max_attempts} attempts")

    views = project_to_planes(cloud, obb, resolution)
    size = (heatmap_size, heatmap_size)
    clean = tuple(
        synthesize_heatmaps(uv, view_link(obb, plane, resolution), plane, sigma, size)
        for plane, uv in zip(PLANES, uvs)
    )

    noisy = list(clean)
    hotspot = None
    rng = np.random.default_rng(noise_seed)
    if noise.spurious_probability > 0 and rng.random() < noise.spurious_probability:
        view = int(rng.integers(3))
        joint, decoy = rng.choice(TIP_JOINTS, size=2, replace=False)
        spot = SpuriousHotspot(tuple(uvs[view][decoy]), noise.spurious_amplitude, int(joint), sigma)
        noisy[view] = add_noise(noisy[view], spot)
        hotspot = {"view": PLANES[view].name, "joint": int(joint), "decoy": int(decoy)}
    if noise.gaussian_sigma > 0:
        seeds = rng.integers(0, 2**63, size=3)
        noisy = [add_noise(s, GaussianNoise(noise.gaussian_sigma), int(sd)) for s, sd in zip(noisy, seeds)]

    return SyntheticScene(
        pose=pose,
        cloud=cloud,
        obb=obb,
        views=views,
        clean_stacks=clean,
        noisy_stacks=tuple(noisy),
        seed=seed,
        joints_uv=uvs,
        hotspot=hotspot,
    )

import numpy as np
import pytest

from mvfuse.geometry import compute_obb
from mvfuse.prior import NUM_JOINTS, JointSet, PosePrior
from mvfuse.synth import (
    BONES,
    NoiseSpec,
    default_generator,
    forward_kinematics,
    generate_pose,
    make_scene,
    render_cloud,
)


def segment_distance(points, a, b):
    ab = b - a
    t = np.clip((points - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def test_generator_shape_and_rest_pose():
    g = default_generator()
    assert g.k == NUM_JOINTS and g.frame == "camera"
    np.testing.assert_allclose(g.components.T @ g.components, np.eye(g.m), atol=1e-10)
    assert np.all(g.eigenvalues[:-1] >= g.eigenvalues[1:])
    # The mean is the kinematic model at rest, so the hand sits in front of the camera.
    rest = forward_kinematics(np.zeros(26))
    np.testing.assert_allclose(g.mean.reshape(-1, 3), rest, atol=1e-9)
    assert np.all(rest[:, 2] > 200)


def test_zero_eigenvalues_give_the_mean():
    g = default_generator()
    flat = PosePrior(g.mean, g.components, np.zeros(g.m), g.frame)
    pose = generate_pose(flat, 123)
    np.testing.assert_array_equal(pose.vector(), g.mean)


def test_generate_pose_deterministic():
    g = default_generator()
    np.testing.assert_array_equal(generate_pose(g, 5).joints, generate_pose(g, 5).joints)
    assert not np.array_equal(generate_pose(g, 5).joints, generate_pose(g, 6).joints)


def test_sample_mean_matches_generator():
    g = default_generator()
    draws = np.array([generate_pose(g, s).vector() for s in range(10_000)])
    stderr = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - g.mean) <= 3 * stderr + 1e-12)


def test_single_bone_point_count_and_radius():
    joints = np.zeros((NUM_JOINTS, 3))
    joints[0] = [0.0, 0.0, 400.0]
    joints[1] = [30.0, 40.0, 400.0]  # length 50 mm
    pose = JointSet(joints)
    for density in (2.0, 6.0, 10.0):
        cloud = render_cloud(pose, density=density, radius=8.0, bones=((0, 1),))
        assert abs(len(cloud) - 50 * density) <= 0.1 * 50 * density
        assert segment_distance(cloud, joints[0], joints[1]).max() <= 8.0 + 1e-9


def test_points_lie_on_some_capsule():
    pose = generate_pose(default_generator(), 2)
    cloud = render_cloud(pose, seed=3)
    d = np.min([segment_distance(cloud, pose.joints[a], pose.joints[b]) for a, b in BONES], axis=0)
    assert d.max() <= 8.0 + 1e-9


def test_render_rejects_bad_parameters():
    pose = generate_pose(default_generator(), 0)
    with pytest.raises(ValueError):
        render_cloud(pose, density=0)
    with pytest.raises(ValueError):
        render_cloud(pose, radius=-1)


@pytest.mark.slow
def test_obb_contains_joints_for_almost_all_seeds():
    g = default_generator()
    hits = 0
    for seed in range(1000):
        pose = generate_pose(g, seed)
        obb = compute_obb(render_cloud(pose, seed=seed))
        hits += bool(np.all(obb.contains(pose.joints, 1.1)))
    assert hits >= 990


def test_empty_noise_leaves_stacks_clean():
    scene = make_scene(default_generator(), 0, NoiseSpec())
    for clean, noisy in zip(scene.clean_stacks, scene.noisy_stacks):
        np.testing.assert_array_equal(clean.values, noisy.values)
    assert not scene.ambiguous


def test_hotspot_touches_exactly_one_view():
    noise = NoiseSpec(spurious_probability=1.0)
    for seed in range(10):
        scene = make_scene(default_generator(), seed, noise)
        changed = [not np.array_equal(c.values, n.values) for c, n in zip(scene.clean_stacks, scene.noisy_stacks)]
        assert sum(changed) == 1
        assert scene.ambiguous and scene.hotspot["joint"] != scene.hotspot["decoy"]


def test_scene_bitwise_reproducible():
    noise = NoiseSpec(0.1, 0.3)
    a = make_scene(default_generator(), 17, noise)
    b = make_scene(default_generator(), 17, noise)
    np.testing.assert_array_equal(a.cloud, b.cloud)
    np.testing.assert_array_equal(a.pose.joints, b.pose.joints)
    for x, y in zip(a.noisy_stacks, b.noisy_stacks):
        np.testing.assert_array_equal(x.values, y.values)
    for x, y in zip(a.views, b.views):
        np.testing.assert_array_equal(x.values, y.values)
    assert a.hotspot == b.hotspot


def test_joints_project_inside_views():
    for seed in range(20):
        scene = make_scene(default_generator(), seed)
        for uv in scene.joints_uv:
            assert np.all((uv >= 0) & (uv < 96))

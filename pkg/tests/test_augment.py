import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import truncnorm

from helpers import random_scene
from twinforge.augment import (
    AugmentationConfig,
    CameraJitterConfig,
    LightingConfig,
    ObjectConfig,
    TrajectoryConfig,
    augment_lighting,
    perturb_camera,
    sample_object_placement,
    sample_via_point,
    sampler_stream,
    truncated_normal,
)
from twinforge.camera import CameraModel
from twinforge.geometry import RigidTransform, random_rotation
from twinforge.scene import transform_scene


def _cam():
    return CameraModel.look_at([0.6, 0.0, 0.5], [0.3, 0, 0], up=(0, 0, 1), width=64, height=48, fov_x=1.0)


def test_placement_annulus_bounds():
    cfg = ObjectConfig(radius_range=(0.28, 0.35))
    rng = sampler_stream(0, 0, "object")
    for _ in range(10_000):
        p = sample_object_placement(cfg, rng)
        r = np.hypot(*p.pose.translation[:2])
        assert 0.28 <= r <= 0.35
        assert 0 <= np.arctan2(p.pose.rotation[1, 0], p.pose.rotation[0, 0]) % (2 * np.pi) <= 2 * np.pi
        assert 0.9 <= p.uniform_scale <= 1.1
        assert p.pose.translation[2] == 0.0


def test_placement_degenerate_ranges():
    cfg = ObjectConfig(radius_range=(0.3, 0.3), yaw_range=(0, 0), scale_range=(1, 1), angle_range=(0, 0))
    p = sample_object_placement(cfg, sampler_stream(3, 1, "object"))
    np.testing.assert_array_equal(p.pose.translation, [0.3, 0, 0])
    np.testing.assert_array_equal(p.pose.rotation, np.eye(3))
    assert p.uniform_scale == 1.0


def test_placement_area_uniform_moment():
    cfg = ObjectConfig(radius_range=(0.28, 0.35))
    rng = sampler_stream(1, 0, "object")
    r2 = np.array([np.sum(sample_object_placement(cfg, rng).pose.translation[:2] ** 2) for _ in range(100_000)])
    expected = (0.28**2 + 0.35**2) / 2
    assert abs(r2.mean() - expected) / expected < 0.01


def test_camera_zero_sigma_is_identity():
    base = _cam()
    out = perturb_camera(base, CameraJitterConfig(0.0, 0.0), sampler_stream(0, 0, "camera"))
    assert out is base


def test_camera_rotation_valid_and_intrinsics_kept():
    base = _cam()
    cfg = CameraJitterConfig(0.05, 0.2)
    rng = sampler_stream(0, 0, "camera")
    for _ in range(10_000):
        cam = perturb_camera(base, cfg, rng)
        r = cam.world_to_camera.rotation
        assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-9 and abs(np.linalg.det(r) - 1) < 1e-9
    assert (cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height) == (base.fx, base.fy, base.cx, base.cy, base.width, base.height)


def test_camera_translation_std_matches_truncated_normal():
    base = _cam()
    sigma = 0.01
    cfg = CameraJitterConfig(sigma, 0.03)
    rng = sampler_stream(5, 0, "camera")
    centers = np.array([perturb_camera(base, cfg, rng).center for _ in range(100_000)])
    d = centers - base.center
    expected = truncnorm.std(-3, 3, scale=sigma)
    for axis in range(3):
        assert abs(d[:, axis].std() - expected) / expected < 0.03
    assert np.all(np.abs(d) <= 3 * sigma + 1e-12)


def test_truncated_normal_bound():
    x = truncated_normal(np.random.default_rng(0), 2.0, 100_000)
    assert np.all(np.abs(x) <= 6.0)


def test_lighting_identity_and_affine():
    scene = random_scene(np.random.default_rng(0), 50, degree=1)
    same = augment_lighting(scene, LightingConfig((1, 1), (0, 0), 0.0), sampler_stream(0, 0, "lighting"))
    assert same.equals(scene)
    out = augment_lighting(scene, LightingConfig((2, 2), (0.1, 0.1), 0.0), sampler_stream(0, 0, "lighting"))
    np.testing.assert_array_equal(out.sh[:, 0, :], 2 * scene.sh[:, 0, :] + 0.1)
    np.testing.assert_array_equal(out.sh[:, 1:, :], scene.sh[:, 1:, :])
    for name in ("positions", "rotations", "log_scales", "opacity_logits", "features"):
        np.testing.assert_array_equal(getattr(out, name), getattr(scene, name))


def test_lighting_noise_variance():
    scene = random_scene(np.random.default_rng(1), 100_000)
    sigma = 0.02
    out = augment_lighting(scene, LightingConfig((1, 1), (0, 0), sigma), sampler_stream(0, 0, "lighting"))
    noise = out.sh[:, 0, 0] - scene.sh[:, 0, 0]
    assert abs(noise.var() - sigma**2) / sigma**2 < 0.05


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_lighting_commutes_with_transform(seed):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, 30, degree=0)
    T = RigidTransform(random_rotation(rng), rng.normal(size=3))
    cfg = LightingConfig()
    a = transform_scene(augment_lighting(scene, cfg, sampler_stream(seed, 0, "lighting")), T)
    b = augment_lighting(transform_scene(scene, T), cfg, sampler_stream(seed, 0, "lighting"))
    assert a.equals(b)


def test_via_point_box_and_mean():
    goal = RigidTransform(random_rotation(np.random.default_rng(0)), (0.3, 0.1, 0.05))
    assert sample_via_point(goal, TrajectoryConfig((0, 0)), sampler_stream(0, 0, "via")) == goal
    cfg = TrajectoryConfig((-0.01, 0.03))
    rng = sampler_stream(0, 0, "via")
    offs = []
    for _ in range(100_000):
        v = sample_via_point(goal, cfg, rng)
        assert np.array_equal(v.rotation, goal.rotation)
        offs.append(v.translation - goal.translation)
    offs = np.array(offs)
    assert np.all(offs >= -0.01 - 1e-15) and np.all(offs <= 0.03 + 1e-15)
    assert np.all(np.abs(offs.mean(axis=0) - 0.01) < 0.01 * 0.01)


def test_streams_deterministic_and_distinct():
    a = sampler_stream(7, 3, "camera").random(5)
    b = sampler_stream(7, 3, "camera").random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sampler_stream(7, 4, "camera").random(5))
    assert not np.array_equal(a, sampler_stream(7, 3, "object").random(5))
    # pinned values guard against platform or library drift
    np.testing.assert_allclose(sampler_stream(0, 0, "object").random(2), PINNED, rtol=0, atol=0)


PINNED = [0.4697977999851112, 0.5647690076715061]


@settings(max_examples=30, deadline=None)
@given(r_min=st.floats(0.01, 1.0), width=st.floats(0.0, 1.0), seed=st.integers(0, 1000))
def test_placement_outside_exclusion_disk(r_min, width, seed):
    cfg = ObjectConfig(radius_range=(r_min, r_min + width))
    p = sample_object_placement(cfg, sampler_stream(seed, 0, "object"))
    assert np.hypot(*p.pose.translation[:2]) >= r_min * (1 - 1e-12)


def test_config_validation():
    with pytest.raises(ValueError, match="r_min"):
        ObjectConfig(radius_range=(0.0, 0.3))
    with pytest.raises(ValueError, match="ordered"):
        ObjectConfig(yaw_range=(1.0, 0.0))
    with pytest.raises(ValueError, match=">= 0"):
        CameraJitterConfig(translation_sigma=-1)
    with pytest.raises(ValueError, match="ordered"):
        LightingConfig(color_scale_range=(2, 1))
    with pytest.raises(ValueError):
        sampler_stream(-1, 0, "x")
    assert AugmentationConfig().object.radius_range == (0.28, 0.35)

"""Seeded randomization of object placement, camera pose, lighting and via-points."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from twinforge.camera import CameraModel
from twinforge.geometry import RigidTransform, so3_exp
from twinforge.scene import GaussianScene

TRUNCATION = 3.0  # truncated normals are cut at this many sigmas


def _ordered(name: str, pair) -> tuple[float, float]:
    lo, hi = (float(v) for v in pair)
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"{name}: expected an ordered finite range, got [{lo}, {hi}]")
    return lo, hi


def _nonnegative(name: str, value: float) -> float:
    value = float(value)
    if not (np.isfinite(value) and value >= 0):
        raise ValueError(f"{name}: must be a finite value >= 0, got {value}")
    return value


@dataclass(frozen=True)
class ObjectConfig:
    radius_range: tuple[float, float] = (0.28, 0.35)
    angle_range: tuple[float, float] = (-np.pi, np.pi)  # workspace sector around the robot base
    yaw_range: tuple[float, float] = (0.0, 2 * np.pi)
    scale_range: tuple[float, float] = (0.9, 1.1)
    support_height: float = 0.0

    def __post_init__(self):
        r = _ordered("object.radius_range", self.radius_range)
        if r[0] <= 0:
            raise ValueError("object.radius_range: r_min must be > 0")
        object.__setattr__(self, "radius_range", r)
        object.__setattr__(self, "angle_range", _ordered("object.angle_range", self.angle_range))
        object.__setattr__(self, "yaw_range", _ordered("object.yaw_range", self.yaw_range))
        s = _ordered("object.scale_range", self.scale_range)
        if s[0] <= 0:
            raise ValueError("object.scale_range: scale must be > 0")
        object.__setattr__(self, "scale_range", s)
        object.__setattr__(self, "support_height", float(self.support_height))


@dataclass(frozen=True)
class CameraJitterConfig:
    translation_sigma: float = 0.01
    rotation_sigma: float = float(np.deg2rad(2.0))

    def __post_init__(self):
        object.__setattr__(self, "translation_sigma", _nonnegative("camera.translation_sigma", self.translation_sigma))
        object.__setattr__(self, "rotation_sigma", _nonnegative("camera.rotation_sigma", self.rotation_sigma))


@dataclass(frozen=True)
class LightingConfig:
    color_scale_range: tuple[float, float] = (0.8, 1.2)
    color_offset_range: tuple[float, float] = (-0.05, 0.05)
    noise_sigma: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "color_scale_range", _ordered("lighting.color_scale_range", self.color_scale_range))
        object.__setattr__(self, "color_offset_range", _ordered("lighting.color_offset_range", self.color_offset_range))
        object.__setattr__(self, "noise_sigma", _nonnegative("lighting.noise_sigma", self.noise_sigma))


@dataclass(frozen=True)
class TrajectoryConfig:
    via_offset_range: tuple[float, float] = (-0.03, 0.03)  # per-axis box, meters

    def __post_init__(self):
        object.__setattr__(self, "via_offset_range", _ordered("trajectory.via_offset_range", self.via_offset_range))


@dataclass(frozen=True)
class AugmentationConfig:
    object: ObjectConfig = field(default_factory=ObjectConfig)
    camera: CameraJitterConfig = field(default_factory=CameraJitterConfig)
    lighting: LightingConfig = field(default_factory=LightingConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    base_seed: int = 0


@dataclass(frozen=True)
class ObjectPlacement:
    pose: RigidTransform
    uniform_scale: float


def _name_key(name: str) -> int:
    # Python's hash() is salted per process; a digest is stable everywhere
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def sampler_stream(base_seed: int, episode: int, name: str) -> np.random.Generator:
    """Counter-based generator keyed by (base seed, episode, sampler name)."""
    if base_seed < 0 or episode < 0:
        raise ValueError("seeds and episode indices must be >= 0")
    seq = np.random.SeedSequence([int(base_seed), int(episode), _name_key(name)])
    return np.random.Generator(np.random.Philox(seq))


def truncated_normal(rng: np.random.Generator, sigma: float, size, bound: float = TRUNCATION) -> np.ndarray:
    """Zero-mean normal draws rejected outside +-bound*sigma."""
    out = rng.standard_normal(size)
    bad = np.abs(out) > bound
    while np.any(bad):
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out * sigma


def truncated_normal_std(sigma: float, bound: float = TRUNCATION) -> float:
    """Standard deviation of a normal truncated symmetrically at +-bound*sigma."""
    from scipy.stats import truncnorm

    return float(truncnorm.std(-bound, bound, scale=sigma))


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    # collapsed ranges stay exact instead of lo + 0 * (hi - lo) rounding
    return lo if lo == hi else float(rng.uniform(lo, hi))


def sample_object_placement(cfg: ObjectConfig, rng: np.random.Generator) -> ObjectPlacement:
    r_min, r_max = cfg.radius_range
    u = rng.random()
    r = r_min if r_min == r_max else float(np.sqrt(u * (r_max**2 - r_min**2) + r_min**2))
    r = min(max(r, r_min), r_max)
    phi = _uniform(rng, *cfg.angle_range)
    yaw = _uniform(rng, *cfg.yaw_range)
    scale = _uniform(rng, *cfg.scale_range)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pos = np.array([r * np.cos(phi), r * np.sin(phi), cfg.support_height])
    return ObjectPlacement(RigidTransform(rot, pos), scale)


def perturb_camera(base: CameraModel, cfg: CameraJitterConfig, rng: np.random.Generator) -> CameraModel:
    """Move the camera center by a world-frame offset and tilt it about its own axes."""
    dt = truncated_normal(rng, cfg.translation_sigma, 3)
    dw = truncated_normal(rng, cfg.rotation_sigma, 3)
    if not (np.any(dt) or np.any(dw)):
        return base
    c2w = base.world_to_camera.inverse()
    new = RigidTransform(c2w.rotation @ so3_exp(dw), c2w.translation + dt)
    return base.with_pose(new.inverse())


def augment_lighting(scene: GaussianScene, cfg: LightingConfig, rng: np.random.Generator) -> GaussianScene:
    """c0 <- s * c0 + b + per-splat noise on the degree-0 SH coefficients."""
    s = _uniform(rng, *cfg.color_scale_range)
    b = _uniform(rng, *cfg.color_offset_range)
    if s == 1.0 and b == 0.0 and cfg.noise_sigma == 0.0:
        return scene
    sh = scene.sh.copy()
    c0 = s * sh[:, 0, :] + b
    if cfg.noise_sigma > 0:
        c0 = c0 + rng.normal(0.0, cfg.noise_sigma, c0.shape)
    sh[:, 0, :] = c0
    return scene.replace(sh=sh)


def sample_via_point(goal: RigidTransform, cfg: TrajectoryConfig, rng: np.random.Generator) -> RigidTransform:
    lo, hi = cfg.via_offset_range
    if lo == hi:
        offset = np.full(3, lo)
    else:
        offset = rng.uniform(lo, hi, 3)
    return RigidTransform(goal.rotation, goal.translation + offset)

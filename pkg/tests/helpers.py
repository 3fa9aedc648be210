"""Shared builders for tests."""

from __future__ import annotations

import numpy as np

from twinforge.camera import CameraModel
from twinforge.scene import GaussianScene


def random_scene(rng, n, degree=0, feature_dim=0, lo=(-0.5, -0.4, 1.0), hi=(0.5, 0.4, 2.0),
                 scale=(0.02, 0.08), opacity=(0.0, 1.0), float32=False) -> GaussianScene:
    k = (degree + 1) ** 2
    pos = rng.uniform(lo, hi, size=(n, 3))
    quat = rng.normal(size=(n, 4))
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    log_scale = np.log(rng.uniform(scale[0], scale[1], size=(n, 3)))
    op = rng.normal(opacity[0], opacity[1], size=n)
    sh = rng.normal(0.0, 0.4, size=(n, k, 3))
    feats = rng.normal(size=(n, feature_dim))
    arrays = [pos, quat, log_scale, op, sh, feats]
    if float32:
        arrays = [a.astype(np.float32).astype(np.float64) for a in arrays]
    return GaussianScene(*arrays)


def front_camera(width=64, height=64, fov_deg=60.0) -> CameraModel:
    """Camera at the origin looking down +z (world axes equal camera axes)."""
    return CameraModel.look_at([0, 0, 0], [0, 0, 1], up=(0, -1, 0), width=width, height=height,
                               fov_x=np.deg2rad(fov_deg))


def star_mesh(rng, subdivisions=2, center=(0.0, 0.0, 0.0)):
    """Closed star-shaped mesh: an icosphere with random radial bumps."""
    from twinforge.assets.mesh import TriangleMesh, icosphere

    sphere = icosphere(1.0, subdivisions)
    radii = rng.uniform(0.5, 1.5, len(sphere.vertices))
    return TriangleMesh(sphere.vertices * radii[:, None] + np.asarray(center), sphere.faces)


def random_articulated_asset(rng):
    from twinforge.assets import ArticulationSpec, InteractiveAsset, PhysicsProperties, box_mesh

    base_size = rng.uniform(0.1, 0.6, 3)
    mobile_size = base_size * rng.uniform(0.3, 0.9, 3)
    base = box_mesh(base_size, rng.uniform(-0.1, 0.1, 3))
    mobile = box_mesh(mobile_size, rng.uniform(-0.1, 0.1, 3) + [0, 0, base_size[2]])
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    joint = str(rng.choice(["prismatic", "revolute"]))
    lo = rng.uniform(-1.0, 0.0)
    spec = ArticulationSpec(joint, axis, rng.uniform(-0.3, 0.3, 3), lo, lo + rng.uniform(0.0, 2.0),
                            f"mobile part {rng.integers(1000)}", "base")
    physics = PhysicsProperties(float(rng.uniform(100, 3000)), float(rng.uniform(1e5, 1e11)), float(rng.uniform(-0.5, 0.49)))
    return InteractiveAsset({spec.mobile_label: mobile, "base": base}, physics, spec)


def two_link_arm(l1=0.3, l2=0.2):
    """Planar 2R arm in the xy plane; end link 'tip'."""
    from twinforge.geometry import RigidTransform
    from twinforge.kinematics import Joint, Link, RobotModel

    links = [Link("base"), Link("upper"), Link("fore"), Link("tip")]
    joints = [
        Joint("shoulder", "revolute", "base", "upper", RigidTransform.identity(), (0, 0, 1), -np.pi, np.pi),
        Joint("elbow", "revolute", "upper", "fore", RigidTransform(np.eye(3), (l1, 0, 0)), (0, 0, 1), -np.pi, np.pi),
        Joint("tool", "fixed", "fore", "tip", RigidTransform(np.eye(3), (l2, 0, 0))),
    ]
    return RobotModel("two_link", links, joints)


# criterion number -> (passed, detail); filled by the acceptance suite, printed by conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}")

"""Anchoring a reconstructed scene to the robot's own frame."""

from __future__ import annotations

import os

import numpy as np
from numpy.typing import ArrayLike, NDArray

from twinforge.assets.mesh import TriangleMesh, sample_surface
from twinforge.geometry import RigidTransform
from twinforge.kinematics.meshes import collision_meshes
from twinforge.kinematics.model import RobotModel, forward_kinematics
from twinforge.registration.icp import IcpParams, IcpResult, icp_align
from twinforge.scene import GaussianScene, transform_scene
from twinforge.semantic import extract_splats_by_class

DEFAULT_ROBOT_CLASS = "a robot arm"


def posed_robot_mesh(robot: RobotModel, q: ArrayLike, base_dir: str | os.PathLike | None = None, visual: bool = False) -> TriangleMesh:
    """Union of link meshes placed by forward kinematics, labeled by link name."""
    meshes = collision_meshes(robot, base_dir, visual=visual)
    if not meshes:
        raise ValueError(f"robot {robot.name!r} has no geometry")
    poses = forward_kinematics(robot, q)
    return TriangleMesh.merge([m.transformed(poses[name]).with_labels(name) for name, m in meshes.items()])


def sample_robot_pointcloud(
    robot: RobotModel, q: ArrayLike, n: int, seed: int, base_dir: str | os.PathLike | None = None
) -> NDArray[np.float64]:
    """``n`` area-uniform samples on the posed collision geometry."""
    q = robot.check_config(q)
    mesh = posed_robot_mesh(robot, q, base_dir)
    pts, _ = sample_surface(mesh, n, np.random.default_rng(seed))
    return pts


def align_world(
    scene: GaussianScene,
    robot: RobotModel,
    q_default: ArrayLike,
    params: IcpParams = IcpParams(),
    *,
    robot_class: str = DEFAULT_ROBOT_CLASS,
    threshold: float = 0.5,
    n_points: int = 4000,
    seed: int = 0,
    init: RigidTransform | None = None,
    base_dir: str | os.PathLike | None = None,
) -> tuple[GaussianScene, IcpResult]:
    """Register the scene's robot splats onto the robot model and move the whole scene accordingly."""
    idx, pts = extract_splats_by_class(scene, robot_class, threshold)
    if len(idx) == 0:
        raise ValueError(f"no splats of class {robot_class!r} found")
    target = sample_robot_pointcloud(robot, q_default, n_points, seed, base_dir)
    result = icp_align(pts, target, init, params)
    return transform_scene(scene, result.transform), result

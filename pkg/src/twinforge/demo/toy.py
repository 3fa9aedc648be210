"""Desk-scale assets, table scene and cameras for the scripted tasks."""

from __future__ import annotations

import numpy as np

from twinforge import sh as shlib
from twinforge.assets.articulation import ArticulationSpec, PhysicsProperties
from twinforge.assets.mesh import TriangleMesh, box_mesh, cylinder_mesh
from twinforge.assets.urdf import InteractiveAsset
from twinforge.camera import CameraModel
from twinforge.demo.world import SceneAsset, SceneState
from twinforge.scene import GaussianScene

WOOD = PhysicsProperties(600.0, 1.0e10, 0.3)
PLASTIC = PhysicsProperties(1050.0, 2.5e9, 0.35)
GLASS = PhysicsProperties(2500.0, 6.0e10, 0.22)
FOAM = PhysicsProperties(30.0, 1.0e5, 0.1)


def _box(size, center=None) -> TriangleMesh:
    size = np.asarray(size, dtype=float)
    if center is None:
        center = (0.0, 0.0, size[2] / 2)  # resting on z = 0
    return box_mesh(size, center)


def _single(mesh: TriangleMesh, physics: PhysicsProperties) -> InteractiveAsset:
    return InteractiveAsset({"body": mesh}, physics)


def toy_library() -> dict[str, SceneAsset]:
    cabinet_body = _box((0.12, 0.12, 0.12))
    drawer = _box((0.1, 0.09, 0.04), (0.015, 0.0, 0.07))
    drawer_joint = ArticulationSpec("prismatic", (1.0, 0.0, 0.0), (0.065, 0.0, 0.07), 0.0, 0.08, "drawer", "body")
    box_base = _box((0.1, 0.1, 0.05))
    lid = _box((0.1, 0.1, 0.01), (0.0, 0.0, 0.055))
    hinge = ArticulationSpec("revolute", (0.0, -1.0, 0.0), (-0.05, 0.0, 0.05), 0.0, 1.5, "lid", "body")
    return {
        "block": SceneAsset(_single(_box((0.04, 0.04, 0.04)), WOOD), (0.85, 0.2, 0.15)),
        "tray": SceneAsset(_single(_box((0.1, 0.1, 0.015)), PLASTIC), (0.2, 0.35, 0.8)),
        "red_cube": SceneAsset(_single(_box((0.035, 0.035, 0.035)), WOOD), (0.9, 0.1, 0.1)),
        "blue_cube": SceneAsset(_single(_box((0.035, 0.035, 0.035)), WOOD), (0.1, 0.2, 0.9)),
        "bottle": SceneAsset(_single(cylinder_mesh(0.02, 0.09, 16, (0.0, 0.0, 0.045)), GLASS), (0.2, 0.7, 0.3)),
        "coaster": SceneAsset(_single(_box((0.07, 0.07, 0.01)), WOOD), (0.6, 0.45, 0.3)),
        "cabinet": SceneAsset(InteractiveAsset({"drawer": drawer, "body": cabinet_body}, WOOD, drawer_joint), (0.7, 0.6, 0.45), 0.06),
        "box": SceneAsset(InteractiveAsset({"lid": lid, "body": box_base}, PLASTIC, hinge), (0.9, 0.75, 0.2), 1.0),
        "stain": SceneAsset(_single(_box((0.08, 0.08, 0.002)), PLASTIC), (0.35, 0.25, 0.15)),
        "sponge": SceneAsset(_single(_box((0.04, 0.03, 0.02)), FOAM), (0.95, 0.9, 0.3)),
    }


def table_scene(spacing: float = 0.04, extent=((-0.45, 0.6), (-0.5, 0.5))) -> GaussianScene:
    """Checkered table top at z = 0 as flat splats."""
    xs = np.arange(extent[0][0], extent[0][1] + 1e-9, spacing)
    ys = np.arange(extent[1][0], extent[1][1] + 1e-9, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, -0.002)])
    checker = ((np.floor(gx / 0.1) + np.floor(gy / 0.1)) % 2).ravel()
    rgb = np.where(checker[:, None] > 0, [0.78, 0.74, 0.68], [0.62, 0.58, 0.52])
    n = len(pos)
    scales = np.tile(np.log([spacing * 0.7, spacing * 0.7, 0.002]), (n, 1))
    return GaussianScene(
        pos, np.tile([1.0, 0, 0, 0], (n, 1)), scales, np.full(n, 3.0), shlib.rgb_to_dc(rgb)[:, None, :], np.zeros((n, 0))
    )


def toy_cameras(width: int = 64, height: int = 48) -> tuple[CameraModel, ...]:
    front = CameraModel.look_at([0.85, 0.0, 0.6], [0.1, 0.0, 0.0], up=(0, 0, 1), width=width, height=height, fov_x=np.deg2rad(75))
    return (front,)


def toy_scene_state(width: int = 64, height: int = 48) -> SceneState:
    return SceneState(table_scene(), toy_cameras(width, height), toy_library())

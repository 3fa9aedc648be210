"""Per-frame splat scenes: static background plus the posed robot and objects."""

from __future__ import annotations

import os
import zlib

import numpy as np
from numpy.typing import NDArray

from twinforge import sh as shlib
from twinforge.assets.mesh import TriangleMesh, sample_surface
from twinforge.augment import LightingConfig, augment_lighting
from twinforge.camera import CameraModel
from twinforge.demo.world import PlacedObject
from twinforge.geometry import RigidTransform
from twinforge.kinematics.meshes import collision_meshes
from twinforge.kinematics.model import RobotModel, forward_kinematics
from twinforge.render import RenderOptions
from twinforge.render.sparse import rasterize_sparse
from twinforge.render.imageio import to_uint8
from twinforge.scene import GaussianScene

SPLAT_SPACING = 0.02  # meters between surface samples on robot and object meshes
ROBOT_RGB = (0.25, 0.25, 0.3)


def _surface_points(mesh: TriangleMesh, key: str, spacing: float) -> NDArray[np.float64]:
    n = max(8, int(round(mesh.area() / spacing**2)))
    # seeded by name so the splat layout of an asset never depends on the episode
    pts, _ = sample_surface(mesh, n, np.random.default_rng(zlib.crc32(key.encode("utf-8"))))
    return pts


def _splats(points: NDArray[np.float64], rgb, spacing: float, sh_k: int) -> GaussianScene:
    n = len(points)
    sh = np.zeros((n, sh_k, 3))
    sh[:, 0, :] = shlib.rgb_to_dc(np.broadcast_to(np.asarray(rgb, dtype=float), (n, 3)))
    return GaussianScene(
        points, np.tile([1.0, 0, 0, 0], (n, 1)), np.full((n, 3), np.log(spacing * 0.6)), np.full(n, 4.0), sh, np.zeros((n, 0))
    )


class FrameComposer:
    """Holds the episode's lighting-augmented splat set and moves the dynamic parts per frame.

    The splat set is fixed for the whole episode; only positions change, so
    lighting noise drawn once per episode stays attached to the same splats.
    """

    def __init__(
        self,
        background: GaussianScene,
        robot: RobotModel,
        objects: dict[str, PlacedObject],
        lighting: LightingConfig,
        lighting_rng: np.random.Generator,
        base_dir: str | os.PathLike | None = None,
        spacing: float = SPLAT_SPACING,
        opts: RenderOptions | None = None,
    ):
        self.robot = robot
        self.opts = opts or RenderOptions()
        k = background.sh.shape[1]
        bg = background.replace(features=np.zeros((len(background), 0)), label_table={})
        parts = [bg]
        self._groups: list[tuple[str, str, str, NDArray[np.float64], slice]] = []  # (kind, owner, part, local pts, slots)
        start = len(bg)

        def add(kind, owner, part, pts, rgb):
            nonlocal start
            parts.append(_splats(pts, rgb, spacing, k))
            self._groups.append((kind, owner, part, pts, slice(start, start + len(pts))))
            start += len(pts)

        for link, mesh in collision_meshes(robot, base_dir).items():
            add("link", link, "", _surface_points(mesh, f"{robot.name}/{link}", spacing), ROBOT_RGB)
        for role in sorted(objects):
            obj = objects[role]
            for label in sorted(obj.item.asset.parts):
                local = obj.item.asset.parts[label].vertices * obj.scale
                mesh = TriangleMesh(local, obj.item.asset.parts[label].faces)
                add("object", role, label, _surface_points(mesh, f"{obj.name}/{label}", spacing), obj.item.rgb)
        template = parts[0]
        for p in parts[1:]:
            template = template.concat(p)
        self.template = augment_lighting(template, lighting, lighting_rng)
        self._positions = self.template.positions.copy()

    def scene_at(self, q: NDArray[np.float64], objects: dict[str, PlacedObject]) -> GaussianScene:
        links = forward_kinematics(self.robot, q)
        pos = self._positions.copy()
        for kind, owner, part, pts, sl in self._groups:
            T: RigidTransform = links[owner] if kind == "link" else objects[owner].part_transform(part)
            pos[sl] = T.apply(pts)
        return self.template.replace(positions=pos)

    def render(self, cameras: tuple[CameraModel, ...], q, objects) -> list[NDArray[np.uint8]]:
        scene = self.scene_at(q, objects)
        return [to_uint8(rasterize_sparse(scene, cam, self.opts).color) for cam in cameras]

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from twinforge.assets.mesh import TriangleMesh, box_mesh, load_mesh
from twinforge.kinematics.model import Geometry, RobotModel


def geometry_mesh(g: Geometry, base_dir: str | os.PathLike | None = None) -> TriangleMesh:
    """The shape as a mesh in its link frame."""
    if g.kind == "box":
        mesh = box_mesh(g.size)
    else:
        path = Path(g.filename.removeprefix("file://"))
        if not path.is_absolute():
            if base_dir is None:
                raise ValueError(f"relative mesh path {g.filename!r} needs a base directory")
            path = Path(base_dir) / path
        mesh = load_mesh(path)
        if g.scale is not None:
            mesh = TriangleMesh(mesh.vertices * np.asarray(g.scale), mesh.faces, mesh.face_labels)
    return mesh.transformed(g.origin)


def collision_meshes(robot: RobotModel, base_dir: str | os.PathLike | None = None, visual: bool = False) -> dict[str, TriangleMesh]:
    """Per-link union of collision (or visual) shapes, in link frames. Links without shapes are omitted."""
    out = {}
    for name, link in robot.links.items():
        shapes = link.visuals if visual else link.collisions
        if shapes:
            out[name] = TriangleMesh.merge([geometry_mesh(g, base_dir) for g in shapes])
    return out

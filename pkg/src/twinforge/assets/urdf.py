"""Interactive assets and their URDF bundles.

The base part's link frame is the object frame. A mobile part's link frame
sits at the joint origin, so its meshes and inertial block are offset by the
negated origin.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from twinforge.assets.articulation import ArticulationSpec, PhysicsProperties
from twinforge.assets.massprops import MassProperties, combine, mass_properties_or_bounds
from twinforge.assets.mesh import TriangleMesh, load_mesh, save_mesh
from twinforge.geometry import RigidTransform
from twinforge.kinematics.model import Geometry, Inertial, Joint, Link, RobotModel
from twinforge.kinematics.urdf import parse_urdf, robot_to_urdf

RESERVED_NAMES = frozenset({"world"})
MESH_DIR = "meshes"


class AssetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class InteractiveAsset:
    parts: dict[str, TriangleMesh]
    physics: PhysicsProperties
    articulation: ArticulationSpec | None = None
    mass: dict[str, MassProperties] = field(default_factory=dict)

    def __post_init__(self):
        if not self.parts:
            raise AssetError("asset has no parts")
        a = self.articulation
        if a is not None:
            for label in (a.mobile_label, a.base_label):
                if label not in self.parts:
                    raise AssetError(f"articulation references unknown part {label!r}")
        missing = set(self.parts) - set(self.mass)
        if missing:
            mass = dict(self.mass)
            for label in sorted(missing):
                mass[label] = mass_properties_or_bounds(self.parts[label], self.physics.density, label)
            object.__setattr__(self, "mass", mass)

    def total_mass(self) -> float:
        return sum(m.mass for m in self.mass.values())


def mesh_filename(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_") + ".obj"


def _check_labels(labels) -> None:
    seen: dict[str, str] = {}
    for label in labels:
        if label in RESERVED_NAMES:
            raise AssetError(f"part label {label!r} is reserved")
        fn = mesh_filename(label)
        if fn == ".obj" or fn in seen:
            raise AssetError(f"part label {label!r} does not map to a unique mesh file name")
        seen[fn] = label


def _inertial(props: MassProperties, link_origin: np.ndarray) -> Inertial:
    if not (math.isfinite(props.mass) and np.all(np.isfinite(props.inertia)) and np.all(np.isfinite(props.center_of_mass))):
        raise AssetError("non-finite inertia")
    return Inertial(props.mass, RigidTransform(np.eye(3), props.center_of_mass - link_origin), props.inertia)


def _link(label: str, props: MassProperties, offset: np.ndarray, labels_in_link: list[str]) -> Link:
    shapes = tuple(
        Geometry("mesh", RigidTransform(np.eye(3), -offset), filename=f"{MESH_DIR}/{mesh_filename(l)}") for l in labels_in_link
    )
    return Link(label, _inertial(props, offset), shapes, shapes)


def asset_robot(asset: InteractiveAsset, name: str) -> RobotModel:
    _check_labels(asset.parts)
    a = asset.articulation
    zero = np.zeros(3)
    if a is None:
        labels = list(asset.parts)
        props = combine([asset.mass[l] for l in labels]) if len(labels) > 1 else asset.mass[labels[0]]
        link_name = labels[0] if len(labels) == 1 else name
        if link_name in RESERVED_NAMES:
            raise AssetError(f"link name {link_name!r} is reserved")
        return RobotModel(name, [_link(link_name, props, zero, labels)], [])
    if set(asset.parts) != {a.mobile_label, a.base_label}:
        raise AssetError("an articulated asset must consist of exactly its mobile and base parts")
    base = _link(a.base_label, asset.mass[a.base_label], zero, [a.base_label])
    mobile = _link(a.mobile_label, asset.mass[a.mobile_label], a.origin, [a.mobile_label])
    joint = Joint(
        f"{a.mobile_label}_joint",
        a.joint_type,
        a.base_label,
        a.mobile_label,
        RigidTransform(np.eye(3), a.origin),
        a.axis,
        a.limit_lower,
        a.limit_upper,
        effort=100.0,
        velocity=1.0,
    )
    return RobotModel(name, [base, mobile], [joint])


def build_urdf(asset: InteractiveAsset, name: str) -> str:
    return robot_to_urdf(asset_robot(asset, name))


def read_articulation(robot: RobotModel) -> tuple[ArticulationSpec | None, dict[str, MassProperties]]:
    """Recover the articulation and object-frame mass fields from a parsed asset URDF.

    Volumes are not stored in URDF and come back as NaN.
    """
    movable = robot.movable_joints
    if len(movable) > 1:
        raise AssetError("asset URDF has more than one movable joint")
    offsets = {robot.root: np.zeros(3)}
    for j in robot.joints:
        offsets[j.child] = offsets[j.parent] + j.origin.translation
    mass = {}
    for name, link in robot.links.items():
        if link.inertial is not None:
            com = offsets[name] + link.inertial.origin.translation
            r = link.inertial.origin.rotation
            mass[name] = MassProperties(math.nan, link.inertial.mass, com, r @ link.inertial.inertia @ r.T)
    spec = None
    if movable:
        j = movable[0]
        spec = ArticulationSpec(j.type, j.axis, offsets[j.child], j.lower, j.upper, j.child, j.parent)
    return spec, mass


def write_asset_bundle(asset: InteractiveAsset, name: str, root: str | os.PathLike) -> Path:
    """Write ``asset/{name}/`` with model.urdf, meshes/*.obj, physics.json and articulation.json."""
    out = Path(root) / "asset" / name
    (out / MESH_DIR).mkdir(parents=True, exist_ok=True)
    urdf = build_urdf(asset, name)
    for label, mesh in asset.parts.items():
        save_mesh(mesh.with_labels(label), out / MESH_DIR / mesh_filename(label))
    (out / "model.urdf").write_text(urdf)
    (out / "physics.json").write_text(json.dumps(asset.physics.to_dict(), indent=2) + "\n")
    art = asset.articulation.to_dict() if asset.articulation is not None else None
    (out / "articulation.json").write_text(json.dumps(art, indent=2) + "\n")
    return out


def load_asset_bundle(path: str | os.PathLike) -> InteractiveAsset:
    path = Path(path)
    physics = PhysicsProperties(**json.loads((path / "physics.json").read_text()))
    art_path = path / "articulation.json"
    art = json.loads(art_path.read_text()) if art_path.exists() else None
    robot = parse_urdf((path / "model.urdf").read_text())
    parts = {}
    for mesh_file in sorted((path / MESH_DIR).glob("*.obj")):
        mesh = load_mesh(mesh_file)
        label = mesh.face_labels[0] if mesh.face_labels else mesh_file.stem
        parts[label] = TriangleMesh(mesh.vertices, mesh.faces)
    articulation = ArticulationSpec.from_dict(art) if art else None
    asset = InteractiveAsset(parts, physics, articulation)
    if set(asset_robot(asset, robot.name).links) != set(robot.links):
        raise AssetError(f"{path}: meshes do not match the links in model.urdf")
    return asset

"""Objects placed in the aligned scene and their kinematic state."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from twinforge.assets.massprops import MassProperties, scaled
from twinforge.assets.mesh import TriangleMesh
from twinforge.assets.urdf import InteractiveAsset
from twinforge.augment import ObjectPlacement
from twinforge.camera import CameraModel
from twinforge.geometry import RigidTransform, so3_exp
from twinforge.scene import GaussianScene


class PlacementRejected(ValueError):
    """The placement overlaps an object already in the scene; sample again."""

    def __init__(self, role: str, other: str):
        super().__init__(f"placement of {role!r} overlaps {other!r}")
        self.role = role
        self.other = other


@dataclass(frozen=True)
class SceneAsset:
    """An interactive asset plus the flat color its splats are drawn with."""

    asset: InteractiveAsset
    rgb: tuple[float, float, float] = (0.6, 0.6, 0.6)
    initial_joint: float | None = None  # starting joint value for articulated assets, unscaled units


@dataclass(frozen=True, eq=False)
class PlacedObject:
    name: str  # asset name
    item: SceneAsset
    pose: RigidTransform  # object frame in the world; the frame origin is the bottom center
    scale: float
    joint: float | None = None
    coverage: float | None = None  # fraction of a flat patch wiped so far

    @property
    def spec(self):
        a = self.item.asset.articulation
        if a is None:
            return None
        if self.scale == 1.0 or a.joint_type == "revolute":
            return a
        return replace(a, origin=a.origin * self.scale, limit_lower=a.limit_lower * self.scale, limit_upper=a.limit_upper * self.scale)

    def part_transform(self, label: str) -> RigidTransform:
        """Pose of a part in the world; the mobile part follows the joint value."""
        spec = self.spec
        if spec is None or label != spec.mobile_label or not self.joint:
            return self.pose
        return self.pose @ joint_motion(spec.joint_type, spec.axis, spec.origin, self.joint)

    def world_meshes(self) -> dict[str, TriangleMesh]:
        return {label: m.transformed(self.part_transform(label), self.scale) for label, m in self.item.asset.parts.items()}

    def local_bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        lo = np.min([m.bounds()[0] for m in self.item.asset.parts.values()], axis=0)
        hi = np.max([m.bounds()[1] for m in self.item.asset.parts.values()], axis=0)
        return lo * self.scale, hi * self.scale

    def world_bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        meshes = self.world_meshes().values()
        return np.min([m.bounds()[0] for m in meshes], axis=0), np.max([m.bounds()[1] for m in meshes], axis=0)

    def center(self) -> NDArray[np.float64]:
        """Bounding-box center of the object in the world, following its pose."""
        lo, hi = self.local_bounds()
        return self.pose.apply((lo + hi) / 2)

    def mass(self) -> float:
        return sum(scaled(p, self.scale).mass for p in self.item.asset.mass.values())

    def mass_properties(self) -> dict[str, MassProperties]:
        return {k: scaled(p, self.scale) for k, p in self.item.asset.mass.items()}

    def with_state(self, pose: RigidTransform | None = None, joint: float | None = None, coverage: float | None = None) -> PlacedObject:
        return PlacedObject(
            self.name,
            self.item,
            self.pose if pose is None else pose,
            self.scale,
            self.joint if joint is None else joint,
            self.coverage if coverage is None else coverage,
        )


def yaw_pose(yaw: float, position) -> RigidTransform:
    """Pose turned by ``yaw`` about world z at ``position``."""
    c, s = np.cos(yaw), np.sin(yaw)
    return RigidTransform(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), position)


def joint_motion(kind: str, axis: NDArray[np.float64], origin: NDArray[np.float64], q: float) -> RigidTransform:
    """Motion of the mobile part in the object frame for joint value ``q``."""
    if kind == "prismatic":
        return RigidTransform(np.eye(3), axis * q)
    r = so3_exp(axis * q)
    return RigidTransform(r, origin - r @ origin)


@dataclass(frozen=True, eq=False)
class SceneState:
    """Aligned static scene, the cameras that observe it, and the objects placed so far."""

    background: GaussianScene
    cameras: tuple[CameraModel, ...]
    library: dict[str, SceneAsset]
    objects: dict[str, PlacedObject] = field(default_factory=dict)  # role -> object

    def with_objects(self, objects: dict[str, PlacedObject]) -> SceneState:
        return SceneState(self.background, self.cameras, self.library, objects)


def _overlap(a, b) -> bool:
    return bool(np.all(a[0] < b[1]) and np.all(b[0] < a[1]))


def attach_object(state: SceneState, role: str, asset_name: str, placement: ObjectPlacement) -> SceneState:
    """Pose an asset at the placement with its uniform scale; splats of the static scene are untouched."""
    if asset_name not in state.library:
        raise KeyError(f"unknown asset {asset_name!r}")
    if role in state.objects:
        raise ValueError(f"role {role!r} is already placed")
    item = state.library[asset_name]
    joint = item.initial_joint
    if joint is None and item.asset.articulation is not None:
        joint = 0.0
    obj = PlacedObject(asset_name, item, placement.pose, float(placement.uniform_scale), joint)
    if obj.spec is not None and item.initial_joint is not None and item.asset.articulation.joint_type == "prismatic":
        obj = obj.with_state(joint=item.initial_joint * obj.scale)
    bounds = obj.world_bounds()
    for other_role, other in state.objects.items():
        if _overlap(bounds, other.world_bounds()):
            raise PlacementRejected(role, other_role)
    return state.with_objects({**state.objects, role: obj})

"""Kinematic tree description and forward kinematics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from twinforge.geometry import RigidTransform, so3_exp

JointType = Literal["revolute", "prismatic", "fixed"]
JOINT_TYPES = ("revolute", "prismatic", "fixed")


@dataclass(frozen=True, eq=False)
class Inertial:
    mass: float
    origin: RigidTransform  # center-of-mass frame in the link frame
    inertia: NDArray[np.float64]  # 3x3, about the COM, expressed in the origin frame


@dataclass(frozen=True, eq=False)
class Geometry:
    """Visual or collision shape in the link frame."""

    kind: Literal["mesh", "box"]
    origin: RigidTransform
    filename: str | None = None
    scale: NDArray[np.float64] | None = None
    size: NDArray[np.float64] | None = None


@dataclass(frozen=True, eq=False)
class Link:
    name: str
    inertial: Inertial | None = None
    visuals: tuple[Geometry, ...] = ()
    collisions: tuple[Geometry, ...] = ()


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    type: JointType
    parent: str
    child: str
    origin: RigidTransform
    axis: NDArray[np.float64] = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    lower: float = 0.0
    upper: float = 0.0
    effort: float = 0.0
    velocity: float = 0.0

    def __post_init__(self):
        if self.type not in JOINT_TYPES:
            raise ValueError(f"joint {self.name!r}: unknown type {self.type!r}")
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(axis)
        if n == 0:
            raise ValueError(f"joint {self.name!r}: zero axis")
        object.__setattr__(self, "axis", axis / n)
        if self.lower > self.upper:
            raise ValueError(f"joint {self.name!r}: lower limit above upper")

    def motion(self, q: float) -> RigidTransform:
        if self.type == "revolute":
            return RigidTransform(so3_exp(self.axis * q), np.zeros(3))
        if self.type == "prismatic":
            return RigidTransform(np.eye(3), self.axis * q)
        return RigidTransform.identity()


class RobotModel:
    """Immutable kinematic tree with links in topological order.

    Joint configurations are plain vectors ordered as :attr:`movable_joints`.
    """

    def __init__(self, name: str, links: list[Link], joints: list[Joint]):
        self.name = name
        self.links = {l.name: l for l in links}
        if len(self.links) != len(links):
            raise ValueError("duplicate link names")
        names = [j.name for j in joints]
        if len(set(names)) != len(names):
            raise ValueError("duplicate joint names")
        child_of: dict[str, Joint] = {}
        for j in joints:
            for end in (j.parent, j.child):
                if end not in self.links:
                    raise ValueError(f"joint {j.name!r} references unknown link {end!r}")
            if j.child in child_of:
                raise ValueError(f"link {j.child!r} has more than one parent")
            child_of[j.child] = j
        roots = [n for n in self.links if n not in child_of]
        if len(roots) != 1:
            raise ValueError("joint graph is not a tree" + (" (cycle)" if not roots else f" (roots {roots})"))
        self.root = roots[0]
        children: dict[str, list[Joint]] = {n: [] for n in self.links}
        for j in joints:
            children[j.parent].append(j)
        order: list[Joint] = []
        stack = [self.root]
        seen = {self.root}
        while stack:
            link = stack.pop()
            for j in reversed(children[link]):
                if j.child in seen:
                    raise ValueError("joint graph has a cycle")
                seen.add(j.child)
                order.append(j)
                stack.append(j.child)
        if len(seen) != len(self.links):
            raise ValueError("joint graph has a cycle or disconnected links")
        self.joints = order
        self._parent_joint = child_of
        self.movable_joints = [j for j in order if j.type != "fixed"]
        self._qindex = {j.name: i for i, j in enumerate(self.movable_joints)}
        self._steps: dict[str, list] = {}

    @property
    def dof(self) -> int:
        return len(self.movable_joints)

    @property
    def lower(self) -> NDArray[np.float64]:
        return np.array([j.lower for j in self.movable_joints])

    @property
    def upper(self) -> NDArray[np.float64]:
        return np.array([j.upper for j in self.movable_joints])

    def joint(self, name: str) -> Joint:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def within_limits(self, q: ArrayLike, tol: float = 1e-12) -> bool:
        q = np.asarray(q, dtype=float)
        return q.shape == (self.dof,) and bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clamp(self, q: ArrayLike) -> NDArray[np.float64]:
        return np.clip(np.asarray(q, dtype=float), self.lower, self.upper)

    def check_config(self, q: ArrayLike, strict: bool = True) -> NDArray[np.float64]:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ValueError(f"expected {self.dof} joint values, got shape {q.shape}")
        if strict and not self.within_limits(q):
            raise ValueError("joint configuration outside limits")
        return q

    def chain(self, link: str) -> list[Joint]:
        """Joints from the root down to ``link``."""
        if link not in self.links:
            raise KeyError(f"unknown link {link!r}")
        out = []
        while link != self.root:
            j = self._parent_joint[link]
            out.append(j)
            link = j.parent
        return out[::-1]

    def _chain_steps(self, link: str) -> list:
        steps = self._steps.get(link)
        if steps is None:
            steps = [
                (j.origin.matrix(), j.type, j.axis, self._qindex.get(j.name, -1)) for j in self.chain(link)
            ]
            self._steps[link] = steps
        return steps

    def q_index(self, joint_name: str) -> int:
        return self._qindex[joint_name]


def forward_kinematics(robot: RobotModel, q: ArrayLike) -> dict[str, RigidTransform]:
    q = robot.check_config(q, strict=False)
    poses = {robot.root: RigidTransform.identity()}
    for j in robot.joints:
        value = q[robot.q_index(j.name)] if j.type != "fixed" else 0.0
        poses[j.child] = poses[j.parent] @ j.origin @ j.motion(value)
    return poses


def _axis_rotation(axis: NDArray[np.float64], angle: float) -> NDArray[np.float64]:
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ]
    )


def link_matrix(robot: RobotModel, q: NDArray[np.float64], link: str) -> NDArray[np.float64]:
    """4x4 pose of one link, walking only its own chain."""
    steps = robot._chain_steps(link)
    m = np.eye(4)
    for origin, kind, axis, k in steps:
        m = m @ origin
        if kind == "revolute":
            m[:3, :3] = m[:3, :3] @ _axis_rotation(axis, q[k])
        elif kind == "prismatic":
            m[:3, 3] += m[:3, :3] @ (axis * q[k])
    return m


def link_pose(robot: RobotModel, q: ArrayLike, link: str) -> RigidTransform:
    m = link_matrix(robot, np.asarray(q, dtype=float), link)
    return RigidTransform(m[:3, :3], m[:3, 3])

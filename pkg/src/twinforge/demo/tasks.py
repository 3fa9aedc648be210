"""Task descriptions: object bindings, phase scripts and success predicates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray

TaskName = Literal["stack_cubes", "pick_place", "upright_bottle", "move_bottle", "drawer_close", "box_close", "wiping"]
TASK_NAMES = ("stack_cubes", "pick_place", "upright_bottle", "move_bottle", "drawer_close", "box_close", "wiping")
PRIMITIVES = ("approach", "grasp", "transfer", "release", "push_joint", "wipe_path")


@dataclass(frozen=True)
class Phase:
    kind: str
    role: str

    def __post_init__(self):
        if self.kind not in PRIMITIVES:
            raise ValueError(f"unknown primitive {self.kind!r}")

    def label(self) -> str:
        return f"{self.kind}:{self.role}"


@dataclass(frozen=True)
class TaskSpec:
    """What to set up, what to do and how to tell whether it worked.

    The goal region is centered at ``region_offset`` above the top center of
    the ``region_anchor`` object, or at ``region_offset`` in the world if no
    anchor is given. Roles in ``facing`` are yawed so their +x side points at
    the robot base, with ``yaw_ranges`` then acting as a deviation from that.
    """

    name: TaskName
    bindings: dict[str, str]  # role -> asset name; placement order follows insertion order
    script: tuple[Phase, ...]
    subject: str  # role whose final state the predicate inspects
    region_anchor: str | None = None
    region_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    region_half_extents: tuple[float, float, float] | None = None
    upright_tolerance: float | None = None  # rad, max tilt of the subject's z axis
    joint_threshold: float | None = None  # joint value at or below which the articulation counts as closed
    coverage_threshold: float | None = None
    yaw_ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    facing: tuple[str, ...] = ()

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise ValueError(f"unknown task {self.name!r}")
        if not self.bindings:
            raise ValueError("task binds no objects")
        roles = set(self.bindings)
        for ph in self.script:
            if ph.role not in roles:
                raise ValueError(f"phase {ph.label()} refers to an unbound role")
        if self.subject not in roles:
            raise ValueError(f"subject {self.subject!r} is not bound")
        if self.region_anchor is not None and self.region_anchor not in roles:
            raise ValueError(f"region anchor {self.region_anchor!r} is not bound")
        if self.region_half_extents is not None and not all(h > 0 for h in self.region_half_extents):
            raise ValueError("region half-extents must be > 0")
        if self.region_half_extents is None and self.joint_threshold is None and self.coverage_threshold is None:
            raise ValueError("task has no success predicate")
        for role in [*self.yaw_ranges, *self.facing]:
            if role not in roles:
                raise ValueError(f"{role!r} is not bound")

    def check_assets(self, library) -> None:
        missing = sorted(set(self.bindings.values()) - set(library))
        if missing:
            raise KeyError(f"task {self.name} references unknown assets {missing}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bindings": dict(self.bindings),
            "script": [ph.label() for ph in self.script],
            "subject": self.subject,
            "region_anchor": self.region_anchor,
            "region_offset": list(self.region_offset),
            "region_half_extents": None if self.region_half_extents is None else list(self.region_half_extents),
            "upright_tolerance": self.upright_tolerance,
            "joint_threshold": self.joint_threshold,
            "coverage_threshold": self.coverage_threshold,
            "yaw_ranges": {k: list(v) for k, v in self.yaw_ranges.items()},
            "facing": list(self.facing),
        }

    @classmethod
    def from_dict(cls, d: dict) -> TaskSpec:
        d = dict(d)
        d["script"] = tuple(Phase(*s.split(":", 1)) for s in d["script"])
        d["region_offset"] = tuple(d.get("region_offset", (0.0, 0.0, 0.0)))
        if d.get("region_half_extents") is not None:
            d["region_half_extents"] = tuple(d["region_half_extents"])
        d["yaw_ranges"] = {k: tuple(v) for k, v in d.get("yaw_ranges", {}).items()}
        d["facing"] = tuple(d.get("facing", ()))
        return cls(**d)


def _pick(obj: str, target: str) -> tuple[Phase, ...]:
    return (Phase("approach", obj), Phase("grasp", obj), Phase("transfer", target), Phase("release", obj))


def default_task(name: TaskName) -> TaskSpec:
    """Scripted versions of the seven benchmark tasks over the toy asset library."""
    full = (0.0, 2 * np.pi)
    if name == "pick_place":
        return TaskSpec(name, {"target": "tray", "object": "block"}, _pick("object", "target"), "object",
                        region_anchor="target", region_offset=(0.0, 0.0, 0.02), region_half_extents=(0.05, 0.05, 0.03))  # fmt: skip
    if name == "stack_cubes":
        return TaskSpec(name, {"base": "blue_cube", "top": "red_cube"}, _pick("top", "base"), "top",
                        region_anchor="base", region_offset=(0.0, 0.0, 0.0175), region_half_extents=(0.012, 0.012, 0.01))  # fmt: skip
    if name == "move_bottle":
        return TaskSpec(name, {"target": "coaster", "object": "bottle"}, _pick("object", "target"), "object",
                        region_anchor="target", region_offset=(0.0, 0.0, 0.04), region_half_extents=(0.04, 0.04, 0.03))  # fmt: skip
    if name == "upright_bottle":
        return TaskSpec(name, {"target": "coaster", "object": "bottle"}, _pick("object", "target"), "object",
                        region_anchor="target", region_offset=(0.0, 0.0, 0.04), region_half_extents=(0.04, 0.04, 0.03),
                        upright_tolerance=float(np.deg2rad(10)), yaw_ranges={"object": (0.0, np.pi)})  # fmt: skip
    if name == "drawer_close":
        return TaskSpec(name, {"cabinet": "cabinet"}, (Phase("push_joint", "cabinet"),), "cabinet",
                        joint_threshold=0.01, facing=("cabinet",), yaw_ranges={"cabinet": (-np.pi / 8, np.pi / 8)})  # fmt: skip
    if name == "box_close":
        return TaskSpec(name, {"box": "box"}, (Phase("push_joint", "box"),), "box",
                        joint_threshold=0.05, facing=("box",), yaw_ranges={"box": (-np.pi / 8, np.pi / 8)})  # fmt: skip
    if name == "wiping":
        return TaskSpec(name, {"area": "stain", "tool": "sponge"},
                        (Phase("approach", "tool"), Phase("grasp", "tool"), Phase("wipe_path", "area"), Phase("release", "tool")),
                        "area", coverage_threshold=0.9, yaw_ranges={"area": full})  # fmt: skip
    raise ValueError(f"unknown task {name!r}")


def region_center(task: TaskSpec, objects) -> NDArray[np.float64]:
    offset = np.asarray(task.region_offset, dtype=float)
    if task.region_anchor is None:
        return offset
    anchor = objects[task.region_anchor]
    lo, hi = anchor.world_bounds()
    top = np.array([(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, hi[2]])
    return top + offset


def evaluate_success(task: TaskSpec, objects) -> bool:
    """The task predicate on a set of final object states (role -> PlacedObject)."""
    subject = objects[task.subject]
    ok = True
    if task.region_half_extents is not None:
        c = region_center(task, objects)
        ok &= bool(np.all(np.abs(subject.center() - c) <= np.asarray(task.region_half_extents)))
    if task.upright_tolerance is not None:
        z = subject.pose.rotation[:, 2]
        ok &= bool(z[2] >= np.cos(task.upright_tolerance))
    if task.joint_threshold is not None:
        ok &= subject.joint is not None and subject.joint <= task.joint_threshold
    if task.coverage_threshold is not None:
        ok &= subject.coverage is not None and subject.coverage >= task.coverage_threshold
    return bool(ok)

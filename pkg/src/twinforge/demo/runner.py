"""Scripted execution of one task episode with kinematic grasping."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from twinforge.augment import (
    AugmentationConfig,
    ObjectPlacement,
    perturb_camera,
    sample_object_placement,
    sample_via_point,
    sampler_stream,
)
from twinforge.camera import CameraModel
from twinforge.config import from_plain, to_plain
from twinforge.demo.compose import FrameComposer
from twinforge.demo.tasks import Phase, TaskSpec, evaluate_success, region_center
from twinforge.demo.world import PlacedObject, PlacementRejected, SceneState, attach_object, yaw_pose
from twinforge.geometry import RigidTransform
from twinforge.kinematics.ik import IkOptions, ik_solve
from twinforge.kinematics.model import RobotModel, link_pose

log = logging.getLogger(__name__)

SIG_DIGITS = 9


def quantize(x) -> NDArray[np.float64]:
    """Round to the precision episodes are stored with, so stored states replay exactly."""
    a = np.asarray(x, dtype=float)
    return np.array([float(f"{v:.{SIG_DIGITS}g}") for v in a.ravel()]).reshape(a.shape)


def quantize_scalar(x: float) -> float:
    return float(f"{x:.{SIG_DIGITS}g}")


def round_floats(obj):
    """Every float in nested plain data rounded to the stored precision."""
    if isinstance(obj, float):
        return quantize_scalar(obj)
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


@dataclass(frozen=True)
class DemoConfig:
    control_rate: float = 20.0  # Hz
    grasp_tolerance: float = 0.015  # m, tool point to grasp point
    max_steps: int = 400
    max_joint_speed: float = 1.0  # rad/s (or m/s for prismatic joints)
    approach_height: float = 0.06
    lift_height: float = 0.08
    gripper_frames: int = 4
    path_step: float = 0.01  # m between Cartesian waypoints on push and wipe paths
    push_gap: float = 0.005  # m between tool point and pushed surface
    placement_attempts: int = 50
    render: bool = True
    tool_link: str = "tool"
    home: tuple[float, ...] | None = None  # robot start configuration; zeros when absent

    def __post_init__(self):
        if not self.control_rate > 0:
            raise ValueError("control_rate must be > 0")
        if self.grasp_tolerance < 0:
            raise ValueError("grasp_tolerance must be >= 0")
        if self.max_steps < 1 or self.gripper_frames < 1 or self.placement_attempts < 1:
            raise ValueError("max_steps, gripper_frames and placement_attempts must be >= 1")
        if not (self.max_joint_speed > 0 and self.path_step > 0):
            raise ValueError("max_joint_speed and path_step must be > 0")


@dataclass(frozen=True, eq=False)
class ObjectState:
    position: NDArray[np.float64]
    quat: NDArray[np.float64]  # (w, x, y, z)
    joint: float | None = None
    coverage: float | None = None

    @classmethod
    def of(cls, obj: PlacedObject) -> ObjectState:
        joint = None if obj.joint is None else quantize_scalar(obj.joint)
        coverage = None if obj.coverage is None else quantize_scalar(obj.coverage)
        return cls(quantize(obj.pose.translation), quantize(obj.pose.quat()), joint, coverage)

    def pose(self) -> RigidTransform:
        return RigidTransform.from_quat(self.quat, self.position)

    def apply(self, obj: PlacedObject) -> PlacedObject:
        return PlacedObject(obj.name, obj.item, self.pose(), obj.scale, self.joint, self.coverage)

    def to_dict(self) -> dict:
        d: dict = {"position": self.position.tolist(), "quat": self.quat.tolist()}
        if self.joint is not None:
            d["joint"] = self.joint
        if self.coverage is not None:
            d["coverage"] = self.coverage
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ObjectState:
        return cls(np.array(d["position"], dtype=float), np.array(d["quat"], dtype=float), d.get("joint"), d.get("coverage"))


@dataclass(eq=False)
class Frame:
    timestamp: float
    joint_config: NDArray[np.float64]
    gripper: float  # 0 open, 1 closed
    action_dq: NDArray[np.float64]  # joint_config minus the previous frame's
    action_gripper: float  # gripper command issued for this frame
    objects: dict[str, ObjectState]
    renders: dict[str, object] = field(default_factory=dict)  # camera id -> image array or file path


@dataclass(frozen=True)
class Placement:
    asset: str
    position: tuple[float, float, float]
    yaw: float
    scale: float

    def to_dict(self) -> dict:
        return {"asset": self.asset, "position": list(self.position), "yaw": self.yaw, "scale": self.scale}


@dataclass(eq=False)
class Episode:
    id: int
    seed: int
    task: TaskSpec
    placements: dict[str, Placement]
    augmentation: dict  # config snapshot plus the values drawn for this episode
    cameras: list[CameraModel]
    frames: list[Frame]
    success: bool
    failure_phase: str | None = None
    generation_time: float | None = None  # wall-clock seconds; stored apart from the state files


class _Abort(RuntimeError):
    def __init__(self, phase: str, reason: str):
        super().__init__(f"{phase}: {reason}")
        self.phase = phase


def _yaw_of(R: NDArray[np.float64]) -> float:
    return math.atan2(R[1, 0], R[0, 0])


def top_down(yaw: float) -> NDArray[np.float64]:
    """Tool orientation pointing straight down, turned by ``yaw`` about world z."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) @ np.diag([-1.0, 1.0, -1.0])


def _nearest_symmetric(yaw: float, ref: float, period: float = math.pi / 2) -> float:
    return yaw + period * round((ref - yaw) / period)


class _Executor:
    def __init__(self, robot, task, state, objects, cfg, aug, via_rng, composer, cameras):
        self.robot = robot
        self.task = task
        self.state = state
        self.objects: dict[str, PlacedObject] = dict(objects)
        self.cfg = cfg
        self.aug = aug
        self.via_rng = via_rng
        self.composer = composer
        self.cameras = cameras
        self.dt = 1.0 / cfg.control_rate
        self.ik = IkOptions()
        self.frames: list[Frame] = []
        self.gripper = 0.0
        self.held: tuple[str, RigidTransform] | None = None
        self.hook = None  # called after every step while a push or wipe is in progress
        self.via_points: list[list[float]] = []
        self._waist = self._aim_joint()
        home = np.zeros(robot.dof) if cfg.home is None else np.asarray(cfg.home, dtype=float)
        self.q = quantize(robot.check_config(home))
        self._record(np.zeros(robot.dof))

    def _aim_joint(self) -> int | None:
        # a first joint turning about world z lets IK start facing the target
        if not self.robot.movable_joints:
            return None
        j = self.robot.movable_joints[0]
        if j.type == "revolute" and j.parent == self.robot.root and abs(abs((j.origin.rotation @ j.axis)[2]) - 1) < 1e-9:
            return 0
        return None

    # --- recording ---------------------------------------------------------

    def tool(self) -> RigidTransform:
        return link_pose(self.robot, self.q, self.cfg.tool_link)

    def _record(self, dq) -> None:
        states = {role: ObjectState.of(obj) for role, obj in self.objects.items()}
        # keep the in-memory state identical to what is stored
        self.objects = {role: states[role].apply(obj) for role, obj in self.objects.items()}
        renders = {}
        if self.composer is not None:
            images = self.composer.render(self.cameras, self.q, self.objects)
            renders = {f"cam{k}": im for k, im in enumerate(images)}
        t = quantize_scalar(len(self.frames) * self.dt)
        self.frames.append(Frame(t, self.q.copy(), self.gripper, dq, self.gripper, states, renders))

    def step(self, q, gripper: float | None = None) -> None:
        if len(self.frames) >= self.cfg.max_steps:
            raise _Abort("step_cap", f"exceeded {self.cfg.max_steps} steps")
        prev = self.q
        self.q = quantize(q)
        if gripper is not None:
            self.gripper = quantize_scalar(gripper)
        if self.held is not None:
            role, offset = self.held
            self.objects[role] = self.objects[role].with_state(pose=self.tool() @ offset)
        if self.hook is not None:
            self.hook()
        self._record(quantize(self.q - prev))

    # --- motion ------------------------------------------------------------

    def _solve(self, target: RigidTransform, phase: str) -> NDArray[np.float64]:
        seeds = [self.q]
        if self._waist is not None:
            aimed = self.q.copy()
            k = self._waist
            aimed[k] = np.clip(math.atan2(target.translation[1], target.translation[0]), self.robot.lower[k], self.robot.upper[k])
            seeds.append(aimed)
        best = None
        for seed in seeds:
            res = ik_solve(self.robot, target, seed, self.cfg.tool_link, self.ik)
            if res.converged:
                return res.q
            best = res if best is None or res.residual[0] < best.residual[0] else best
        raise _Abort(phase, f"IK failed (residual {best.residual.tolist()})")

    def move(self, targets: list[RigidTransform], phase: str) -> None:
        for target in targets:
            goal = self._solve(target, phase)
            delta = goal - self.q
            n = max(1, math.ceil(float(np.max(np.abs(delta), initial=0.0)) / (self.cfg.max_joint_speed * self.dt) - 1e-9))
            start = self.q
            for s in range(1, n + 1):
                self.step(start + delta * (s / n) if s < n else goal)

    def set_gripper(self, value: float) -> None:
        start = self.gripper
        n = self.cfg.gripper_frames
        for k in range(1, n + 1):
            self.step(self.q, start + (value - start) * k / n)

    # --- primitives --------------------------------------------------------

    def _grasp_frame(self, obj: PlacedObject) -> tuple[NDArray[np.float64], float]:
        c = obj.center()
        phi = math.atan2(c[1], c[0])
        return c, _nearest_symmetric(_yaw_of(obj.pose.rotation), phi)

    def approach(self, ph: Phase) -> None:
        obj = self.objects[ph.role]
        c, yaw = self._grasp_frame(obj)
        R = top_down(yaw)
        self.move([RigidTransform(R, c + [0, 0, self.cfg.approach_height]), RigidTransform(R, c)], ph.label())

    def grasp(self, ph: Phase) -> None:
        self.set_gripper(1.0)
        obj = self.objects[ph.role]
        tool = self.tool()
        dist = float(np.linalg.norm(tool.translation - obj.center()))
        if not dist < self.cfg.grasp_tolerance:
            raise _Abort(ph.label(), f"object {dist:.4f} m from the tool, tolerance {self.cfg.grasp_tolerance}")
        self.held = (ph.role, tool.inverse() @ obj.pose)

    def transfer(self, ph: Phase) -> None:
        if self.held is None:
            raise _Abort(ph.label(), "nothing held")
        role = self.held[0]
        tool = self.tool()
        obj = self.objects[role]
        if self.task.region_anchor == ph.role:
            goal_c = region_center(self.task, self.objects)
        else:
            lo, hi = self.objects[ph.role].world_bounds()
            half = (obj.world_bounds()[1][2] - obj.world_bounds()[0][2]) / 2
            goal_c = np.array([(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, hi[2] + half])
        goal_c = goal_c + [0.0, 0.0, 0.003]  # release just above the support
        # turn the held object by a quarter-turn multiple so the wrist faces the goal
        yaw = _nearest_symmetric(_yaw_of(tool.rotation @ np.diag([-1.0, 1.0, -1.0])), math.atan2(goal_c[1], goal_c[0]))
        R = top_down(yaw)
        local = tool.inverse().apply(obj.center())
        place = RigidTransform(R, goal_c - R @ local)
        above = RigidTransform(R, place.translation + [0, 0, self.cfg.approach_height])
        lift = RigidTransform(tool.rotation, tool.translation + [0, 0, self.cfg.lift_height])
        via = sample_via_point(above, self.aug.trajectory, self.via_rng)
        self.via_points.append(via.translation.tolist())
        self.move([lift, via, above, place], ph.label())

    def _support_height(self, role: str) -> float:
        c = self.objects[role].center()
        top = 0.0
        for other_role, other in self.objects.items():
            if other_role == role:
                continue
            lo, hi = other.world_bounds()
            if lo[0] <= c[0] <= hi[0] and lo[1] <= c[1] <= hi[1]:
                top = max(top, float(hi[2]))
        return top

    def release(self, ph: Phase) -> None:
        if self.held is None or self.held[0] != ph.role:
            raise _Abort(ph.label(), "object not held")
        self.held = None
        obj = self.objects[ph.role]
        drop = self._support_height(ph.role) - float(obj.world_bounds()[0][2])
        settled = RigidTransform(obj.pose.rotation, obj.pose.translation + [0.0, 0.0, drop])
        self.objects[ph.role] = obj.with_state(pose=settled)
        self.set_gripper(0.0)
        tool = self.tool()
        self.move([RigidTransform(tool.rotation, tool.translation + [0, 0, self.cfg.approach_height])], ph.label())

    def push_joint(self, ph: Phase) -> None:
        obj = self.objects[ph.role]
        spec = obj.spec
        if spec is None or obj.joint is None:
            raise _Abort(ph.label(), "object has no articulation")
        axis_w = obj.pose.rotation @ spec.axis
        origin_w = obj.pose.apply(spec.origin)
        mobile = obj.item.asset.parts[spec.mobile_label]
        lo, hi = mobile.bounds()
        if spec.joint_type == "prismatic":
            contact_closed = spec.origin
        else:
            lever = (lo + hi) / 2 * obj.scale - spec.origin
            lever -= spec.axis * (lever @ spec.axis)
            contact_closed = spec.origin + 1.8 * lever + [0.0, 0.0, (hi[2] - lo[2]) / 2 * obj.scale]

        def contact(q: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
            """Contact point in the world and the direction it moves as the joint closes."""
            p = obj.with_state(joint=q).part_transform(spec.mobile_label).apply(contact_closed)
            if spec.joint_type == "prismatic":
                return p, -axis_w
            t = -np.cross(axis_w, p - origin_w)
            return p, t / np.linalg.norm(t)

        q_open = float(obj.joint)
        q_closed = float(spec.limit_lower)
        p0, t0 = contact(q_open)
        yaw = math.atan2(p0[1], p0[0])
        R = top_down(yaw)
        gap = self.cfg.push_gap
        start = p0 - t0 * gap
        pre = start - t0 * 0.03 + [0.0, 0.0, 0.03]
        self.move([RigidTransform(R, pre), RigidTransform(R, start)], ph.label())
        travel = float(np.linalg.norm(contact(q_closed)[0] - p0))
        n = max(1, math.ceil(travel / self.cfg.path_step))
        path = []
        for k in range(1, n + 1):
            q = q_open + (q_closed - q_open) * k / n
            p, t = contact(q)
            path.append(RigidTransform(R, p - t * gap))

        def follow():
            tip = self.tool().translation
            cur = self.objects[ph.role]
            if spec.joint_type == "prismatic":
                implied = q_open - float((tip - start) @ t0)
            else:
                a = start - origin_w
                b = tip - origin_w
                a -= axis_w * (a @ axis_w)
                b -= axis_w * (b @ axis_w)
                # rotation from a to b about the joint axis; the joint closes toward lower values
                implied = q_open + math.atan2(float(np.cross(a, b) @ axis_w), float(a @ b))
            implied = min(max(implied, spec.limit_lower), spec.limit_upper)
            if implied < cur.joint:
                self.objects[ph.role] = cur.with_state(joint=implied)

        self.hook = follow
        try:
            self.move(path, ph.label())
        finally:
            self.hook = None
        tool = self.tool()
        self.move([RigidTransform(tool.rotation, tool.translation + [0, 0, self.cfg.approach_height])], ph.label())

    def wipe_path(self, ph: Phase) -> None:
        if self.held is None:
            raise _Abort(ph.label(), "no wiping tool held")
        held_role, grip = self.held
        area = self.objects[ph.role]
        held = self.objects[held_role]
        lo, hi = area.local_bounds()
        area_yaw = _yaw_of(area.pose.rotation)
        base = area.pose.translation[:2]
        c, s = math.cos(area_yaw), math.sin(area_yaw)
        Rz = np.array([[c, -s], [s, c]])

        # square the held object up with the patch, taking the quarter turn that keeps the wrist facing it
        tool_yaw = _yaw_of(self.tool().rotation @ np.diag([-1.0, 1.0, -1.0]))
        rel = _yaw_of(held.pose.rotation) - tool_yaw
        phi = math.atan2(base[1], base[0])
        new_tool_yaw = _nearest_symmetric(area_yaw - rel, phi)
        quarter = round((new_tool_yaw + rel - area_yaw) / (math.pi / 2)) % 2
        R = top_down(new_tool_yaw)
        h_lo, h_hi = held.local_bounds()
        half = (h_hi - h_lo) / 2
        hx, hy = (half[1], half[0]) if quarter else (half[0], half[1])
        local_c = grip.apply((h_lo + h_hi) / 2)  # held object's center in the tool frame
        z = float(area.world_bounds()[1][2]) + half[2]

        # boustrophedon rows over the patch, in its own frame
        n_rows = max(1, math.ceil((hi[1] - lo[1]) / (1.6 * hy)))
        ys = np.linspace(lo[1] + hy, hi[1] - hy, n_rows) if n_rows > 1 else [(lo[1] + hi[1]) / 2]
        xs = (lo[0] + hx, hi[0] - hx) if hi[0] - lo[0] > 2 * hx else ((lo[0] + hi[0]) / 2,) * 2
        pts_local = []
        for k, y in enumerate(ys):
            pts_local.extend([(xs[0], y), (xs[1], y)] if k % 2 == 0 else [(xs[1], y), (xs[0], y)])
        world = [np.array([*(base + Rz @ np.array(p)), z]) for p in pts_local]

        cells = 10
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], 2 * cells + 1)[1::2], np.linspace(lo[1], hi[1], 2 * cells + 1)[1::2])
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        wiped = np.zeros(len(grid), dtype=bool)
        top = float(area.world_bounds()[1][2])

        def mark():
            h = self.objects[held_role]
            if h.world_bounds()[0][2] > top + 0.005:
                return  # lifted off the patch
            center = Rz.T @ (h.center()[:2] - base)
            d = _yaw_of(h.pose.rotation) - area_yaw
            cd, sd = math.cos(d), math.sin(d)
            local = (grid - center) @ np.array([[cd, -sd], [sd, cd]])
            wiped[np.all(np.abs(local) <= half[:2] + 1e-9, axis=1)] = True
            self.objects[ph.role] = self.objects[ph.role].with_state(coverage=float(wiped.mean()))

        self.objects[ph.role] = area.with_state(coverage=0.0)

        def pose_for(p):
            return RigidTransform(R, p - R @ local_c)

        first = pose_for(world[0])
        self.move([RigidTransform(R, first.translation + [0, 0, self.cfg.approach_height]), first], ph.label())
        dense = []
        for a, b in zip(world, world[1:]):
            n = max(1, math.ceil(float(np.linalg.norm(b - a)) / self.cfg.path_step))
            dense.extend(a + (b - a) * (k / n) for k in range(1, n + 1))
        self.hook = mark
        try:
            mark()
            self.move([pose_for(p) for p in dense], ph.label())
        finally:
            self.hook = None
        tool = self.tool()
        self.move([RigidTransform(R, tool.translation + [0, 0, self.cfg.lift_height])], ph.label())

    def run(self) -> str | None:
        try:
            for ph in self.task.script:
                getattr(self, ph.kind)(ph)
        except _Abort as exc:
            log.info("episode aborted in %s", exc)
            return exc.phase
        return None


def _place_objects(state: SceneState, task: TaskSpec, aug: AugmentationConfig, rng, attempts: int):
    placements: dict[str, Placement] = {}
    for role, asset in task.bindings.items():
        obj_cfg = aug.object
        if role in task.yaw_ranges:
            obj_cfg = replace(obj_cfg, yaw_range=task.yaw_ranges[role])
        for _ in range(attempts):
            p = sample_object_placement(obj_cfg, rng)
            pos = quantize(p.pose.translation)
            yaw = _yaw_of(p.pose.rotation)
            if role in task.facing:
                yaw += math.atan2(pos[1], pos[0]) + math.pi
            yaw = quantize_scalar(math.remainder(yaw, 2 * math.pi))
            scale = quantize_scalar(p.uniform_scale)
            try:
                state = attach_object(state, role, asset, ObjectPlacement(yaw_pose(yaw, pos), scale))
            except PlacementRejected:
                continue
            placements[role] = Placement(asset, tuple(pos.tolist()), yaw, scale)
            break
        else:
            return state, placements, f"place:{role}"
    return state, placements, None


def episode_cameras(state: SceneState, aug: AugmentationConfig, seed: int) -> list[CameraModel]:
    rng = sampler_stream(aug.base_seed, seed, "camera")
    # rounded as stored, so the recorded cameras reproduce the renders exactly
    return [CameraModel.from_dict(round_floats(perturb_camera(c, aug.camera, rng).to_dict())) for c in state.cameras]


def make_composer(state, robot, objects, aug, seed, base_dir=None) -> FrameComposer:
    return FrameComposer(state.background, robot, objects, aug.lighting, sampler_stream(aug.base_seed, seed, "lighting"), base_dir)


def run_task(
    state: SceneState,
    task: TaskSpec,
    robot: RobotModel,
    aug: AugmentationConfig,
    seed: int,
    cfg: DemoConfig = DemoConfig(),
    episode_id: int = 0,
    base_dir: str | os.PathLike | None = None,
) -> Episode:
    """Place the task's objects, execute its script and record every control step.

    All randomness comes from streams keyed by (aug.base_seed, seed, sampler
    name), so an episode is reproducible from its seed alone.
    """
    t0 = time.perf_counter()
    task.check_assets(state.library)
    # run with the configuration exactly as the episode stores it
    aug = from_plain(AugmentationConfig, round_floats(to_plain(aug)))
    placed, placements, failure = _place_objects(state, task, aug, sampler_stream(aug.base_seed, seed, "object"), cfg.placement_attempts)
    cameras = episode_cameras(state, aug, seed)
    composer = make_composer(placed, robot, placed.objects, aug, seed, base_dir) if cfg.render else None
    ex = _Executor(robot, task, placed, placed.objects, cfg, aug, sampler_stream(aug.base_seed, seed, "trajectory"), composer, cameras)
    if failure is None:
        failure = ex.run()
    final = ex.objects
    success = failure is None and len(final) == len(task.bindings) and evaluate_success(task, final)
    augmentation = {
        "config": config_snapshot(aug),
        "cameras": [c.to_dict() for c in cameras],
        "via_points": round_floats(ex.via_points),
    }
    return Episode(episode_id, seed, task, placements, augmentation, cameras, ex.frames, success, failure, time.perf_counter() - t0)


def config_snapshot(aug: AugmentationConfig) -> dict:
    return to_plain(aug)

"""Damped least-squares inverse kinematics and joint-space trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from twinforge.geometry import RigidTransform, so3_log
from twinforge.kinematics.model import RobotModel, link_matrix, link_pose


@dataclass(frozen=True)
class IkOptions:
    max_iters: int = 200
    damping: float = 0.05
    pos_tol: float = 1e-5
    rot_tol: float = 1e-4
    position_only: bool = False
    fd_step: float = 1e-6
    max_step: float = 0.2  # per-iteration cap on the joint step norm
    damping_up: float = 2.0
    damping_down: float = 0.7
    max_damping: float = 1e6
    restarts: int = 4
    stall_window: int = 10  # accepted steps without 0.1% progress count as a stall


@dataclass
class IkResult:
    q: NDArray[np.float64]
    converged: bool
    residual: NDArray[np.float64]  # (position error m, rotation error rad)
    iterations: int
    # residual norm after each accepted step of the run that produced q
    history: list[float] = field(default_factory=list)


def pose_residual(current: RigidTransform, target: RigidTransform) -> NDArray[np.float64]:
    """Translation difference and rotation vector of R_target R_current^T, both in the base frame."""
    return np.concatenate([target.translation - current.translation, so3_log(target.rotation @ current.rotation.T)])


def numeric_jacobian(robot: RobotModel, q: NDArray[np.float64], link: str, h: float = 1e-6) -> NDArray[np.float64]:
    """Central differences of the end pose; rows are (linear, angular) in the base frame."""
    jac = np.zeros((6, robot.dof))
    for k in range(robot.dof):
        dq = np.zeros(robot.dof)
        dq[k] = h
        plus = link_matrix(robot, q + dq, link)
        minus = link_matrix(robot, q - dq, link)
        jac[:3, k] = (plus[:3, 3] - minus[:3, 3]) / (2 * h)
        jac[3:, k] = so3_log(plus[:3, :3] @ minus[:3, :3].T) / (2 * h)
    return jac


def ik_solve(
    robot: RobotModel, target: RigidTransform, q0: ArrayLike, link: str, opts: IkOptions = IkOptions()
) -> IkResult:
    """Levenberg-style damped least squares with joint clamping.

    A step is accepted only if it lowers the residual norm; otherwise damping
    grows and the step is retried from the same configuration. If the solve
    stalls (for instance on a joint limit) it restarts up to ``opts.restarts``
    times from configurations drawn with a fixed seed, so results stay
    deterministic. Unreachable targets come back with ``converged=False`` and
    the best configuration seen.
    """
    q = robot.clamp(robot.check_config(q0, strict=False))
    rows = slice(0, 3) if opts.position_only else slice(0, 6)

    def residual(qv):
        m = link_matrix(robot, qv, link)
        return np.concatenate([target.translation - m[:3, 3], so3_log(target.rotation @ m[:3, :3].T)])[rows]

    def done(e):
        pos = np.linalg.norm(e[:3])
        rot = 0.0 if opts.position_only else np.linalg.norm(e[3:])
        return pos <= opts.pos_tol and rot <= opts.rot_tol

    def descend(q, budget):
        e = residual(q)
        err = float(np.linalg.norm(e))
        lam = opts.damping
        history: list[float] = []
        it = 0
        while it < budget and not done(e):
            it += 1
            jac = numeric_jacobian(robot, q, link, opts.fd_step)[rows]
            accepted = False
            while lam <= opts.max_damping:
                a = jac @ jac.T + lam * lam * np.eye(jac.shape[0])
                step = jac.T @ np.linalg.solve(a, e)
                norm = np.linalg.norm(step)
                if norm > opts.max_step:
                    step *= opts.max_step / norm
                q_new = robot.clamp(q + step)
                e_new = residual(q_new)
                err_new = float(np.linalg.norm(e_new))
                if err_new < err:
                    q, e, err = q_new, e_new, err_new
                    lam = max(lam * opts.damping_down, 1e-9)
                    history.append(err)
                    accepted = True
                    break
                lam *= opts.damping_up
            if not accepted:
                break
            if len(history) > opts.stall_window and history[-1] > (1 - 1e-3) * history[-1 - opts.stall_window]:
                break
        return q, e, err, it, history

    best = descend(q, opts.max_iters)
    used = best[3]
    rng = np.random.default_rng(0)
    lo, hi = robot.lower, robot.upper
    for _ in range(opts.restarts):
        if done(best[1]) or used >= opts.max_iters:
            break
        trial = descend(rng.uniform(lo, hi), opts.max_iters - used)
        used += trial[3]
        if trial[2] < best[2]:
            best = trial
    q, e, _, _, history = best
    pos = float(np.linalg.norm(e[:3]))
    rot = 0.0 if opts.position_only else float(np.linalg.norm(e[3:]))
    return IkResult(q, bool(done(e)), np.array([pos, rot]), used, history)


class PlanningError(RuntimeError):
    def __init__(self, waypoint: int, result: IkResult):
        super().__init__(f"IK did not converge for waypoint {waypoint} (residual {result.residual.tolist()})")
        self.waypoint = waypoint
        self.result = result


@dataclass
class JointTrajectory:
    timestamps: NDArray[np.float64]
    configs: NDArray[np.float64]  # (T, dof)
    knots: list[int]  # index of the frame reaching each waypoint
    link: str
    _poses: list[RigidTransform] | None = None

    def __len__(self) -> int:
        return len(self.timestamps)

    def end_poses(self, robot: RobotModel) -> list[RigidTransform]:
        if self._poses is None:
            self._poses = [link_pose(robot, q, self.link) for q in self.configs]
        return self._poses


def plan_linear(
    robot: RobotModel,
    q_start: ArrayLike,
    waypoints: list[RigidTransform],
    step_time: float,
    link: str,
    opts: IkOptions = IkOptions(),
    max_joint_speed: float = 1.0,
) -> JointTrajectory:
    """IK per waypoint seeded by the previous solution, linear joint interpolation between them.

    Each segment takes enough steps that no joint moves faster than
    ``max_joint_speed`` (rad/s or m/s) at ``step_time`` resolution.
    """
    if not waypoints:
        raise ValueError("no waypoints")
    q = robot.check_config(q_start)
    configs = [q]
    knots = []
    for k, wp in enumerate(waypoints):
        res = ik_solve(robot, wp, q, link, opts)
        if not res.converged:
            raise PlanningError(k, res)
        delta = res.q - q
        steps = max(1, math.ceil(float(np.max(np.abs(delta), initial=0.0)) / (max_joint_speed * step_time) - 1e-9))
        for s in range(1, steps + 1):
            configs.append(q + delta * (s / steps))
        configs[-1] = res.q
        knots.append(len(configs) - 1)
        q = res.q
    cfg = np.array(configs)
    return JointTrajectory(np.arange(len(cfg)) * step_time, cfg, knots, link)

"""Camera pose refinement by minimizing the photometric L1 loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from twinforge.camera import CameraModel
from twinforge.geometry import RigidTransform
from twinforge.render import RenderOptions, render_with_pose_gradient
from twinforge.render.imageio import box_downsample
from twinforge.scene import GaussianScene

log = logging.getLogger(__name__)


class AlignmentError(RuntimeError):
    def __init__(self, message: str, pose: RigidTransform | None = None):
        super().__init__(message)
        self.pose = pose


@dataclass(frozen=True)
class CamAlignParams:
    max_iterations: int = 60  # per pyramid level
    step_size: float = 0.05  # first trial step length in the tangent space
    pyramid_levels: int = 3
    loss_tolerance: float = 1e-7  # stop a level when an accepted step gains less than this
    armijo: float = 1e-4
    min_step: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1 or self.pyramid_levels < 1:
            raise ValueError("max_iterations and pyramid_levels must be >= 1")
        if not (self.step_size > 0 and self.loss_tolerance > 0):
            raise ValueError("step_size and loss_tolerance must be positive")


@dataclass
class AlignmentTrace:
    losses: list[float] = field(default_factory=list)  # loss at each accepted iterate
    levels: list[int] = field(default_factory=list)  # pyramid level of each entry, 0 = full resolution
    evaluations: int = 0


def _descend_level(scene, cam, ref, params, opts, trace, level):
    """BFGS on the right-multiplied tangent increment with Armijo backtracking."""

    def evaluate(c):
        loss, grad = render_with_pose_gradient(scene, c, ref, opts)
        trace.evaluations += 1
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise AlignmentError(f"non-finite loss at pyramid level {level}", c.world_to_camera)
        return loss, grad

    loss, grad = evaluate(cam)
    trace.losses.append(loss)
    trace.levels.append(level)
    hinv = np.eye(6)
    step = params.step_size
    for _ in range(params.max_iterations):
        direction = -hinv @ grad
        slope = float(grad @ direction)
        if slope >= 0:  # not a descent direction; fall back to the gradient
            hinv = np.eye(6)
            direction = -grad
            slope = -float(grad @ grad)
        if slope == 0:
            break
        norm = np.linalg.norm(direction)
        alpha = min(1.0, step / norm) if norm > 0 else 0.0
        accepted = False
        while alpha * norm > params.min_step:
            xi = alpha * direction
            trial = cam.with_pose(cam.world_to_camera @ RigidTransform.exp(xi))
            t_loss, t_grad = evaluate(trial)
            if t_loss <= loss + params.armijo * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if np.allclose(hinv, np.eye(6)):
                break
            hinv = np.eye(6)
            continue
        s, y = xi, t_grad - grad
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            v = np.eye(6) - rho * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        gain = loss - t_loss
        cam, loss, grad = trial, t_loss, t_grad
        step = max(2.0 * alpha * norm, params.min_step * 10)
        trace.losses.append(loss)
        trace.levels.append(level)
        if gain < params.loss_tolerance:
            break
    return cam, loss


def align_camera(
    scene: GaussianScene,
    real_image: NDArray[np.float64],
    init: CameraModel,
    params: CamAlignParams = CamAlignParams(),
    opts: RenderOptions | None = None,
) -> tuple[CameraModel, float, AlignmentTrace]:
    """Refine ``init.world_to_camera`` coarse to fine; intrinsics are never touched.

    Returns the refined camera, the final full-resolution loss and the trace of
    accepted losses. If the initial full-resolution loss is already below the
    tolerance the pose is returned unchanged.
    """
    opts = opts or RenderOptions()
    real_image = np.asarray(real_image, dtype=float)
    if real_image.shape != (init.height, init.width, 3):
        raise ValueError(f"image shape {real_image.shape} does not match camera ({init.height}, {init.width}, 3)")
    trace = AlignmentTrace()
    loss0, _ = render_with_pose_gradient(scene, init, real_image, opts)
    trace.evaluations += 1
    if not np.isfinite(loss0):
        raise AlignmentError("non-finite loss at the initial pose", init.world_to_camera)
    if loss0 < params.loss_tolerance:
        trace.losses.append(loss0)
        trace.levels.append(0)
        return init, loss0, trace

    cams = [init]
    images = [real_image]
    for _ in range(params.pyramid_levels - 1):
        if cams[-1].width < 8 or cams[-1].height < 8:
            break
        cams.append(cams[-1].downsample())
        images.append(box_downsample(images[-1]))
    pose = init.world_to_camera
    loss = loss0
    for level in range(len(cams) - 1, -1, -1):
        cam, loss = _descend_level(scene, cams[level].with_pose(pose), images[level], params, opts, trace, level)
        pose = cam.world_to_camera
        log.debug("level %d: loss %.6g", level, loss)
    return init.with_pose(pose), loss, trace

"""Perspective projection of 3D Gaussians (EWA local-affine approximation) and culling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from twinforge import sh as shlib
from twinforge.camera import CameraModel
from twinforge.scene import GaussianScene, GaussianSplat, covariance3d, covariances


@dataclass(frozen=True)
class RenderOptions:
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    eps_transmittance: float = 1e-4
    lowpass: float = 0.3
    near: float = 0.01
    far: float = 100.0
    cutoff_sigma: float = 3.0
    cull_margin: float = 1.0
    tile_size: int = 16
    threads: int = 1

    def __post_init__(self):
        if self.near <= 0 or self.far <= self.near:
            raise ValueError("need 0 < near < far")
        if self.tile_size < 1 or self.threads < 1:
            raise ValueError("tile_size and threads must be >= 1")
        if self.cutoff_sigma <= 1.0:
            raise ValueError("cutoff_sigma must exceed 1")


@dataclass(frozen=True)
class Projected2D:
    mean2d: NDArray[np.float64]
    cov2d: NDArray[np.float64]
    depth: float
    splat_index: int = -1


@dataclass
class Projection:
    """Vectorized projection of a subset of splats (rows align with ``indices``)."""

    indices: NDArray[np.int64]
    cam_points: NDArray[np.float64]
    depth: NDArray[np.float64]
    mean2d: NDArray[np.float64]
    jac: NDArray[np.float64]  # (N, 2, 3)
    cov_cam: NDArray[np.float64]  # (N, 3, 3)
    cov2d: NDArray[np.float64]  # (N, 2, 2), low-pass included
    conic: NDArray[np.float64] = field(init=False)
    radius: NDArray[np.float64] = field(init=False)

    def __post_init__(self):
        a, b, c = self.cov2d[:, 0, 0], self.cov2d[:, 0, 1], self.cov2d[:, 1, 1]
        det = a * c - b * b
        self.conic = np.stack([c / det, -b / det, a / det], axis=1)
        half_tr = 0.5 * (a + c)
        lam_max = half_tr + np.sqrt(np.maximum(half_tr**2 - det, 0.0))
        self.radius = np.sqrt(lam_max)


def projection_jacobian(cam_points: NDArray[np.float64], fx: float, fy: float) -> NDArray[np.float64]:
    x, y, z = cam_points.T
    j = np.zeros((len(cam_points), 2, 3))
    j[:, 0, 0] = fx / z
    j[:, 0, 2] = -fx * x / z**2
    j[:, 1, 1] = fy / z
    j[:, 1, 2] = -fy * y / z**2
    return j


def project_points(cam_points: NDArray[np.float64], camera: CameraModel) -> NDArray[np.float64]:
    z = cam_points[:, 2]
    return np.stack([camera.fx * cam_points[:, 0] / z + camera.cx, camera.fy * cam_points[:, 1] / z + camera.cy], axis=1)


def project_scene(scene: GaussianScene, camera: CameraModel, opts: RenderOptions, indices=None) -> Projection:
    """Project splats (all, or ``indices``) assumed to lie beyond the near plane."""
    idx = np.arange(len(scene)) if indices is None else np.asarray(indices, dtype=np.int64)
    r = camera.world_to_camera.rotation
    t = camera.world_to_camera.translation
    cam = scene.positions[idx] @ r.T + t
    jac = projection_jacobian(cam, camera.fx, camera.fy)
    cov_world = covariances(scene.subset(idx)) if len(idx) else np.zeros((0, 3, 3))
    cov_cam = r @ cov_world @ r.T
    cov2d = jac @ cov_cam @ jac.transpose(0, 2, 1)
    cov2d = 0.5 * (cov2d + np.swapaxes(cov2d, 1, 2)) + opts.lowpass * np.eye(2)
    return Projection(idx, cam, cam[:, 2].copy(), project_points(cam, camera), jac, cov_cam, cov2d)


def project_gaussian(splat: GaussianSplat, camera: CameraModel, opts: RenderOptions | None = None) -> Projected2D | None:
    """Project one splat; returns None when it lies on or behind the near plane (cull it)."""
    opts = opts or RenderOptions()
    r = camera.world_to_camera.rotation
    cam = r @ splat.position + camera.world_to_camera.translation
    if cam[2] <= opts.near:
        return None
    jac = projection_jacobian(cam[None], camera.fx, camera.fy)[0]
    cov2d = jac @ r @ covariance3d(splat) @ r.T @ jac.T
    cov2d = 0.5 * (cov2d + cov2d.T) + opts.lowpass * np.eye(2)
    mean = project_points(cam[None], camera)[0]
    return Projected2D(mean, cov2d, float(cam[2]))


def cull_frustum(scene: GaussianScene, camera: CameraModel, margin: float = 1.0, opts: RenderOptions | None = None) -> NDArray[np.int64]:
    """Indices of splats in the depth range whose mean lands inside the image
    rectangle dilated by ``margin`` times their cutoff extent."""
    opts = opts or RenderOptions()
    if len(scene) == 0:
        return np.zeros(0, dtype=np.int64)
    r = camera.world_to_camera.rotation
    z = scene.positions @ r[2] + camera.world_to_camera.translation[2]
    in_depth = np.flatnonzero((z > opts.near) & (z < opts.far))
    if len(in_depth) == 0:
        return in_depth
    proj = project_scene(scene, camera, opts, in_depth)
    ext = margin * opts.cutoff_sigma * proj.radius
    u, v = proj.mean2d.T
    inside = (u + ext >= 0) & (u - ext <= camera.width - 1) & (v + ext >= 0) & (v - ext <= camera.height - 1)
    return in_depth[inside]


def splat_colors(scene: GaussianScene, camera: CameraModel, indices) -> NDArray[np.float64]:
    """RGB in [0, 1] evaluated from SH at the camera-to-splat direction."""
    idx = np.asarray(indices, dtype=np.int64)
    if len(idx) == 0:
        return np.zeros((0, 3))
    d = scene.positions[idx] - camera.center
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    return np.clip(shlib.eval_color(scene.sh[idx], d), 0.0, 1.0)

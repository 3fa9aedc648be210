"""Pinhole camera with a world-to-camera extrinsic."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from twinforge.geometry import RigidTransform


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus extrinsics.

    Pixel centers sit at integer coordinates: column ``j`` of row ``i`` is the
    image point ``(u, v) = (j, i)``. Camera looks down +z, x right, y down.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: RigidTransform

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def look_at(
        cls,
        eye,
        target,
        up=(0.0, 0.0, 1.0),
        *,
        width: int,
        height: int,
        fov_x: float = np.deg2rad(60.0),
    ) -> CameraModel:
        eye = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=float))
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, [1.0, 0.0, 0.0])
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        r = np.stack([right, down, forward])  # rows: camera axes in world
        f = (width / 2.0) / np.tan(fov_x / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height, RigidTransform(r, -r @ eye))

    @property
    def center(self) -> NDArray[np.float64]:
        """Camera origin in world coordinates."""
        r, t = self.world_to_camera.rotation, self.world_to_camera.translation
        return -r.T @ t

    @property
    def intrinsics(self) -> NDArray[np.float64]:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def with_pose(self, world_to_camera: RigidTransform) -> CameraModel:
        return replace(self, world_to_camera=world_to_camera)

    def downsample(self) -> CameraModel:
        """Camera matching a 2x2 box-filtered image (odd trailing row/column dropped)."""
        w, h = self.width // 2, self.height // 2
        cx = min(max((self.cx - 0.5) / 2.0, 0.0), w - 1e-6)
        cy = min(max((self.cy - 0.5) / 2.0, 0.0), h - 1e-6)
        return replace(self, fx=self.fx / 2.0, fy=self.fy / 2.0, cx=cx, cy=cy, width=w, height=h)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "world_to_camera": self.world_to_camera.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CameraModel:
        return cls(
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            int(d["width"]),
            int(d["height"]),
            RigidTransform.from_matrix(d["world_to_camera"]),
        )

"""Flat-shaded orthographic snapshots of a mesh for the annotation prompts."""

from __future__ import annotations

import io

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from twinforge.assets.mesh import TriangleMesh

# name -> (viewing direction, image up); the camera sits on the named side looking back at the object
VIEW_DIRECTIONS: dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    "+x": ((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    "-x": ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    "+y": ((0.0, -1.0, 0.0), (0.0, 0.0, 1.0)),
    "+z": ((0.0, 0.0, -1.0), (0.0, 1.0, 0.0)),
}
MARGIN = 0.1  # fraction of the largest bounding-box extent left free on each side
BACKGROUND = 255
BASE_COLOR = np.array([150.0, 170.0, 200.0])


def _view_frame(direction, up) -> NDArray[np.float64]:
    f = np.asarray(direction, dtype=float)
    u = np.asarray(up, dtype=float)
    r = np.cross(f, u)
    return np.stack([r, u, f])  # rows: image right, image up, depth


def _raster(v2: NDArray[np.float64], depth: NDArray[np.float64], faces, shade, res: int) -> NDArray[np.uint8]:
    img = np.full((res, res, 3), BACKGROUND, dtype=np.uint8)
    zbuf = np.full((res, res), np.inf)
    for f, s in zip(faces, shade):
        a, b, c = v2[f]
        lo = np.maximum(np.floor(np.minimum(np.minimum(a, b), c)).astype(int), 0)
        hi = np.minimum(np.ceil(np.maximum(np.maximum(a, b), c)).astype(int), res - 1)
        if np.any(hi < lo):
            continue
        xs, ys = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
        px = xs + 0.5
        py = ys + 0.5
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(det) < 1e-12:
            continue  # edge-on triangle
        w1 = ((px - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (py - a[1])) / det
        w2 = ((b[0] - a[0]) * (py - a[1]) - (px - a[0]) * (b[1] - a[1])) / det
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        z = w0 * depth[f[0]] + w1 * depth[f[1]] + w2 * depth[f[2]]
        yy, xx, zz = ys[inside], xs[inside], z[inside]
        closer = zz < zbuf[yy, xx]
        yy, xx = yy[closer], xx[closer]
        zbuf[yy, xx] = zz[closer]
        img[yy, xx] = s
    return img


def render_orthographic_views(mesh: TriangleMesh, resolution: int = 256) -> dict[str, NDArray[np.uint8]]:
    """Square RGB views from +x, -x, +y and +z sharing one pixel scale.

    Every view is centered on the bounding box and scaled so its largest
    extent spans the image minus a margin on each side; aspect ratios are
    preserved. Faces are shaded by how squarely they face the viewer.
    """
    if len(mesh.faces) == 0:
        raise ValueError("cannot render an empty mesh")
    if resolution < 8:
        raise ValueError("resolution must be at least 8 pixels")
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2
    extent = float(np.max(hi - lo))
    if extent <= 0:
        raise ValueError("mesh has zero extent")
    px_per_m = resolution / (extent * (1 + 2 * MARGIN))
    v = mesh.vertices - center
    tri = v[mesh.faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    views = {}
    for name, (direction, up) in VIEW_DIRECTIONS.items():
        frame = _view_frame(direction, up)
        local = v @ frame.T
        xy = np.column_stack([local[:, 0] * px_per_m + resolution / 2, resolution / 2 - local[:, 1] * px_per_m])
        lam = np.abs(normals @ frame[2])
        shade = np.clip(np.round(BASE_COLOR * (0.35 + 0.65 * lam)[:, None]), 0, 255).astype(np.uint8)
        views[name] = _raster(xy, local[:, 2], mesh.faces, shade, resolution)
    return views


def encode_png(image: NDArray[np.uint8]) -> bytes:
    """PNG bytes with no timestamps or metadata, so equal images give equal bytes."""
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image)).save(buf, format="PNG", optimize=False)
    return buf.getvalue()

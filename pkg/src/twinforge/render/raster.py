"""Deterministic CPU tile rasterizer for color and feature splatting.

Per pixel, depth-sorted contributors are alpha-blended front to back:
``C = sum_i c_i a_i prod_{j<i} (1 - a_j) + background * T_end``. Features use
the same weights. Each tile is processed independently and writes only its own
pixels, so the result does not depend on how tiles are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from twinforge.camera import CameraModel
from twinforge.render.projection import Projection, RenderOptions, cull_frustum, project_scene, splat_colors
from twinforge.scene import GaussianScene


@dataclass
class RenderOutput:
    color: NDArray[np.float64]  # (H, W, 3)
    alpha: NDArray[np.float64]  # (H, W)
    counts: NDArray[np.int64]  # (H, W) contributors per pixel
    feature: NDArray[np.float64] | None = None  # (H, W, d)
    # sparse blending weights: flat pixel index, splat index, weight
    weights: tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.float64]] | None = None


def alpha_falloff(q: NDArray[np.float64], cutoff_sigma: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gaussian falloff exp(-q/2) with a C1 taper to zero at q = cutoff^2.

    The taper spans the last unit of squared Mahalanobis distance, so the
    falloff is exactly exp(-q/2) inside (cutoff^2 - 1). Returns value and
    derivative with respect to q.
    """
    q_cut = cutoff_sigma * cutoff_sigma
    g = np.exp(-0.5 * q)
    t = np.clip(q_cut - q, 0.0, 1.0)
    taper = t * t * (3.0 - 2.0 * t)
    dtaper = np.where((t > 0.0) & (t < 1.0), -6.0 * t * (1.0 - t), 0.0)
    return g * taper, g * (dtaper - 0.5 * taper)


@dataclass
class _Prepared:
    proj: Projection  # rows sorted front to back
    opacity: NDArray[np.float64]
    colors: NDArray[np.float64]
    tiles: list[tuple[int, int, int, int, NDArray[np.int64]]]  # y0, y1, x0, x1, rows into proj


def _prepare(scene: GaussianScene, camera: CameraModel, opts: RenderOptions) -> _Prepared:
    idx = cull_frustum(scene, camera, opts.cull_margin, opts)
    r = camera.world_to_camera.rotation
    depth = scene.positions[idx] @ r[2] + camera.world_to_camera.translation[2]
    # front-to-back by camera depth, ties broken by splat index
    proj = project_scene(scene, camera, opts, idx[np.lexsort((idx, depth))])
    opacity = scene.opacities[proj.indices]
    colors = splat_colors(scene, camera, proj.indices)

    ts = opts.tile_size
    ext = opts.cutoff_sigma * proj.radius
    u, v = proj.mean2d.T
    j0 = np.clip(np.ceil(u - ext), 0, camera.width - 1).astype(int)
    j1 = np.clip(np.floor(u + ext), 0, camera.width - 1).astype(int)
    i0 = np.clip(np.ceil(v - ext), 0, camera.height - 1).astype(int)
    i1 = np.clip(np.floor(v + ext), 0, camera.height - 1).astype(int)
    nonempty = (np.ceil(u - ext) <= np.floor(u + ext)) & (np.ceil(v - ext) <= np.floor(v + ext))
    nonempty &= (u + ext >= 0) & (u - ext <= camera.width - 1) & (v + ext >= 0) & (v - ext <= camera.height - 1)
    tx0, tx1, ty0, ty1 = j0 // ts, j1 // ts, i0 // ts, i1 // ts
    tiles = []
    for ty in range((camera.height + ts - 1) // ts):
        row_hit = nonempty & (ty0 <= ty) & (ty1 >= ty)
        for tx in range((camera.width + ts - 1) // ts):
            rows = np.flatnonzero(row_hit & (tx0 <= tx) & (tx1 >= tx))
            tiles.append((ty * ts, min((ty + 1) * ts, camera.height), tx * ts, min((tx + 1) * ts, camera.width), rows))
    return _Prepared(proj, opacity, colors, tiles)


@dataclass
class _TileState:
    dx: NDArray[np.float64]
    dy: NDArray[np.float64]
    q: NDArray[np.float64]
    alpha: NDArray[np.float64]  # after cutoff and early termination
    included: NDArray[np.bool_]
    t_excl: NDArray[np.float64]
    t_end: NDArray[np.float64]
    weights: NDArray[np.float64]


def _tile_forward(prep: _Prepared, rows, y0, y1, x0, x1, opts: RenderOptions) -> _TileState:
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px = xs.ravel().astype(float)
    py = ys.ravel().astype(float)
    u = prep.proj.mean2d[rows, 0]
    v = prep.proj.mean2d[rows, 1]
    con = prep.proj.conic[rows]
    dx = px[None, :] - u[:, None]
    dy = py[None, :] - v[:, None]
    q = con[:, 0, None] * dx * dx + 2.0 * con[:, 1, None] * dx * dy + con[:, 2, None] * dy * dy
    h, _ = alpha_falloff(q, opts.cutoff_sigma)
    alpha = prep.opacity[rows, None] * h
    t_incl = np.cumprod(1.0 - alpha, axis=0)
    # a contributor is kept while transmittance after it stays >= eps; t_incl is
    # non-increasing so the kept set is a prefix
    included = t_incl >= opts.eps_transmittance
    alpha = np.where(included, alpha, 0.0)
    t_incl = np.cumprod(1.0 - alpha, axis=0)
    n_pix = px.size
    t_excl = np.vstack([np.ones((1, n_pix)), t_incl[:-1]]) if len(rows) else np.ones((0, n_pix))
    t_end = t_incl[-1] if len(rows) else np.ones(n_pix)
    return _TileState(dx, dy, q, alpha, included, t_excl, t_end, alpha * t_excl)


def rasterize(
    scene: GaussianScene,
    camera: CameraModel,
    opts: RenderOptions | None = None,
    *,
    features: bool = False,
    return_weights: bool = False,
) -> RenderOutput:
    opts = opts or RenderOptions()
    if features and scene.feature_dim == 0:
        raise ValueError("feature rendering requested on a scene without features")
    h, w = camera.height, camera.width
    bg = np.asarray(opts.background, dtype=float)
    prep = _prepare(scene, camera, opts)
    d = scene.feature_dim
    color = np.empty((h, w, 3))
    alpha = np.empty((h, w))
    counts = np.empty((h, w), dtype=np.int64)
    feat = np.empty((h, w, d)) if features else None
    feat_src = scene.features[prep.proj.indices] if features else None
    sparse: list = [None] * len(prep.tiles)

    def run(k):
        y0, y1, x0, x1, rows = prep.tiles[k]
        st = _tile_forward(prep, rows, y0, y1, x0, x1, opts)
        wts = st.weights
        c = (wts[:, :, None] * prep.colors[rows][:, None, :]).sum(axis=0) + st.t_end[:, None] * bg
        color[y0:y1, x0:x1] = c.reshape(y1 - y0, x1 - x0, 3)
        alpha[y0:y1, x0:x1] = (1.0 - st.t_end).reshape(y1 - y0, x1 - x0)
        counts[y0:y1, x0:x1] = (st.alpha > 0).sum(axis=0).reshape(y1 - y0, x1 - x0)
        if features:
            f = (wts[:, :, None] * feat_src[rows][:, None, :]).sum(axis=0)
            feat[y0:y1, x0:x1] = f.reshape(y1 - y0, x1 - x0, d)
        if return_weights:
            kk, pp = np.nonzero(wts > 0)
            ys, xs = np.divmod(pp, x1 - x0)
            flat = (ys + y0) * w + (xs + x0)
            sparse[k] = (flat, prep.proj.indices[rows[kk]], wts[kk, pp])

    _run_tiles(run, len(prep.tiles), opts.threads)
    out = RenderOutput(color, alpha, counts, feat)
    if return_weights:
        parts = [s for s in sparse if s is not None]
        if parts:
            out.weights = tuple(np.concatenate([p[i] for p in parts]) for i in range(3))
        else:
            out.weights = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
    return out


def _run_tiles(fn, n: int, threads: int) -> None:
    if threads <= 1 or n <= 1:
        for k in range(n):
            fn(k)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, range(n)))

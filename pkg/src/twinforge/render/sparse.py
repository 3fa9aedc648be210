"""Forward-only color rendering that visits each splat's pixel footprint instead of whole tiles.

Blending semantics match :func:`twinforge.render.rasterize`: contributors are
composited front to back per pixel and a pixel stops accepting contributors at
the first one that would push its transmittance below ``eps_transmittance``.
Scenes where each splat covers a small part of its tiles render several times
faster this way. No gradients or blending weights are produced.
"""

from __future__ import annotations

import numpy as np

from twinforge.camera import CameraModel
from twinforge.render.projection import RenderOptions
from twinforge.render.raster import RenderOutput, _prepare, alpha_falloff
from twinforge.scene import GaussianScene


def rasterize_sparse(scene: GaussianScene, camera: CameraModel, opts: RenderOptions | None = None) -> RenderOutput:
    opts = opts or RenderOptions()
    h, w = camera.height, camera.width
    prep = _prepare(scene, camera, opts)
    proj = prep.proj
    T = np.ones(h * w)
    color = np.zeros((h * w, 3))
    counts = np.zeros(h * w, dtype=np.int64)

    ext = opts.cutoff_sigma * proj.radius
    u, v = proj.mean2d.T if len(proj.indices) else (np.zeros(0), np.zeros(0))
    j0 = np.clip(np.ceil(u - ext), 0, w - 1).astype(np.int64)
    j1 = np.clip(np.floor(u + ext), 0, w - 1).astype(np.int64)
    i0 = np.clip(np.ceil(v - ext), 0, h - 1).astype(np.int64)
    i1 = np.clip(np.floor(v + ext), 0, h - 1).astype(np.int64)
    nonempty = (np.ceil(u - ext) <= np.floor(u + ext)) & (np.ceil(v - ext) <= np.floor(v + ext))
    nonempty &= (u + ext >= 0) & (u - ext <= w - 1) & (v + ext >= 0) & (v - ext <= h - 1)
    bw = np.where(nonempty, j1 - j0 + 1, 0)
    n = bw * np.where(nonempty, i1 - i0 + 1, 0)

    # (splat, pixel) pairs over every footprint box, splats in front-to-back order
    splat = np.repeat(np.arange(len(n)), n)
    off = np.arange(splat.size) - np.repeat(np.cumsum(n) - n, n)
    py, px = np.divmod(off, np.maximum(bw, 1)[splat])
    py += i0[splat]
    px += j0[splat]
    con = proj.conic[splat]
    dx = px - u[splat]
    dy = py - v[splat]
    q = con[:, 0] * dx * dx + 2.0 * con[:, 1] * dx * dy + con[:, 2] * dy * dy
    alpha = prep.opacity[splat] * alpha_falloff(q, opts.cutoff_sigma)[0]
    keep = alpha > 0
    splat, alpha, pix = splat[keep], alpha[keep], (py * w + px)[keep]

    # depth rank of each pair within its pixel; composite one rank at a time
    order = np.argsort(pix, kind="stable")
    pix_sorted = pix[order]
    starts = np.flatnonzero(np.r_[True, pix_sorted[1:] != pix_sorted[:-1]]) if pix.size else np.zeros(0, dtype=np.int64)
    lengths = np.diff(np.r_[starts, pix.size])
    rank = np.empty(pix.size, dtype=np.int64)
    rank[order] = np.arange(pix.size) - np.repeat(starts, lengths)
    by_rank = np.argsort(rank, kind="stable")
    bounds = np.searchsorted(rank[by_rank], np.arange(int(lengths.max(initial=0)) + 1))
    alive = np.ones(h * w, dtype=bool)
    for r in range(len(bounds) - 1):
        sel = by_rank[bounds[r] : bounds[r + 1]]
        p = pix[sel]
        a = alpha[sel]
        t_new = T[p] * (1.0 - a)
        ok = alive[p] & (t_new >= opts.eps_transmittance)
        alive[p] = ok
        p, a = p[ok], a[ok]
        color[p] += (a * T[p])[:, None] * prep.colors[splat[sel][ok]]
        counts[p] += 1
        T[p] = t_new[ok]

    bg = np.asarray(opts.background, dtype=float)
    color += T[:, None] * bg
    return RenderOutput(color.reshape(h, w, 3), (1.0 - T).reshape(h, w), counts.reshape(h, w))

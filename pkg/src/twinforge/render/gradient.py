"""Photometric L1 loss and its analytic gradient with respect to camera pose.

The pose is perturbed on the right, ``world_to_camera * exp(xi)`` with
``xi = (v, omega)``, so the gradient lives in the tangent space at the current
pose. Depth order, cutoff membership and early termination are held fixed
(they are piecewise constant in the pose).
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from twinforge import sh as shlib
from twinforge.camera import CameraModel
from twinforge.geometry import skew
from twinforge.render.projection import RenderOptions
from twinforge.render.raster import _prepare, _run_tiles, _tile_forward, alpha_falloff
from twinforge.scene import GaussianScene

_GENERATORS = np.stack([skew(e) for e in np.eye(3)])


def l1_loss(image: NDArray[np.float64], reference: NDArray[np.float64]) -> float:
    return float(np.mean(np.abs(image - reference)))


def render_with_pose_gradient(
    scene: GaussianScene,
    camera: CameraModel,
    reference: NDArray[np.float64],
    opts: RenderOptions | None = None,
) -> tuple[float, NDArray[np.float64]]:
    """Mean absolute error between the render and ``reference`` plus d(loss)/d(xi)."""
    opts = opts or RenderOptions()
    h, w = camera.height, camera.width
    reference = np.asarray(reference, dtype=float)
    if reference.shape != (h, w, 3):
        raise ValueError(f"reference shape {reference.shape} does not match camera ({h}, {w}, 3)")
    bg = np.asarray(opts.background, dtype=float)
    prep = _prepare(scene, camera, opts)
    n = len(prep.proj.indices)
    image = np.empty((h, w, 3))
    scale = 1.0 / (3.0 * h * w)
    tile_grads: list = [None] * len(prep.tiles)

    def run(k):
        y0, y1, x0, x1, rows = prep.tiles[k]
        st = _tile_forward(prep, rows, y0, y1, x0, x1, opts)
        cols = prep.colors[rows]
        c = (st.weights[:, :, None] * cols[:, None, :]).sum(axis=0) + st.t_end[:, None] * bg
        image[y0:y1, x0:x1] = c.reshape(y1 - y0, x1 - x0, 3)
        if len(rows) == 0:
            return
        g = np.sign(c - reference[y0:y1, x0:x1].reshape(-1, 3)) * scale  # dL/dC, (P, 3)
        g_col = st.weights @ g  # (K, 3)
        cg = cols @ g.T  # (K, P)
        contrib = st.weights * cg
        # everything behind contributor k, including the background term
        behind = np.cumsum(contrib[::-1], axis=0)[::-1]
        behind = np.vstack([behind[1:], np.zeros((1, behind.shape[1]))]) + (g @ bg) * st.t_end
        d_alpha = cg * st.t_excl - behind / (1.0 - st.alpha)
        d_alpha = np.where(st.included, d_alpha, 0.0)
        _, dh = alpha_falloff(st.q, opts.cutoff_sigma)
        dq = d_alpha * prep.opacity[rows, None] * dh
        con = prep.proj.conic[rows]
        a, b, cc = con[:, 0, None], con[:, 1, None], con[:, 2, None]
        g_u = (dq * -2.0 * (a * st.dx + b * st.dy)).sum(axis=1)
        g_v = (dq * -2.0 * (b * st.dx + cc * st.dy)).sum(axis=1)
        g_a = (dq * st.dx * st.dx).sum(axis=1)
        g_b = (dq * 2.0 * st.dx * st.dy).sum(axis=1)
        g_c = (dq * st.dy * st.dy).sum(axis=1)
        tile_grads[k] = (rows, np.stack([g_u, g_v, g_a, g_b, g_c], axis=1), g_col)

    _run_tiles(run, len(prep.tiles), opts.threads)
    loss = l1_loss(image, reference)
    if n == 0:
        return loss, np.zeros(6)

    g2d = np.zeros((n, 5))
    g_col = np.zeros((n, 3))
    for item in tile_grads:  # fixed tile order keeps the sum deterministic
        if item is not None:
            rows, gg, gc = item
            g2d[rows] += gg
            g_col[rows] += gc
    return loss, _chain_to_pose(scene, camera, prep, g2d, g_col)


def _chain_to_pose(scene, camera, prep, g2d, g_col) -> NDArray[np.float64]:
    proj = prep.proj
    n = len(proj.indices)
    r = camera.world_to_camera.rotation
    mu = scene.positions[proj.indices]
    x, y, z = proj.cam_points.T

    # d(camera point)/d(xi): R for v, -R [mu]x for omega
    dx_dxi = np.zeros((n, 3, 6))
    dx_dxi[:, :, :3] = r
    dx_dxi[:, :, 3:] = -np.einsum("ij,njk->nik", r, np.stack([skew(m) for m in mu]))

    jac = proj.jac
    grad = np.einsum("na,nab,nbk->k", g2d[:, :2], jac, dx_dxi)

    # dJ/dx_m for m = x, y, z
    fx, fy = camera.fx, camera.fy
    dj = np.zeros((n, 3, 2, 3))
    dj[:, 0, 0, 2] = -fx / z**2
    dj[:, 1, 1, 2] = -fy / z**2
    dj[:, 2, 0, 0] = -fx / z**2
    dj[:, 2, 0, 2] = 2 * fx * x / z**3
    dj[:, 2, 1, 1] = -fy / z**2
    dj[:, 2, 1, 2] = 2 * fy * y / z**3
    dj_dxi = np.einsum("nmab,nmk->nkab", dj, dx_dxi)  # (n, 6, 2, 3)

    cov_cam = proj.cov_cam
    cov_world = np.einsum("ji,njk,kl->nil", r, cov_cam, r)
    dcov_cam = np.zeros((n, 6, 3, 3))
    for k in range(3):
        gk = _GENERATORS[k]
        inner = gk @ cov_world - cov_world @ gk
        dcov_cam[:, 3 + k] = np.einsum("ij,njk,lk->nil", r, inner, r)

    jc = np.einsum("nab,nbc->nac", jac, cov_cam)  # J Sigma_c
    d_cov2d = (
        np.einsum("nkab,nbc,ndc->nkad", dj_dxi, cov_cam, jac)
        + np.einsum("nab,nkdb->nkad", jc, dj_dxi)
        + np.einsum("nab,nkbc,ndc->nkad", jac, dcov_cam, jac)
    )

    # conic gradient -> covariance gradient: dL/dSigma' = -Q G Q
    con = proj.conic
    q = np.stack([np.stack([con[:, 0], con[:, 1]], 1), np.stack([con[:, 1], con[:, 2]], 1)], 1)
    gm = np.stack([np.stack([g2d[:, 2], 0.5 * g2d[:, 3]], 1), np.stack([0.5 * g2d[:, 3], g2d[:, 4]], 1)], 1)
    h_cov = -np.einsum("nab,nbc,ncd->nad", q, gm, q)
    grad += np.einsum("nab,nkab->k", h_cov, d_cov2d)

    # view-dependent color: direction mu - center, center moves as exp(-xi) c
    sh = scene.sh[proj.indices]
    if sh.shape[1] > 1:
        center = camera.center
        dvec = mu - center
        norm = np.linalg.norm(dvec, axis=1)
        unit = dvec / norm[:, None]
        bgrad = shlib.basis_grad(unit, shlib.degree_from_coeffs(sh.shape[1]))  # (n, K, 3)
        raw = shlib.eval_color(sh, unit)
        active = (raw > 0.0) & (raw < 1.0)
        dcol_dunit = np.einsum("nkc,nkm->ncm", sh, bgrad) * active[:, :, None]
        proj_unit = (np.eye(3)[None] - unit[:, :, None] * unit[:, None, :]) / norm[:, None, None]
        ddir_dxi = np.zeros((n, 3, 6))
        ddir_dxi[:, :, :3] = np.eye(3)
        ddir_dxi[:, :, 3:] = -skew(center)
        grad += np.einsum("nc,ncm,nmp,npk->k", g_col, dcol_dunit, proj_unit, ddir_dxi)
    return grad

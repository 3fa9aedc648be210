"""Real spherical-harmonic color basis (degrees 0-3) and its directional gradient.

Basis functions are stored as monomial tables so values and gradients come from
the same coefficients.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

SH_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

# each entry: {(px, py, pz): coefficient}
_BASIS: list[dict[tuple[int, int, int], float]] = [
    {(0, 0, 0): SH_C0},
    {(0, 1, 0): -_C1},
    {(0, 0, 1): _C1},
    {(1, 0, 0): -_C1},
    {(1, 1, 0): _C2[0]},
    {(0, 1, 1): _C2[1]},
    {(0, 0, 2): 2 * _C2[2], (2, 0, 0): -_C2[2], (0, 2, 0): -_C2[2]},
    {(1, 0, 1): _C2[3]},
    {(2, 0, 0): _C2[4], (0, 2, 0): -_C2[4]},
    {(2, 1, 0): 3 * _C3[0], (0, 3, 0): -_C3[0]},
    {(1, 1, 1): _C3[1]},
    {(0, 1, 2): 4 * _C3[2], (2, 1, 0): -_C3[2], (0, 3, 0): -_C3[2]},
    {(0, 0, 3): 2 * _C3[3], (2, 0, 1): -3 * _C3[3], (0, 2, 1): -3 * _C3[3]},
    {(1, 0, 2): 4 * _C3[4], (3, 0, 0): -_C3[4], (1, 2, 0): -_C3[4]},
    {(2, 0, 1): _C3[5], (0, 2, 1): -_C3[5]},
    {(3, 0, 0): _C3[6], (1, 2, 0): -3 * _C3[6]},
]


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def degree_from_coeffs(k: int) -> int:
    d = int(round(np.sqrt(k))) - 1
    if (d + 1) ** 2 != k or not 0 <= d <= 3:
        raise ValueError(f"{k} coefficients do not correspond to an SH degree in 0..3")
    return d


def _powers(dirs: NDArray[np.float64]) -> NDArray[np.float64]:
    # pw[n, axis, p] = dirs[n, axis] ** p for p in 0..3
    pw = np.ones(dirs.shape + (4,))
    for p in range(1, 4):
        pw[..., p] = pw[..., p - 1] * dirs
    return pw


def basis(dirs: NDArray[np.float64], degree: int) -> NDArray[np.float64]:
    """(N, K) basis values at unit directions (N, 3)."""
    pw = _powers(dirs)
    out = np.zeros((len(dirs), num_coeffs(degree)))
    for k in range(out.shape[1]):
        for (a, b, c), coef in _BASIS[k].items():
            out[:, k] += coef * pw[:, 0, a] * pw[:, 1, b] * pw[:, 2, c]
    return out


def basis_grad(dirs: NDArray[np.float64], degree: int) -> NDArray[np.float64]:
    """(N, K, 3) partial derivatives of each basis polynomial w.r.t. x, y, z."""
    pw = _powers(dirs)
    out = np.zeros((len(dirs), num_coeffs(degree), 3))
    for k in range(out.shape[1]):
        for (a, b, c), coef in _BASIS[k].items():
            if a:
                out[:, k, 0] += coef * a * pw[:, 0, a - 1] * pw[:, 1, b] * pw[:, 2, c]
            if b:
                out[:, k, 1] += coef * b * pw[:, 0, a] * pw[:, 1, b - 1] * pw[:, 2, c]
            if c:
                out[:, k, 2] += coef * c * pw[:, 0, a] * pw[:, 1, b] * pw[:, 2, c - 1]
    return out


def eval_color(sh: NDArray[np.float64], dirs: NDArray[np.float64]) -> NDArray[np.float64]:
    """Unclamped RGB: SH(dir) + 0.5 for coefficients (N, K, 3)."""
    b = basis(dirs, degree_from_coeffs(sh.shape[1]))
    return np.einsum("nk,nkc->nc", b, sh) + 0.5


def rgb_to_dc(rgb) -> NDArray[np.float64]:
    return (np.asarray(rgb, dtype=float) - 0.5) / SH_C0


def dc_to_rgb(dc) -> NDArray[np.float64]:
    return np.asarray(dc, dtype=float) * SH_C0 + 0.5


def rotate_degree1(sh: NDArray[np.float64], r: NDArray[np.float64]) -> NDArray[np.float64]:
    """Rotate degree-1 coefficients (N, 3 coeffs, 3 channels) by rotation matrix r.

    The degree-1 band is C1 * g . d with g = (-a3, -a1, a2); rotating the
    function by r maps g -> r g.
    """
    g = np.stack([-sh[:, 2, :], -sh[:, 0, :], sh[:, 1, :]], axis=1)  # (N, 3 xyz, C)
    g = np.einsum("ij,njc->nic", r, g)
    return np.stack([-g[:, 1, :], g[:, 2, :], -g[:, 0, :]], axis=1)

"""Point-to-point ICP with trimmed nearest-neighbour correspondences."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from twinforge.geometry import RigidTransform

log = logging.getLogger(__name__)


class IcpError(RuntimeError):
    pass


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 60
    correspondence_cutoff: float = 0.25
    convergence_eps: float = 1e-9
    trim_fraction: float = 0.1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.correspondence_cutoff > 0:
            raise ValueError("correspondence_cutoff must be > 0")
        if not self.convergence_eps > 0:
            raise ValueError("convergence_eps must be > 0")
        if not 0.0 <= self.trim_fraction < 1.0:
            raise ValueError("trim_fraction must lie in [0, 1)")


@dataclass
class IcpResult:
    transform: RigidTransform
    rms_residual: float
    iterations_used: int
    converged: bool
    # per iteration: RMS over the kept correspondences before and after the rigid solve
    rms_history: list[tuple[float, float]] = field(default_factory=list)
    correspondences: int = 0

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_list(),
            "rms_residual": self.rms_residual,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "correspondences": self.correspondences,
            "rms_history": [list(p) for p in self.rms_history],
        }


def rigid_fit(src: NDArray[np.float64], dst: NDArray[np.float64]) -> RigidTransform:
    """Least-squares R, t with R src + t ~ dst, from the SVD of the cross-covariance."""
    ps = src.mean(axis=0)
    pd = dst.mean(axis=0)
    h = (src - ps).T @ (dst - pd)
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] <= 1e-12 * s[0]:
        raise IcpError("degenerate cross-covariance (rank < 2)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ u.T
    return RigidTransform(r, pd - r @ ps)


def _check_cloud(p: NDArray[np.float64], name: str) -> None:
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"{name}: expected (N, 3) points, got {p.shape}")
    if len(p) < 3:
        raise IcpError(f"{name}: need at least 3 points")
    s = np.linalg.svd(p - p.mean(axis=0), compute_uv=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise IcpError(f"{name}: points are collinear")


def icp_align(src: ArrayLike, dst: ArrayLike, init: RigidTransform | None = None, params: IcpParams = IcpParams()) -> IcpResult:
    """Find T with T(src) ~ dst.

    Each iteration pairs every transformed source point with its nearest
    destination point within the cutoff, drops the worst ``trim_fraction``
    of pairs, and re-solves T in closed form on the survivors. Iteration stops
    when that solve changes the RMS over the kept pairs by less than
    ``convergence_eps``.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    _check_cloud(src, "src")
    _check_cloud(dst, "dst")
    T = init or RigidTransform.identity()
    if not T.is_valid():
        raise ValueError("init is not a valid rigid transform")
    tree = cKDTree(dst)
    history: list[tuple[float, float]] = []
    rms = float("nan")
    kept = 0
    for it in range(1, params.max_iterations + 1):
        moved = T.apply(src)
        dist, idx = tree.query(moved, distance_upper_bound=params.correspondence_cutoff)
        valid = np.flatnonzero(np.isfinite(dist))
        n_keep = len(valid) - int(np.floor(params.trim_fraction * len(valid)))
        order = valid[np.lexsort((valid, dist[valid]))][:n_keep]
        if len(order) < 3:
            raise IcpError(f"only {len(order)} correspondences survive at iteration {it}")
        p, q = src[order], dst[idx[order]]
        before = float(np.sqrt(np.mean(dist[order] ** 2)))
        T = rigid_fit(p, q)
        rms = float(np.sqrt(np.mean(np.sum((T.apply(p) - q) ** 2, axis=1))))
        kept = len(order)
        history.append((before, rms))
        if before - rms < params.convergence_eps:
            return IcpResult(T, rms, it, True, history, kept)
    log.info("ICP stopped at the iteration cap with rms %.3g", rms)
    return IcpResult(T, rms, params.max_iterations, False, history, kept)

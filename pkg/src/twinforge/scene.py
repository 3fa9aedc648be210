"""Gaussian splat scenes stored as immutable struct-of-arrays."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Iterator, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from twinforge import sh as shlib
from twinforge.geometry import RigidTransform, matrix_to_quat, quat_multiply, quat_to_matrix

log = logging.getLogger(__name__)


QUAT_NORM_TOL = 1e-6


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class GaussianSplat:
    """One primitive; a value copy of a row of :class:`GaussianScene`."""

    position: NDArray[np.float64]
    rotation: NDArray[np.float64]  # (w, x, y, z)
    log_scale: NDArray[np.float64]
    opacity_logit: float
    sh_coeffs: NDArray[np.float64]  # (K, 3)
    feature: NDArray[np.float64]

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))


def _frozen(a: ArrayLike, shape_tail: tuple[int, ...], name: str) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise ValueError(f"{name}: expected shape (N, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GaussianScene:
    """Ordered splats sharing one SH degree and feature dimension.

    A feature dimension of zero means the scene carries no semantic features.
    """

    positions: NDArray[np.float64]
    rotations: NDArray[np.float64]
    log_scales: NDArray[np.float64]
    opacity_logits: NDArray[np.float64]
    sh: NDArray[np.float64]
    features: NDArray[np.float64]
    label_table: dict[str, NDArray[np.float64]] = field(default_factory=dict)

    def __post_init__(self):
        pos = _frozen(self.positions, (3,), "positions")
        n = len(pos)
        rot = np.array(self.rotations, dtype=np.float64).reshape(n, 4)
        norms = np.linalg.norm(rot, axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise ValueError("rotations must be finite and non-zero")
        # float32-stored quaternions are kept as-is; consumers normalize on use
        off = np.abs(norms - 1.0) > QUAT_NORM_TOL
        if off.any():
            rot[off] = rot[off] / norms[off, None]
        sh = np.array(self.sh, dtype=np.float64)
        if sh.ndim != 3 or sh.shape[0] != n or sh.shape[2] != 3:
            raise ValueError(f"sh: expected shape (N, K, 3), got {sh.shape}")
        shlib.degree_from_coeffs(sh.shape[1])
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError(f"features: expected shape (N, d), got {feats.shape}")
        for arr in (rot, sh, feats):
            arr.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "rotations", _frozen(rot, (4,), "rotations"))
        object.__setattr__(self, "log_scales", _frozen(self.log_scales, (3,), "log_scales"))
        op = np.array(self.opacity_logits, dtype=np.float64).reshape(n)
        op.flags.writeable = False
        object.__setattr__(self, "opacity_logits", op)
        object.__setattr__(self, "sh", sh)
        object.__setattr__(self, "features", feats)
        if len(self.log_scales) != n:
            raise ValueError("log_scales length mismatch")
        for name, arr in (("positions", pos), ("log_scales", self.log_scales), ("opacity", op), ("sh", sh)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        table = {}
        for name, vec in self.label_table.items():
            v = np.array(vec, dtype=np.float64)
            v.flags.writeable = False
            if v.shape != (self.feature_dim,):
                raise ValueError(f"label {name!r}: embedding length {v.size} != feature_dim {self.feature_dim}")
            if abs(np.linalg.norm(v) - 1.0) > 1e-6:
                raise ValueError(f"label {name!r}: embedding is not unit norm")
            table[name] = v
        object.__setattr__(self, "label_table", table)

    @classmethod
    def empty(cls, sh_degree: int = 0, feature_dim: int = 0) -> GaussianScene:
        k = shlib.num_coeffs(sh_degree)
        return cls(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, k, 3)), np.zeros((0, feature_dim))
        )

    @classmethod
    def from_splats(cls, splats: list[GaussianSplat], label_table=None) -> GaussianScene:
        if not splats:
            raise ValueError("use GaussianScene.empty for scenes without splats")
        return cls(
            np.stack([s.position for s in splats]),
            np.stack([s.rotation for s in splats]),
            np.stack([s.log_scale for s in splats]),
            np.array([s.opacity_logit for s in splats]),
            np.stack([s.sh_coeffs for s in splats]),
            np.stack([s.feature for s in splats]),
            label_table or {},
        )

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> GaussianSplat:
        return GaussianSplat(
            self.positions[i].copy(),
            self.rotations[i].copy(),
            self.log_scales[i].copy(),
            float(self.opacity_logits[i]),
            self.sh[i].copy(),
            self.features[i].copy(),
        )

    def __iter__(self) -> Iterator[GaussianSplat]:
        return (self[i] for i in range(len(self)))

    @property
    def sh_degree(self) -> int:
        return shlib.degree_from_coeffs(self.sh.shape[1])

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def opacities(self) -> NDArray[np.float64]:
        return sigmoid(self.opacity_logits)

    def replace(self, **changes) -> GaussianScene:
        return dataclasses.replace(self, **changes)

    def subset(self, indices) -> GaussianScene:
        idx = np.asarray(indices, dtype=int)
        return self.replace(
            positions=self.positions[idx],
            rotations=self.rotations[idx],
            log_scales=self.log_scales[idx],
            opacity_logits=self.opacity_logits[idx],
            sh=self.sh[idx],
            features=self.features[idx],
        )

    def concat(self, other: GaussianScene) -> GaussianScene:
        """Append another scene's splats; SH degrees must agree, features are zero-padded."""
        if other.sh.shape[1] != self.sh.shape[1]:
            raise ValueError("SH degree mismatch")
        d = self.feature_dim
        of = other.features
        if of.shape[1] != d:
            of = np.zeros((len(other), d))
        return self.replace(
            positions=np.concatenate([self.positions, other.positions]),
            rotations=np.concatenate([self.rotations, other.rotations]),
            log_scales=np.concatenate([self.log_scales, other.log_scales]),
            opacity_logits=np.concatenate([self.opacity_logits, other.opacity_logits]),
            sh=np.concatenate([self.sh, other.sh]),
            features=np.concatenate([self.features, of]),
        )

    def equals(self, other: GaussianScene) -> bool:
        """Fieldwise bit equality."""
        if self.label_table.keys() != other.label_table.keys():
            return False
        if any(not np.array_equal(v, other.label_table[k]) for k, v in self.label_table.items()):
            return False
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in (
                (self.positions, other.positions),
                (self.rotations, other.rotations),
                (self.log_scales, other.log_scales),
                (self.opacity_logits, other.opacity_logits),
                (self.sh, other.sh),
                (self.features, other.features),
            )
        )


def covariance3d(splat: GaussianSplat) -> NDArray[np.float64]:
    """R diag(exp(log_scale))^2 R^T."""
    r = quat_to_matrix(splat.rotation)
    s2 = np.exp(2.0 * np.asarray(splat.log_scale, dtype=float))
    cov = (r * s2) @ r.T
    return 0.5 * (cov + cov.T)


def covariances(scene: GaussianScene) -> NDArray[np.float64]:
    """(N, 3, 3) covariances of every splat."""
    r = quat_to_matrix(scene.rotations) if len(scene) else np.zeros((0, 3, 3))
    s2 = np.exp(2.0 * scene.log_scales)
    cov = (r * s2[:, None, :]) @ r.transpose(0, 2, 1)
    return 0.5 * (cov + np.swapaxes(cov, 1, 2))


HighOrderPolicy = Literal["truncate", "keep"]


def transform_scene(scene: GaussianScene, T: RigidTransform, high_order: HighOrderPolicy = "truncate") -> GaussianScene:
    """Map every splat through T.

    Degree-1 SH bands rotate exactly. Higher bands are either dropped
    (``truncate``, the scene becomes degree 1) or left unrotated (``keep``,
    logged as a warning).
    """
    if high_order not in ("truncate", "keep"):
        raise ValueError(f"unknown high-order SH policy {high_order!r}")
    positions = T.apply(scene.positions) if len(scene) else scene.positions
    q_t = matrix_to_quat(T.rotation)
    rotations = quat_multiply(q_t, scene.rotations) if len(scene) else scene.rotations
    sh = np.array(scene.sh)
    if scene.sh_degree >= 1:
        sh[:, 1:4, :] = shlib.rotate_degree1(scene.sh[:, 1:4, :], T.rotation)
        if scene.sh_degree >= 2:
            if high_order == "truncate":
                sh = sh[:, :4, :]
            else:
                log.warning("SH bands of degree >= 2 left unrotated for %d splats", len(scene))
    return scene.replace(positions=positions, rotations=rotations, sh=sh)

"""Rigid transforms, quaternions and the SO(3)/SE(3) exponential maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


def skew(v: ArrayLike) -> NDArray[np.float64]:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_to_matrix(q: ArrayLike) -> NDArray[np.float64]:
    """Rotation matrices for (w, x, y, z) quaternions; accepts (4,) or (N, 4)."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    m = np.empty((len(q), 3, 3))
    m[:, 0, 0] = 1 - 2 * (y * y + z * z)
    m[:, 0, 1] = 2 * (x * y - w * z)
    m[:, 0, 2] = 2 * (x * z + w * y)
    m[:, 1, 0] = 2 * (x * y + w * z)
    m[:, 1, 1] = 1 - 2 * (x * x + z * z)
    m[:, 1, 2] = 2 * (y * z - w * x)
    m[:, 2, 0] = 2 * (x * z - w * y)
    m[:, 2, 1] = 2 * (y * z + w * x)
    m[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return m[0] if single else m


def matrix_to_quat(r: ArrayLike) -> NDArray[np.float64]:
    """(w, x, y, z) quaternion with w >= 0 for a rotation matrix."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_multiply(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Hamilton product a*b, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def so3_exp(omega: ArrayLike) -> NDArray[np.float64]:
    """Rodrigues' formula."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    k = skew(omega)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * k @ k
    return np.eye(3) + np.sin(theta) / theta * k + (1 - np.cos(theta)) / theta**2 * k @ k


def so3_log(r: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector of a rotation matrix."""
    r = np.asarray(r, dtype=float)
    cos_t = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    w = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < 1e-6:
        return 0.5 * w
    if np.pi - theta < 1e-4:
        # near pi the antisymmetric part vanishes; read the axis from the symmetric part
        b = (r + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(b)))
        axis = b[:, i] / np.sqrt(b[i, i])
        if np.dot(axis, w) < 0:
            axis = -axis
        return theta * axis / np.linalg.norm(axis)
    return theta / (2.0 * np.sin(theta)) * w


def rotation_angle(r: ArrayLike) -> float:
    """Angle in radians of a rotation matrix."""
    return float(np.linalg.norm(so3_log(r)))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x -> R x + t."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __hash__(self) -> int:
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: ArrayLike) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quat(cls, q: ArrayLike, t: ArrayLike = (0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(quat_to_matrix(q), t)

    @classmethod
    def from_rotvec(cls, omega: ArrayLike, t: ArrayLike = (0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(so3_exp(omega), t)

    @classmethod
    def exp(cls, xi: ArrayLike) -> RigidTransform:
        """SE(3) exponential of a twist ordered (v, omega)."""
        xi = np.asarray(xi, dtype=float)
        v, omega = xi[:3], xi[3:]
        theta = np.linalg.norm(omega)
        k = skew(omega)
        if theta < 1e-8:
            jl = np.eye(3) + 0.5 * k + k @ k / 6.0
        else:
            jl = np.eye(3) + (1 - np.cos(theta)) / theta**2 * k + (theta - np.sin(theta)) / theta**3 * k @ k
        return cls(so3_exp(omega), jl @ v)

    def matrix(self) -> NDArray[np.float64]:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def quat(self) -> NDArray[np.float64]:
        return matrix_to_quat(self.rotation)

    def compose(self, other: RigidTransform) -> RigidTransform:
        """self * other (apply other first)."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Transform a (3,) point or an (N, 3) array of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def log(self) -> NDArray[np.float64]:
        """Twist (v, omega) with exp(log(T)) == T."""
        omega = so3_log(self.rotation)
        theta = np.linalg.norm(omega)
        k = skew(omega)
        if theta < 1e-8:
            jl_inv = np.eye(3) - 0.5 * k + k @ k / 12.0
        else:
            jl_inv = (
                np.eye(3)
                - 0.5 * k
                + (1.0 / theta**2 - (1 + np.cos(theta)) / (2 * theta * np.sin(theta))) * k @ k
            )
        return np.concatenate([jl_inv @ self.translation, omega])

    def is_valid(self, tol: float = 1e-8) -> bool:
        r = self.rotation
        return bool(
            np.linalg.norm(r.T @ r - np.eye(3)) <= tol
            and abs(np.linalg.det(r) - 1.0) <= tol
            and np.all(np.isfinite(self.translation))
        )

    def to_list(self) -> list[list[float]]:
        """Row-major 4x4 nested list."""
        return self.matrix().tolist()


def pose_error(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(rotation angle in radians, translation distance) between two transforms."""
    return rotation_angle(a.rotation.T @ b.rotation), float(np.linalg.norm(a.translation - b.translation))


def random_rotation(rng: np.random.Generator, max_angle: float | None = None) -> NDArray[np.float64]:
    """Uniform random rotation, or a uniform axis with angle uniform in [0, max_angle]."""
    if max_angle is None:
        q = rng.normal(size=4)
        return quat_to_matrix(q / np.linalg.norm(q))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))

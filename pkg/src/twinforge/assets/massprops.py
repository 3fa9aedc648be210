from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from twinforge.assets.mesh import TriangleMesh

log = logging.getLogger(__name__)

# second moment of the unit tetrahedron (0, e1, e2, e3) spanned by its three edge vectors
_CANONICAL = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 120.0


class NotWatertightError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MassProperties:
    volume: float
    mass: float
    center_of_mass: NDArray[np.float64]
    inertia: NDArray[np.float64]  # about the center of mass

    def __post_init__(self):
        object.__setattr__(self, "center_of_mass", np.asarray(self.center_of_mass, dtype=float).reshape(3))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(3, 3))

    def principal_moments(self) -> NDArray[np.float64]:
        return np.linalg.eigvalsh(self.inertia)


def mass_properties(mesh: TriangleMesh, density: float) -> MassProperties:
    """Volume integrals over a closed mesh by summing signed tetrahedra.

    Each face forms a tetrahedron with a reference point (the vertex centroid,
    which keeps the sums well conditioned). A mesh with inward-facing
    orientation is flipped with a warning.
    """
    if not mesh.is_watertight():
        raise NotWatertightError("mesh is not watertight: every edge must be shared by two oppositely oriented faces")
    ref = mesh.vertices.mean(axis=0)
    a, b, c = (mesh.vertices[mesh.faces[:, k]] - ref for k in range(3))
    det = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = det.sum() / 6.0
    if volume < 0:
        log.warning("mesh has inverted orientation; flipping")
        det = -det
        volume = -volume
    if volume <= 0:
        raise ValueError("mesh encloses no volume")
    first = (det[:, None] * (a + b + c)).sum(axis=0) / 24.0
    com_rel = first / volume
    edges = np.stack([a, b, c], axis=2)  # columns are the tetrahedron edge vectors
    second = np.einsum("n,nij,jk,nlk->il", det, edges, _CANONICAL, edges)
    second_com = second - volume * np.outer(com_rel, com_rel)
    second_com = 0.5 * (second_com + second_com.T)
    inertia = density * (np.trace(second_com) * np.eye(3) - second_com)
    return MassProperties(float(volume), float(density * volume), ref + com_rel, inertia)


def bounding_box_properties(mesh: TriangleMesh, density: float) -> MassProperties:
    """Solid box over the mesh bounds; used when a part is not closed."""
    lo, hi = mesh.bounds()
    ext = hi - lo
    volume = float(np.prod(ext))
    mass = density * volume
    sq = ext**2
    inertia = mass / 12.0 * np.diag([sq[1] + sq[2], sq[0] + sq[2], sq[0] + sq[1]])
    return MassProperties(volume, mass, 0.5 * (lo + hi), inertia)


def mass_properties_or_bounds(mesh: TriangleMesh, density: float, name: str = "mesh") -> MassProperties:
    try:
        return mass_properties(mesh, density)
    except NotWatertightError:
        log.warning("%s is not watertight; using its bounding box for mass properties", name)
        return bounding_box_properties(mesh, density)


def combine(props: list[MassProperties]) -> MassProperties:
    """Mass properties of a rigid union, shifted to the joint center of mass."""
    mass = sum(p.mass for p in props)
    com = sum(p.mass * p.center_of_mass for p in props) / mass
    inertia = np.zeros((3, 3))
    for p in props:
        d = p.center_of_mass - com
        inertia += p.inertia + p.mass * (d @ d * np.eye(3) - np.outer(d, d))
    return MassProperties(sum(p.volume for p in props), mass, com, inertia)


def scaled(props: MassProperties, s: float) -> MassProperties:
    """Properties of the mesh scaled uniformly about the origin by s."""
    return MassProperties(props.volume * s**3, props.mass * s**3, props.center_of_mass * s, props.inertia * s**5)

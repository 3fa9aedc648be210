"""Triangle meshes, OBJ io and a few primitives."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from twinforge.geometry import RigidTransform

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-14


class MeshFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: NDArray[np.float64]  # (V, 3)
    faces: NDArray[np.int64]  # (F, 3)
    face_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex")
        labels = self.face_labels
        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != len(f):
                raise ValueError(f"{len(labels)} face labels for {len(f)} faces")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "face_labels", labels)

    def __len__(self) -> int:
        return len(self.faces)

    def face_areas(self) -> NDArray[np.float64]:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        if len(self.vertices) == 0:
            raise ValueError("empty mesh has no bounds")
        used = self.vertices[np.unique(self.faces)] if len(self.faces) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def transformed(self, T: RigidTransform, scale: float = 1.0) -> TriangleMesh:
        """Scale about the origin, then apply T."""
        return TriangleMesh(T.apply(self.vertices * scale), self.faces, self.face_labels)

    def translated(self, offset: ArrayLike) -> TriangleMesh:
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=float), self.faces, self.face_labels)

    def flipped(self) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.faces[:, ::-1], self.face_labels)

    def with_labels(self, label: str) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.faces, (label,) * len(self.faces))

    def cleaned(self) -> TriangleMesh:
        """Drop zero-area faces."""
        keep = self.face_areas() > DEGENERATE_AREA
        if keep.all():
            return self
        log.info("dropped %d degenerate faces", int((~keep).sum()))
        labels = tuple(l for l, k in zip(self.face_labels, keep) if k) if self.face_labels else self.face_labels
        return TriangleMesh(self.vertices, self.faces[keep], labels)

    def select_faces(self, mask: NDArray[np.bool_]) -> TriangleMesh:
        """Faces where mask is true, with unused vertices removed and indices compacted."""
        faces = self.faces[mask]
        used, inverse = np.unique(faces, return_inverse=True)
        labels = tuple(l for l, m in zip(self.face_labels, mask) if m) if self.face_labels else None
        return TriangleMesh(self.vertices[used], inverse.reshape(-1, 3), labels)

    def is_watertight(self) -> bool:
        """Every directed edge appears once and its reverse appears once."""
        if len(self.faces) == 0:
            return False
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        n = len(self.vertices)
        key = edges[:, 0] * n + edges[:, 1]
        rkey = edges[:, 1] * n + edges[:, 0]
        uniq, counts = np.unique(key, return_counts=True)
        if np.any(counts != 1):
            return False
        return bool(np.all(np.isin(rkey, uniq, assume_unique=False)))

    @staticmethod
    def merge(meshes: list[TriangleMesh]) -> TriangleMesh:
        verts, faces, labels = [], [], []
        offset = 0
        labelled = all(m.face_labels is not None for m in meshes)
        for m in meshes:
            verts.append(m.vertices)
            faces.append(m.faces + offset)
            offset += len(m.vertices)
            if labelled:
                labels.extend(m.face_labels)
        return TriangleMesh(
            np.concatenate(verts) if verts else np.zeros((0, 3)),
            np.concatenate(faces) if faces else np.zeros((0, 3), dtype=int),
            tuple(labels) if labelled and meshes else None,
        )


def load_mesh(path: str | os.PathLike) -> TriangleMesh:
    """ASCII OBJ. ``g``/``o`` lines set the label of the faces that follow."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    labels: list[str | None] = []
    current: str | None = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise MeshFormatError("vertex needs 3 coordinates", lineno)
                try:
                    verts.append([float(x) for x in rest[:3]])
                except ValueError as exc:
                    raise MeshFormatError(str(exc), lineno) from None
            elif tag == "f":
                if len(rest) < 3:
                    raise MeshFormatError("face needs at least 3 vertices", lineno)
                try:
                    idx = [int(tok.split("/")[0]) for tok in rest]
                except ValueError as exc:
                    raise MeshFormatError(str(exc), lineno) from None
                nv = len(verts)
                idx = [i - 1 if i > 0 else nv + i for i in idx]
                if any(i < 0 or i >= nv for i in idx):
                    raise MeshFormatError("face index out of range", lineno)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
                    labels.append(current)
            elif tag in ("g", "o"):
                current = " ".join(rest) if rest else None
    face_labels = None
    if any(l is not None for l in labels):
        face_labels = tuple(l if l is not None else "" for l in labels)
    mesh = TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=int).reshape(-1, 3), face_labels)
    return mesh.cleaned()


def save_mesh(mesh: TriangleMesh, path: str | os.PathLike) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    current = None
    for i, (a, b, c) in enumerate(mesh.faces):
        if mesh.face_labels is not None and mesh.face_labels[i] != current:
            current = mesh.face_labels[i]
            lines.append(f"g {current}")
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def box_mesh(size: ArrayLike = (1.0, 1.0, 1.0), center: ArrayLike = (0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with outward-facing triangles."""
    half = 0.5 * np.asarray(size, dtype=float)
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    verts = corners * half + np.asarray(center, dtype=float)
    # vertex index = 4*(x>0) + 2*(y>0) + (z>0)
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.array(faces))


def icosphere(radius: float = 1.0, subdivisions: int = 2, center: ArrayLike = (0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]  # fmt: skip
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]  # fmt: skip
    v = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = v[i] + v[j]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(v) * radius + np.asarray(center, dtype=float), np.array(faces))


def cylinder_mesh(radius: float, height: float, segments: int = 24, center: ArrayLike = (0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed cylinder along z."""
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    verts = np.vstack([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]]) + np.asarray(center, dtype=float)
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i), (cb, j, i), (ct, segments + i, segments + j)]
    return TriangleMesh(verts, np.array(faces))


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Area-uniform surface samples and the face each came from.

    Face counts are fixed by largest-remainder rounding of the area-proportional
    share, so they are within one point of the expectation; positions inside
    each face are uniform.
    """
    if n == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has no area to sample")
    share = n * areas / total
    counts = np.floor(share).astype(np.int64)
    rest = n - counts.sum()
    if rest:
        order = np.lexsort((np.arange(len(share)), -(share - counts)))
        counts[order[:rest]] += 1
    face = np.repeat(np.arange(len(areas)), counts)
    u = rng.random((n, 2))
    flip = u.sum(axis=1) > 1
    u[flip] = 1 - u[flip]
    a, b, c = (mesh.vertices[mesh.faces[face, k]] for k in range(3))
    pts = a + u[:, :1] * (b - a) + u[:, 1:] * (c - a)
    return pts, face

from __future__ import annotations

import numpy as np

from twinforge.assets.mesh import TriangleMesh


def partition_mesh(mesh: TriangleMesh, mobile_label: str, base_label: str) -> tuple[TriangleMesh, TriangleMesh]:
    """Split a face-labeled mesh into its mobile and base parts."""
    if mesh.face_labels is None:
        raise ValueError("mesh has no face labels")
    labels = np.array(mesh.face_labels, dtype=object)
    out = []
    for label in (mobile_label, base_label):
        sel = labels == label
        if not sel.any():
            raise ValueError(f"no faces carry label {label!r}")
        out.append(mesh.select_faces(sel))
    return out[0], out[1]

from __future__ import annotations

import json
import os

import numpy as np

from twinforge.geometry import RigidTransform


def read_pose_json(path: str | os.PathLike) -> RigidTransform:
    """A 4x4 row-major homogeneous matrix stored as a JSON array of rows."""
    with open(path) as fh:
        data = json.load(fh)
    m = np.asarray(data, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"{path}: expected a 4x4 matrix, got shape {m.shape}")
    if not np.allclose(m[3], [0, 0, 0, 1]):
        raise ValueError(f"{path}: last row must be 0 0 0 1")
    T = RigidTransform.from_matrix(m)
    if not T.is_valid(1e-6):
        raise ValueError(f"{path}: rotation block is not orthonormal")
    return T


def write_pose_json(T: RigidTransform, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(T.to_list(), fh, indent=2)
        fh.write("\n")

"""Binary splat PLY and label-table JSON interchange."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import numpy as np

from twinforge import sh as shlib
from twinforge.scene import QUAT_NORM_TOL, GaussianScene

log = logging.getLogger(__name__)

_PLY_TYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "uint32": "<u4",
}


class PlyFormatError(ValueError):
    """Malformed or inconsistent splat PLY file."""

    def __init__(self, message: str, prop: str | None = None):
        super().__init__(message)
        self.property = prop


def _property_names(sh_degree: int, feature_dim: int) -> list[str]:
    n_rest = 3 * shlib.num_coeffs(sh_degree) - 3
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(n_rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    names += [f"feature_{i}" for i in range(feature_dim)]
    return names


def _read_header(fh) -> tuple[int, list[tuple[str, str]]]:
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise PlyFormatError("not a PLY file (missing 'ply' magic)")
    count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    fmt_ok = False
    while True:
        raw = fh.readline()
        if not raw:
            raise PlyFormatError("unexpected end of file inside header")
        line = raw.decode("ascii", errors="replace").strip()
        if line == "end_header":
            break
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "binary_little_endian":
                raise PlyFormatError(f"unsupported PLY format {line!r}; expected binary_little_endian")
            fmt_ok = True
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"bad element line {line!r}")
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                try:
                    count = int(parts[2])
                except ValueError as e:
                    raise PlyFormatError(f"bad vertex count in {line!r}") from e
                if count < 0:
                    raise PlyFormatError("negative vertex count")
            elif count is not None and int(parts[2]) > 0:
                raise PlyFormatError(f"unsupported extra element {parts[1]!r}")
        elif parts[0] == "property":
            if not in_vertex:
                continue
            if len(parts) != 3 or parts[1] == "list":
                raise PlyFormatError(f"unsupported property declaration {line!r}")
            if parts[1] not in _PLY_TYPES:
                raise PlyFormatError(f"unsupported property type {parts[1]!r}", parts[2])
            props.append((parts[2], _PLY_TYPES[parts[1]]))
        else:
            raise PlyFormatError(f"unrecognized header line {line!r}")
    if not fmt_ok:
        raise PlyFormatError("header lacks a format line")
    if count is None:
        raise PlyFormatError("header declares no vertex element")
    return count, props


def load_splat_ply(path: str | os.PathLike, feature_dim: int = 0, label_table: dict | None = None) -> GaussianScene:
    """Read a splat PLY.

    ``feature_dim`` is used only when the file carries no ``feature_*``
    properties; features then start as zero vectors of that length.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        count, props = _read_header(fh)
        names = [p[0] for p in props]
        if len(set(names)) != len(names):
            raise PlyFormatError("duplicate property names in header")
        dtype = np.dtype([(n, t) for n, t in props])
        blob = fh.read(count * dtype.itemsize)
        if len(blob) != count * dtype.itemsize:
            raise PlyFormatError(f"truncated vertex data: expected {count} records")
        data = np.frombuffer(blob, dtype=dtype, count=count)

    n_rest = sum(1 for n in names if n.startswith("f_rest_"))
    try:
        degree = shlib.degree_from_coeffs(n_rest // 3 + 1) if n_rest % 3 == 0 else -1
    except ValueError:
        degree = -1
    if degree < 0:
        raise PlyFormatError(f"{n_rest} f_rest properties do not match any SH degree 0..3", "f_rest")
    n_feat = sum(1 for n in names if n.startswith("feature_"))
    for req in _property_names(degree, n_feat):
        if req not in names:
            raise PlyFormatError(f"missing required property {req!r}", req)

    def col(n):
        return data[n].astype(np.float64)

    positions = np.stack([col("x"), col("y"), col("z")], axis=1)
    k = shlib.num_coeffs(degree)
    sh = np.zeros((count, k, 3))
    for c in range(3):
        sh[:, 0, c] = col(f"f_dc_{c}")
        for j in range(1, k):
            sh[:, j, c] = col(f"f_rest_{c * (k - 1) + j - 1}")
    opacity = col("opacity")
    log_scales = np.stack([col(f"scale_{i}") for i in range(3)], axis=1)
    rotations = np.stack([col(f"rot_{i}") for i in range(4)], axis=1)
    if n_feat:
        features = np.stack([col(f"feature_{i}") for i in range(n_feat)], axis=1)
    else:
        features = np.zeros((count, feature_dim))

    for name, arr in (("position", positions), ("sh", sh), ("opacity", opacity), ("scale", log_scales),
                      ("rotation", rotations), ("feature", features)):
        if not np.all(np.isfinite(arr)):
            raise PlyFormatError(f"non-finite values in {name} properties", name)
    norms = np.linalg.norm(rotations, axis=1)
    if np.any(norms == 0):
        raise PlyFormatError("zero-length rotation quaternion", "rot_0")
    n_fixed = int(np.sum(np.abs(norms - 1.0) > QUAT_NORM_TOL))
    if n_fixed:
        log.info("normalized %d rotation quaternions in %s", n_fixed, path)
    return GaussianScene(positions, rotations, log_scales, opacity, sh, features, label_table or {})


def save_splat_ply(scene: GaussianScene, path: str | os.PathLike) -> None:
    names = _property_names(scene.sh_degree, scene.feature_dim)
    n = len(scene)
    data = np.zeros(n, dtype=[(nm, "<f4") for nm in names])
    for i, axis in enumerate("xyz"):
        data[axis] = scene.positions[:, i]
    k = scene.sh.shape[1]
    for c in range(3):
        data[f"f_dc_{c}"] = scene.sh[:, 0, c]
        for j in range(1, k):
            data[f"f_rest_{c * (k - 1) + j - 1}"] = scene.sh[:, j, c]
    data["opacity"] = scene.opacity_logits
    for i in range(3):
        data[f"scale_{i}"] = scene.log_scales[:, i]
    for i in range(4):
        data[f"rot_{i}"] = scene.rotations[:, i]
    for i in range(scene.feature_dim):
        data[f"feature_{i}"] = scene.features[:, i]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {nm}" for nm in names]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data.tobytes())


def load_label_table(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: label table must be a JSON object")
    return {str(k): np.asarray(v, dtype=float) for k, v in raw.items()}


def save_label_table(table: dict, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump({k: [float(x) for x in v] for k, v in table.items()}, fh, indent=1)

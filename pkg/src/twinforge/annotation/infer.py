"""Articulation, joint and material queries turned into validated asset descriptions."""

from __future__ import annotations

import logging
import math
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from twinforge.annotation.client import AnnotationClient
from twinforge.annotation.views import VIEW_DIRECTIONS, encode_png, render_orthographic_views
from twinforge.assets.articulation import (
    ArticulationProposal,
    ArticulationSpec,
    PhysicsProperties,
    ValidationError,
)
from twinforge.assets.mesh import TriangleMesh
from twinforge.assets.partition import partition_mesh
from twinforge.assets.urdf import InteractiveAsset

log = logging.getLogger(__name__)

Views = Mapping[str, NDArray[np.uint8]] | Sequence[NDArray[np.uint8]]
Bounds = tuple[NDArray[np.float64], NDArray[np.float64]]


def _pngs(views: Views) -> list[bytes]:
    if isinstance(views, Mapping):
        missing = [k for k in VIEW_DIRECTIONS if k not in views]
        if missing:
            raise ValueError(f"missing views {missing}")
        images = [views[k] for k in VIEW_DIRECTIONS]
    else:
        images = list(views)
    if len(images) != 4:
        raise ValueError(f"expected 4 views, got {len(images)}")
    return [encode_png(im) for im in images]


def _number(reply: dict, key: str) -> float:
    v = reply.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(key, f"expected a finite number, got {v!r}")
    return float(v)


def _vector(reply: dict, key: str, n: int) -> NDArray[np.float64]:
    v = reply.get(key)
    if not isinstance(v, list) or len(v) != n:
        raise ValidationError(key, f"expected a list of {n} numbers, got {v!r}")
    return np.array([_number({key: x}, key) for x in v])


def _fmt_bounds(b: Bounds) -> str:
    lo, hi = (np.asarray(x, dtype=float) for x in b)
    return "[[" + ", ".join(f"{x:.4g}" for x in lo) + "], [" + ", ".join(f"{x:.4g}" for x in hi) + "]]"


def infer_articulation(
    views: Views, client: AnnotationClient, hint: str = "unnamed", labels: Sequence[str] = ()
) -> ArticulationProposal:
    """Ask for the object category and its single articulated part, if any."""
    reply = client.ask(
        "articulation", _pngs(views), hint=hint, labels=", ".join(f'"{l}"' for l in labels) or "(none given)"
    )
    joint_type = reply.get("joint_type")
    if not isinstance(joint_type, str) or joint_type not in ("prismatic", "revolute", "none"):
        raise ValidationError("joint_type", f"unknown joint type {joint_type!r}")
    category = reply.get("category", hint)
    if not isinstance(category, str) or not category.strip():
        raise ValidationError("category", f"expected a non-empty string, got {category!r}")
    parts = reply.get("parts", [])
    if not isinstance(parts, list) or not all(isinstance(p, str) for p in parts):
        raise ValidationError("part_labels", f"expected a list of strings, got {parts!r}")
    return ArticulationProposal(category, joint_type, tuple(parts))


def infer_joint_parameters(
    views: Views, proposal: ArticulationProposal, part_bounds: tuple[Bounds, Bounds], client: AnnotationClient
) -> ArticulationSpec:
    """Ask for axis, origin and limits in the mesh frame; the axis is normalized, nothing is clamped."""
    if proposal.joint_type == "none":
        raise ValueError("proposal has no articulated part")
    mobile, base = proposal.part_labels
    reply = client.ask(
        "joint_parameters",
        _pngs(views),
        category=proposal.category,
        mobile=mobile,
        base=base,
        joint_type=proposal.joint_type,
        mobile_bounds=_fmt_bounds(part_bounds[0]),
        base_bounds=_fmt_bounds(part_bounds[1]),
    )
    axis = _vector(reply, "axis", 3)
    norm = float(np.linalg.norm(axis))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValidationError("axis", "zero-norm axis")
    origin = _vector(reply, "origin", 3)
    lower, upper = _vector(reply, "limits", 2)
    return ArticulationSpec(proposal.joint_type, axis / norm, origin, float(lower), float(upper), mobile, base)


def estimate_physics(views: Views, category: str, client: AnnotationClient) -> PhysicsProperties:
    reply = client.ask("physics", _pngs(views), category=category)
    values = {}
    for key in ("density", "youngs_modulus", "poisson_ratio"):
        v = reply.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(key, f"expected a finite number, got {v!r}")
        values[key] = v
    return PhysicsProperties(**values)


def annotate_asset(
    mesh: TriangleMesh, name: str, client: AnnotationClient, resolution: int = 256
) -> tuple[InteractiveAsset, ArticulationProposal]:
    """Run the three queries on one face-labeled mesh and assemble the interactive asset."""
    views = render_orthographic_views(mesh, resolution)
    labels = sorted(set(mesh.face_labels)) if mesh.face_labels is not None else []
    proposal = infer_articulation(views, client, hint=name, labels=labels)
    physics = estimate_physics(views, proposal.category, client)
    if proposal.joint_type == "none":
        log.info("%s: no articulation proposed", name)
        return InteractiveAsset({"body": TriangleMesh(mesh.vertices, mesh.faces)}, physics), proposal
    mobile_label, base_label = proposal.part_labels
    mobile, base = partition_mesh(mesh, mobile_label, base_label)
    spec = infer_joint_parameters(views, proposal, (mobile.bounds(), base.bounds()), client)
    return InteractiveAsset({mobile_label: mobile, base_label: base}, physics, spec), proposal

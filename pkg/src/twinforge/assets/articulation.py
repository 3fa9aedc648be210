"""Physical and articulation descriptions attached to an object asset."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray


class ValidationError(ValueError):
    """A value violates its type's invariants; ``field`` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PhysicsProperties:
    density: float  # kg/m^3
    youngs_modulus: float  # Pa
    poisson_ratio: float

    def __post_init__(self):
        for name in ("density", "youngs_modulus", "poisson_ratio"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(name, f"expected a finite number, got {v!r}")
        if not self.density > 0:
            raise ValidationError("density", f"must be > 0, got {self.density}")
        if not self.youngs_modulus > 0:
            raise ValidationError("youngs_modulus", f"must be > 0, got {self.youngs_modulus}")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValidationError("poisson_ratio", f"must lie in (-1, 0.5), got {self.poisson_ratio}")

    def to_dict(self) -> dict:
        return {"density": self.density, "youngs_modulus": self.youngs_modulus, "poisson_ratio": self.poisson_ratio}


ProposalJoint = Literal["prismatic", "revolute", "none"]


@dataclass(frozen=True)
class ArticulationProposal:
    category: str
    joint_type: ProposalJoint
    part_labels: tuple[str, ...]  # (mobile, base), empty when joint_type is none

    def __post_init__(self):
        if self.joint_type not in ("prismatic", "revolute", "none"):
            raise ValidationError("joint_type", f"unknown joint type {self.joint_type!r}")
        labels = tuple(self.part_labels)
        if self.joint_type == "none":
            if labels:
                raise ValidationError("part_labels", "must be empty when joint_type is none")
        elif len(labels) != 2 or not all(isinstance(l, str) and l for l in labels) or labels[0] == labels[1]:
            raise ValidationError("part_labels", "expected two distinct non-empty labels (mobile, base)")
        object.__setattr__(self, "part_labels", labels)


@dataclass(frozen=True, eq=False)
class ArticulationSpec:
    joint_type: Literal["prismatic", "revolute"]
    axis: NDArray[np.float64]
    origin: NDArray[np.float64]
    limit_lower: float
    limit_upper: float
    mobile_label: str
    base_label: str

    def __post_init__(self):
        if self.joint_type not in ("prismatic", "revolute"):
            raise ValidationError("joint_type", f"unknown joint type {self.joint_type!r}")
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        if not np.all(np.isfinite(axis)) or abs(np.linalg.norm(axis) - 1.0) > 1e-6:
            raise ValidationError("axis", "must be a unit vector")
        if not np.all(np.isfinite(origin)):
            raise ValidationError("origin", "must be finite")
        if not (math.isfinite(self.limit_lower) and math.isfinite(self.limit_upper)):
            raise ValidationError("limits", "must be finite")
        if self.limit_lower > self.limit_upper:
            raise ValidationError("limits", "limit order: lower exceeds upper")
        if self.mobile_label == self.base_label:
            raise ValidationError("part_labels", "mobile and base labels must differ")
        axis.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin", origin)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArticulationSpec):
            return NotImplemented
        return (
            self.joint_type == other.joint_type
            and np.array_equal(self.axis, other.axis)
            and np.array_equal(self.origin, other.origin)
            and self.limit_lower == other.limit_lower
            and self.limit_upper == other.limit_upper
            and self.mobile_label == other.mobile_label
            and self.base_label == other.base_label
        )

    def close_to(self, other: ArticulationSpec, tol: float = 1e-6) -> bool:
        return (
            self.joint_type == other.joint_type
            and self.mobile_label == other.mobile_label
            and self.base_label == other.base_label
            and np.allclose(self.axis, other.axis, rtol=0, atol=tol)
            and np.allclose(self.origin, other.origin, rtol=0, atol=tol)
            and abs(self.limit_lower - other.limit_lower) <= tol
            and abs(self.limit_upper - other.limit_upper) <= tol
        )

    def to_dict(self) -> dict:
        return {
            "joint_type": self.joint_type,
            "axis": self.axis.tolist(),
            "origin": self.origin.tolist(),
            "limit_lower": self.limit_lower,
            "limit_upper": self.limit_upper,
            "mobile_label": self.mobile_label,
            "base_label": self.base_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ArticulationSpec:
        return cls(
            d["joint_type"], d["axis"], d["origin"], float(d["limit_lower"]), float(d["limit_upper"]),
            d["mobile_label"], d["base_label"],
        )  # fmt: skip

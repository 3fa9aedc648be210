"""Reading and writing the URDF subset used here.

Supported: links with inertial, visual and collision blocks (mesh or box
geometry) and joints of type revolute, prismatic or fixed. Transmissions,
materials and other tags are ignored on read and never written.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np
from numpy.typing import NDArray

from twinforge.geometry import RigidTransform
from twinforge.kinematics.model import JOINT_TYPES, Geometry, Inertial, Joint, Link, RobotModel


class UrdfError(ValueError):
    pass


def fmt(x: float) -> str:
    """Eight significant digits; integers and zero print without a fraction."""
    s = f"{float(x):.8g}"
    return "0" if s == "-0" else s


def _vec(text: str | None, default, n: int = 3) -> NDArray[np.float64]:
    if text is None:
        return np.array(default, dtype=float)
    vals = [float(t) for t in text.split()]
    if len(vals) != n:
        raise UrdfError(f"expected {n} numbers, got {text!r}")
    return np.array(vals)


def rpy_to_matrix(rpy) -> NDArray[np.float64]:
    r, p, y = rpy
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def matrix_to_rpy(m) -> NDArray[np.float64]:
    m = np.asarray(m, dtype=float)
    pitch = np.arcsin(np.clip(-m[2, 0], -1.0, 1.0))
    if abs(m[2, 0]) < 1.0 - 1e-12:
        roll = np.arctan2(m[2, 1], m[2, 2])
        yaw = np.arctan2(m[1, 0], m[0, 0])
    else:  # gimbal lock: fold everything into yaw
        roll = 0.0
        yaw = np.arctan2(-m[0, 1], m[1, 1])
    return np.array([roll, pitch, yaw])


def _origin(el: ET.Element | None) -> RigidTransform:
    if el is None:
        return RigidTransform.identity()
    xyz = _vec(el.get("xyz"), (0, 0, 0))
    rpy = _vec(el.get("rpy"), (0, 0, 0))
    return RigidTransform(rpy_to_matrix(rpy), xyz)


def _geometry(el: ET.Element, where: str) -> Geometry:
    origin = _origin(el.find("origin"))
    geo = el.find("geometry")
    if geo is None or len(geo) == 0:
        raise UrdfError(f"{where}: missing geometry")
    shape = geo[0]
    if shape.tag == "mesh":
        fn = shape.get("filename")
        if not fn:
            raise UrdfError(f"{where}: mesh without filename")
        return Geometry("mesh", origin, filename=fn, scale=_vec(shape.get("scale"), (1, 1, 1)))
    if shape.tag == "box":
        return Geometry("box", origin, size=_vec(shape.get("size"), None))
    raise UrdfError(f"{where}: unsupported geometry {shape.tag!r}")


def _inertial(el: ET.Element | None, where: str) -> Inertial | None:
    if el is None:
        return None
    mass_el = el.find("mass")
    if mass_el is None:
        raise UrdfError(f"{where}: inertial without mass")
    mass = float(mass_el.get("value"))
    it = el.find("inertia")
    inertia = np.zeros((3, 3))
    if it is not None:
        g = lambda k: float(it.get(k, 0.0))  # noqa: E731
        inertia = np.array(
            [[g("ixx"), g("ixy"), g("ixz")], [g("ixy"), g("iyy"), g("iyz")], [g("ixz"), g("iyz"), g("izz")]]
        )
    return Inertial(mass, _origin(el.find("origin")), inertia)


def parse_urdf(text: str) -> RobotModel:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise UrdfError(f"malformed XML: {exc}") from None
    if root.tag != "robot":
        raise UrdfError("root element must be <robot>")
    links = []
    for el in root.findall("link"):
        name = el.get("name")
        if not name:
            raise UrdfError("link without name")
        links.append(
            Link(
                name,
                _inertial(el.find("inertial"), f"link {name!r}"),
                tuple(_geometry(v, f"link {name!r} visual") for v in el.findall("visual")),
                tuple(_geometry(c, f"link {name!r} collision") for c in el.findall("collision")),
            )
        )
    joints = []
    for el in root.findall("joint"):
        name = el.get("name")
        jtype = el.get("type")
        if jtype not in JOINT_TYPES:
            raise UrdfError(f"joint {name!r}: unknown joint type {jtype!r}")
        parent, child = el.find("parent"), el.find("child")
        if parent is None or child is None:
            raise UrdfError(f"joint {name!r}: missing parent or child")
        axis_el = el.find("axis")
        axis = _vec(axis_el.get("xyz") if axis_el is not None else None, (1, 0, 0))
        lower = upper = effort = velocity = 0.0
        lim = el.find("limit")
        if jtype != "fixed":
            if lim is None or lim.get("lower") is None or lim.get("upper") is None:
                raise UrdfError(f"joint {name!r}: movable joint without limits")
            lower, upper = float(lim.get("lower")), float(lim.get("upper"))
            effort, velocity = float(lim.get("effort", 0.0)), float(lim.get("velocity", 0.0))
        try:
            joints.append(
                Joint(name, jtype, parent.get("link"), child.get("link"), _origin(el.find("origin")), axis, lower, upper, effort, velocity)
            )
        except ValueError as exc:
            raise UrdfError(str(exc)) from None
    try:
        return RobotModel(root.get("name", "robot"), links, joints)
    except ValueError as exc:
        raise UrdfError(str(exc)) from None


def _origin_el(parent: ET.Element, T: RigidTransform) -> None:
    rpy = matrix_to_rpy(T.rotation)
    ET.SubElement(parent, "origin", xyz=" ".join(map(fmt, T.translation)), rpy=" ".join(map(fmt, rpy)))


def _geometry_el(parent: ET.Element, tag: str, g: Geometry) -> None:
    el = ET.SubElement(parent, tag)
    _origin_el(el, g.origin)
    geo = ET.SubElement(el, "geometry")
    if g.kind == "mesh":
        attrs = {"filename": g.filename}
        if g.scale is not None and not np.allclose(g.scale, 1.0):
            attrs["scale"] = " ".join(map(fmt, g.scale))
        ET.SubElement(geo, "mesh", **attrs)
    else:
        ET.SubElement(geo, "box", size=" ".join(map(fmt, g.size)))


def robot_to_urdf(robot: RobotModel) -> str:
    root = ET.Element("robot", name=robot.name)
    for link in robot.links.values():
        el = ET.SubElement(root, "link", name=link.name)
        if link.inertial is not None:
            inl = ET.SubElement(el, "inertial")
            _origin_el(inl, link.inertial.origin)
            ET.SubElement(inl, "mass", value=fmt(link.inertial.mass))
            i = link.inertial.inertia
            ET.SubElement(
                inl,
                "inertia",
                ixx=fmt(i[0, 0]), ixy=fmt(i[0, 1]), ixz=fmt(i[0, 2]),
                iyy=fmt(i[1, 1]), iyz=fmt(i[1, 2]), izz=fmt(i[2, 2]),
            )  # fmt: skip
        for g in link.visuals:
            _geometry_el(el, "visual", g)
        for g in link.collisions:
            _geometry_el(el, "collision", g)
    for j in robot.joints:
        el = ET.SubElement(root, "joint", name=j.name, type=j.type)
        ET.SubElement(el, "parent", link=j.parent)
        ET.SubElement(el, "child", link=j.child)
        _origin_el(el, j.origin)
        if j.type != "fixed":
            ET.SubElement(el, "axis", xyz=" ".join(map(fmt, j.axis)))
            ET.SubElement(
                el, "limit", lower=fmt(j.lower), upper=fmt(j.upper), effort=fmt(j.effort), velocity=fmt(j.velocity)
            )
    ET.indent(root)
    return '<?xml version="1.0"?>\n' + ET.tostring(root, encoding="unicode") + "\n"

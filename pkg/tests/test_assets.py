import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_articulated_asset, star_mesh
from twinforge.assets import (
    ArticulationSpec,
    AssetError,
    InteractiveAsset,
    MeshFormatError,
    NotWatertightError,
    PhysicsProperties,
    TriangleMesh,
    box_mesh,
    build_urdf,
    cylinder_mesh,
    icosphere,
    load_asset_bundle,
    load_mesh,
    mass_properties,
    partition_mesh,
    read_articulation,
    save_mesh,
    write_asset_bundle,
)
from twinforge.assets.massprops import bounding_box_properties, combine
from twinforge.geometry import RigidTransform, random_rotation
from twinforge.kinematics import parse_urdf


def _tet_oracle(mesh, density):
    """Independent check by explicit per-tetrahedron formulas about the origin."""
    vol = 0.0
    first = np.zeros(3)
    second = np.zeros((3, 3))
    for a, b, c in mesh.vertices[mesh.faces]:
        v = np.dot(a, np.cross(b, c)) / 6.0
        vol += v
        first += v * (a + b + c) / 4.0
        s = a + b + c
        # integral of x x^T over tetrahedron (0, a, b, c)
        second += v / 20.0 * (np.outer(a, a) + np.outer(b, b) + np.outer(c, c) + np.outer(s, s))
    com = first / vol
    cc = second - vol * np.outer(com, com)
    return vol, density * vol, com, density * (np.trace(cc) * np.eye(3) - cc)


def test_unit_cube_exact():
    p = mass_properties(box_mesh((1, 1, 1)), 1000.0)
    assert abs(p.volume - 1.0) < 1e-9
    assert abs(p.mass - 1000.0) < 1e-9
    np.testing.assert_allclose(p.center_of_mass, 0, atol=1e-9)
    np.testing.assert_allclose(p.inertia, np.eye(3) * 1000 / 6, atol=1e-9)


def test_icosphere_close_to_analytic_sphere():
    p = mass_properties(icosphere(0.1, 3), 500.0)
    mass = 500 * 4 / 3 * np.pi * 0.1**3
    assert abs(p.mass - mass) / mass < 0.01
    np.testing.assert_allclose(np.diag(p.inertia), 0.4 * mass * 0.01, rtol=0.02)


def test_cylinder_volume():
    p = mass_properties(cylinder_mesh(0.05, 0.2, segments=128), 1.0)
    assert p.volume == pytest.approx(np.pi * 0.05**2 * 0.2, rel=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_matches_tetrahedron_oracle(seed):
    rng = np.random.default_rng(seed)
    mesh = star_mesh(rng, center=rng.normal(size=3))
    got = mass_properties(mesh, 700.0)
    vol, mass, com, inertia = _tet_oracle(mesh, 700.0)
    assert got.volume == pytest.approx(vol, rel=1e-10)
    assert got.mass == pytest.approx(mass, rel=1e-10)
    np.testing.assert_allclose(got.center_of_mass, com, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(got.inertia, inertia, rtol=1e-8, atol=1e-10 * np.abs(inertia).max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.floats(0.05, 20.0))
def test_scale_laws(seed, s):
    mesh = star_mesh(np.random.default_rng(seed))
    a = mass_properties(mesh, 900.0)
    b = mass_properties(TriangleMesh(mesh.vertices * s, mesh.faces), 900.0)
    assert b.volume == pytest.approx(a.volume * s**3, rel=1e-6)
    assert b.mass == pytest.approx(a.mass * s**3, rel=1e-6)
    np.testing.assert_allclose(b.inertia, a.inertia * s**5, rtol=1e-6, atol=1e-6 * np.abs(a.inertia * s**5).max())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_translation_and_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    mesh = star_mesh(rng)
    a = mass_properties(mesh, 1.0)
    v = rng.uniform(-5, 5, 3)
    b = mass_properties(mesh.translated(v), 1.0)
    assert abs(a.volume - b.volume) < 1e-9
    np.testing.assert_allclose(b.center_of_mass, a.center_of_mass + v, atol=1e-9)
    np.testing.assert_allclose(b.inertia, a.inertia, atol=1e-9)
    r = random_rotation(rng)
    c = mass_properties(mesh.transformed(RigidTransform(r, np.zeros(3))), 1.0)
    np.testing.assert_allclose(c.inertia, r @ a.inertia @ r.T, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_inertia_psd_and_triangle_inequality(seed):
    p = mass_properties(star_mesh(np.random.default_rng(seed)), 1.0)
    m = np.sort(p.principal_moments())
    assert m[0] > 0
    assert m[0] + m[1] >= m[2] * (1 - 1e-12)


def test_inverted_mesh_flipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        p = mass_properties(box_mesh((1, 2, 3)).flipped(), 1.0)
    assert p.volume == pytest.approx(6.0)
    assert "inverted" in caplog.text


def test_open_mesh_rejected():
    box = box_mesh()
    open_box = TriangleMesh(box.vertices, box.faces[:-1])
    assert not open_box.is_watertight()
    with pytest.raises(NotWatertightError):
        mass_properties(open_box, 1.0)


def test_bounding_box_fallback():
    box = box_mesh((1, 2, 3), (1, 1, 1))
    a = bounding_box_properties(box, 2.0)
    b = mass_properties(box, 2.0)
    assert a.mass == pytest.approx(b.mass)
    np.testing.assert_allclose(a.inertia, b.inertia, atol=1e-12)
    np.testing.assert_allclose(a.center_of_mass, b.center_of_mass, atol=1e-12)


def test_combine_matches_union_integral():
    a = box_mesh((1, 1, 1), (0, 0, 0))
    b = box_mesh((1, 1, 1), (3, 0, 0))
    joint = mass_properties(TriangleMesh.merge([a, b]), 1.0)
    comb = combine([mass_properties(a, 1.0), mass_properties(b, 1.0)])
    np.testing.assert_allclose(comb.inertia, joint.inertia, atol=1e-9)
    np.testing.assert_allclose(comb.center_of_mass, joint.center_of_mass, atol=1e-12)


def _two_boxes():
    a = box_mesh((0.4, 0.3, 0.1), (0, 0, 0.5)).with_labels("drawer body")
    b = box_mesh((0.5, 0.4, 0.4), (0, 0, 0)).with_labels("main cabinet")
    return TriangleMesh.merge([a, b]), a, b


def test_partition_recovers_boxes():
    mesh, a, b = _two_boxes()
    mobile, base = partition_mesh(mesh, "drawer body", "main cabinet")
    np.testing.assert_array_equal(mobile.vertices, a.vertices)
    np.testing.assert_array_equal(mobile.faces, a.faces)
    np.testing.assert_array_equal(base.vertices, b.vertices)
    np.testing.assert_array_equal(base.faces, b.faces)
    assert len(mobile) + len(base) == len(mesh)
    assert mobile.area() + base.area() == pytest.approx(mesh.area(), rel=1e-12)


def test_partition_errors():
    mesh, a, _ = _two_boxes()
    with pytest.raises(ValueError, match="no faces"):
        partition_mesh(a, "drawer body", "main cabinet")
    with pytest.raises(ValueError, match="no face labels"):
        partition_mesh(TriangleMesh(mesh.vertices, mesh.faces), "drawer body", "main cabinet")


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_partition_conserves_faces_and_area(seed):
    rng = np.random.default_rng(seed)
    mesh = star_mesh(rng)
    labels = tuple(rng.choice(["door", "frame"], len(mesh)))
    if len(set(labels)) < 2:
        return
    mesh = TriangleMesh(mesh.vertices, mesh.faces, labels)
    m, b = partition_mesh(mesh, "door", "frame")
    assert len(m) + len(b) == len(mesh)
    assert m.area() + b.area() == pytest.approx(mesh.area(), rel=1e-12)


def test_obj_roundtrip_and_groups(tmp_path):
    mesh, _, _ = _two_boxes()
    rng = np.random.default_rng(0)
    mesh = TriangleMesh(mesh.vertices + rng.normal(0, 1e-3, mesh.vertices.shape), mesh.faces, mesh.face_labels)
    path = tmp_path / "m.obj"
    save_mesh(mesh, path)
    back = load_mesh(path)
    np.testing.assert_allclose(back.vertices, mesh.vertices, rtol=1e-7)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    assert back.face_labels == mesh.face_labels
    assert "g drawer body" in path.read_text()


def test_obj_parsing_details(tmp_path):
    path = tmp_path / "q.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -3\n")
    mesh = load_mesh(path)
    assert len(mesh) == 2  # quad fan-triangulated; the degenerate face is dropped
    assert mesh.face_labels is None
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nf 1 2 7\n")
    with pytest.raises(MeshFormatError, match="out of range"):
        load_mesh(bad)
    bad.write_text("v 0 0 zero\n")
    with pytest.raises(MeshFormatError, match="line 1"):
        load_mesh(bad)


def _drawer_asset():
    mesh, _, _ = _two_boxes()
    mobile, base = partition_mesh(mesh, "drawer body", "main cabinet")
    spec = ArticulationSpec("revolute", (0, 0, 1), (0.1, 0.0, 0.5), 0.0, np.pi / 2, "drawer body", "main cabinet")
    return InteractiveAsset({"drawer body": mobile, "main cabinet": base}, PhysicsProperties(600.0, 1e9, 0.3), spec)


def test_limit_serialization_contract():
    text = build_urdf(_drawer_asset(), "cabinet")
    assert 'lower="0"' in text
    assert 'upper="1.5707963"' in text


def test_unarticulated_asset_has_one_link():
    asset = InteractiveAsset({"mug": icosphere(0.05, 2)}, PhysicsProperties(1000.0, 1e9, 0.3))
    robot = parse_urdf(build_urdf(asset, "mug"))
    assert len(robot.links) == 1
    assert len(robot.joints) == 0


def test_reserved_and_duplicate_names():
    box = box_mesh()
    phys = PhysicsProperties(1000.0, 1e9, 0.3)
    with pytest.raises(AssetError, match="reserved"):
        build_urdf(InteractiveAsset({"world": box}, phys), "x")
    spec = ArticulationSpec("prismatic", (1, 0, 0), (0, 0, 0), 0.0, 0.2, "a b", "a_b")
    with pytest.raises(AssetError, match="unique"):
        build_urdf(InteractiveAsset({"a b": box, "a_b": box}, phys, spec), "x")


def test_non_finite_inertia_rejected():
    from twinforge.assets.massprops import MassProperties

    box = box_mesh()
    bad = MassProperties(1.0, 1.0, np.zeros(3), np.full((3, 3), np.nan))
    asset = InteractiveAsset({"part": box}, PhysicsProperties(1000.0, 1e9, 0.3), mass={"part": bad})
    with pytest.raises(AssetError, match="non-finite"):
        build_urdf(asset, "x")


def _assert_roundtrip(asset, name="obj"):
    robot = parse_urdf(build_urdf(asset, name))
    spec, mass = read_articulation(robot)
    assert spec.close_to(asset.articulation, 1e-6)
    for label, props in asset.mass.items():
        got = mass[label]
        assert got.mass == pytest.approx(props.mass, rel=1e-6)
        np.testing.assert_allclose(got.center_of_mass, props.center_of_mass, rtol=0, atol=1e-6)
        np.testing.assert_allclose(got.inertia, props.inertia, rtol=1e-6, atol=1e-6 * np.abs(props.inertia).max())


def test_drawer_roundtrip():
    asset = _drawer_asset()
    robot = parse_urdf(build_urdf(asset, "cabinet"))
    assert len(robot.links) == 2
    assert [j.type for j in robot.joints] == ["revolute"]
    _assert_roundtrip(asset, "cabinet")


@pytest.mark.parametrize("seed", range(10))
def test_random_asset_roundtrip(seed):
    _assert_roundtrip(random_articulated_asset(np.random.default_rng(seed)))


def test_bundle_layout_and_reload(tmp_path):
    asset = _drawer_asset()
    out = write_asset_bundle(asset, "cabinet", tmp_path)
    assert out == tmp_path / "asset" / "cabinet"
    assert (out / "model.urdf").exists()
    assert sorted(p.name for p in (out / "meshes").iterdir()) == ["drawer_body.obj", "main_cabinet.obj"]
    back = load_asset_bundle(out)
    assert back.articulation.close_to(asset.articulation, 0)
    assert back.physics == asset.physics
    for label in asset.parts:
        np.testing.assert_allclose(back.mass[label].inertia, asset.mass[label].inertia, rtol=1e-6)


def test_physics_validation():
    from twinforge.assets import ValidationError

    with pytest.raises(ValidationError) as err:
        PhysicsProperties(1000.0, 1e9, 0.7)
    assert err.value.field == "poisson_ratio"
    assert "(-1, 0.5)" in str(err.value)
    with pytest.raises(ValidationError, match="density"):
        PhysicsProperties(-5.0, 1e9, 0.3)

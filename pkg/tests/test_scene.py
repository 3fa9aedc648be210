import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_scene
from twinforge.geometry import RigidTransform, quat_to_matrix, random_rotation
from twinforge.plyio import PlyFormatError, load_splat_ply, save_splat_ply
from twinforge.scene import GaussianScene, GaussianSplat, covariance3d, transform_scene


def _splat(q=(1, 0, 0, 0), log_scale=(0, 0, 0)):
    return GaussianSplat(np.zeros(3), np.array(q, float), np.array(log_scale, float), 0.0, np.zeros((1, 3)), np.zeros(0))


def test_covariance_identity_and_diagonal():
    np.testing.assert_allclose(covariance3d(_splat()), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(covariance3d(_splat(log_scale=(np.log(2), 0, 0))), np.diag([4.0, 1, 1]), atol=1e-12)


def _explicit_rotation(q):
    w, x, y, z = np.asarray(q) / np.linalg.norm(q)
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ])


@pytest.mark.parametrize("seed", range(10))
def test_covariance_matches_explicit_triple_product(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=4)
    ls = rng.normal(size=3)
    r = _explicit_rotation(q)
    expected = r @ np.diag(np.exp(ls) ** 2) @ r.T
    cov = covariance3d(_splat(q, ls))
    np.testing.assert_allclose(cov, expected, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cov, cov.T, atol=0)
    assert np.all(np.linalg.eigvalsh(cov) > 0)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(cov)), np.sort(np.exp(ls) ** 2), rtol=1e-9)


def test_rigid_group_laws():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = RigidTransform(random_rotation(rng), rng.normal(size=3))
        b = RigidTransform(random_rotation(rng), rng.normal(size=3))
        p = rng.normal(size=3)
        ident = a.compose(a.inverse())
        np.testing.assert_allclose(ident.matrix(), np.eye(4), atol=1e-10)
        np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
        np.testing.assert_allclose(RigidTransform.identity().apply(p), p)
        np.testing.assert_allclose(RigidTransform.exp(a.log()).matrix(), a.matrix(), atol=1e-9)
        assert a.compose(b).is_valid()


def test_transform_identity_and_translation():
    rng = np.random.default_rng(2)
    s = random_scene(rng, 50, degree=1, feature_dim=4)
    assert transform_scene(s, RigidTransform.identity()).equals(s)
    moved = transform_scene(s, RigidTransform(np.eye(3), [0.1, 0, 0]))
    np.testing.assert_allclose(moved.positions, s.positions + [0.1, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(moved.rotations, s.rotations)
    np.testing.assert_array_equal(moved.sh, s.sh)
    np.testing.assert_array_equal(moved.features, s.features)


def test_transform_rotates_splat_frames():
    rng = np.random.default_rng(3)
    s = random_scene(rng, 20, degree=1)
    T = RigidTransform(random_rotation(rng), rng.normal(size=3))
    moved = transform_scene(s, T)
    for i in range(len(s)):
        np.testing.assert_allclose(covariance3d(moved[i]), T.rotation @ covariance3d(s[i]) @ T.rotation.T, atol=1e-12)
    np.testing.assert_array_equal(moved.sh[:, 0], s.sh[:, 0])


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_transform_is_group_action(degree):
    rng = np.random.default_rng(degree)
    s = random_scene(rng, 30, degree=degree)
    a = RigidTransform(random_rotation(rng), rng.normal(size=3))
    b = RigidTransform(random_rotation(rng), rng.normal(size=3))
    for policy in ("truncate", "keep"):
        two_step = transform_scene(transform_scene(s, a, policy), b, policy)
        one_step = transform_scene(s, b.compose(a), policy)
        for x, y in ((two_step.positions, one_step.positions), (two_step.sh, one_step.sh)):
            np.testing.assert_allclose(x, y, atol=1e-9)
        np.testing.assert_allclose(quat_to_matrix(two_step.rotations), quat_to_matrix(one_step.rotations), atol=1e-9)


def test_high_order_policies(caplog):
    rng = np.random.default_rng(4)
    s = random_scene(rng, 5, degree=2)
    T = RigidTransform(random_rotation(rng), np.zeros(3))
    assert transform_scene(s, T, "truncate").sh_degree == 1
    with caplog.at_level(logging.WARNING):
        kept = transform_scene(s, T, "keep")
    assert kept.sh_degree == 2
    np.testing.assert_array_equal(kept.sh[:, 4:], s.sh[:, 4:])
    assert "unrotated" in caplog.text


def test_label_table_validation():
    s = random_scene(np.random.default_rng(0), 3, feature_dim=2)
    with pytest.raises(ValueError, match="unit norm"):
        s.replace(label_table={"a": [1.0, 1.0]})
    with pytest.raises(ValueError, match="feature_dim"):
        s.replace(label_table={"a": [1.0, 0.0, 0.0]})


def test_scene_is_immutable():
    s = random_scene(np.random.default_rng(0), 3)
    with pytest.raises(ValueError):
        s.positions[0, 0] = 1.0


# --- PLY -------------------------------------------------------------------

def _write_raw_ply(path, names, rows):
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(rows)}"]
    header += [f"property float {n}" for n in names] + ["end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode())
        fh.write(np.asarray(rows, dtype="<f4").tobytes())


BASE_NAMES = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
              "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]


def test_load_single_zero_vertex(tmp_path):
    row = [0.0] * len(BASE_NAMES)
    row[BASE_NAMES.index("rot_0")] = 1.0
    _write_raw_ply(tmp_path / "a.ply", BASE_NAMES, [row])
    s = load_splat_ply(tmp_path / "a.ply", feature_dim=4)
    assert len(s) == 1
    np.testing.assert_array_equal(s.positions, [[0, 0, 0]])
    assert s.opacities[0] == 0.5
    assert s.feature_dim == 4 and not s.features.any()


def test_missing_property_is_named(tmp_path):
    names = [n for n in BASE_NAMES if n != "rot_3"]
    _write_raw_ply(tmp_path / "a.ply", names, [[0.0] * len(names)])
    with pytest.raises(PlyFormatError) as err:
        load_splat_ply(tmp_path / "a.ply")
    assert err.value.property == "rot_3"
    assert "rot_3" in str(err.value)


def test_inconsistent_sh_count(tmp_path):
    names = BASE_NAMES + ["f_rest_0", "f_rest_1"]
    _write_raw_ply(tmp_path / "a.ply", names, [[1.0] * len(names)])
    with pytest.raises(PlyFormatError, match="f_rest"):
        load_splat_ply(tmp_path / "a.ply")


def test_non_finite_rejected(tmp_path):
    row = [0.0] * len(BASE_NAMES)
    row[0] = np.nan
    row[BASE_NAMES.index("rot_0")] = 1.0
    _write_raw_ply(tmp_path / "a.ply", BASE_NAMES, [row])
    with pytest.raises(PlyFormatError, match="non-finite"):
        load_splat_ply(tmp_path / "a.ply")


def test_malformed_header(tmp_path):
    (tmp_path / "a.ply").write_bytes(b"ply\nformat ascii 1.0\nend_header\n")
    with pytest.raises(PlyFormatError, match="format"):
        load_splat_ply(tmp_path / "a.ply")


def test_unnormalized_quaternions_are_normalized(tmp_path, caplog):
    row = [0.0] * len(BASE_NAMES)
    row[BASE_NAMES.index("rot_0")] = 2.0
    _write_raw_ply(tmp_path / "a.ply", BASE_NAMES, [row])
    with caplog.at_level(logging.INFO):
        s = load_splat_ply(tmp_path / "a.ply")
    np.testing.assert_allclose(s.rotations, [[1, 0, 0, 0]], atol=1e-12)
    assert "normalized 1" in caplog.text


@pytest.mark.parametrize("degree,d", [(0, 0), (1, 3), (3, 16)])
def test_round_trip_1000(tmp_path, degree, d):
    s = random_scene(np.random.default_rng(degree), 1000, degree=degree, feature_dim=d, float32=True)
    save_splat_ply(s, tmp_path / "s.ply")
    back = load_splat_ply(tmp_path / "s.ply")
    assert back.equals(s)


def test_empty_scene_and_no_features(tmp_path):
    save_splat_ply(GaussianScene.empty(), tmp_path / "e.ply")
    assert len(load_splat_ply(tmp_path / "e.ply")) == 0
    s = random_scene(np.random.default_rng(0), 4, feature_dim=0, float32=True)
    save_splat_ply(s, tmp_path / "n.ply")
    header = (tmp_path / "n.ply").read_bytes().split(b"end_header")[0]
    assert b"feature_" not in header
    assert b"property float nx" in header


@settings(max_examples=25, deadline=None)
@given(n=st.integers(0, 40), degree=st.integers(0, 3), d=st.integers(0, 5), seed=st.integers(0, 2**31))
def test_round_trip_property(tmp_path_factory, n, degree, d, seed):
    path = tmp_path_factory.mktemp("ply") / "s.ply"
    s = random_scene(np.random.default_rng(seed), n, degree=degree, feature_dim=d, float32=True)
    save_splat_ply(s, path)
    assert load_splat_ply(path).equals(s)

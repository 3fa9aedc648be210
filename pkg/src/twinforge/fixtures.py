"""Small synthetic scenes used by the tests, the acceptance suite and the CLI demo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from twinforge import sh as shlib
from twinforge.assets.mesh import TriangleMesh, box_mesh
from twinforge.camera import CameraModel
from twinforge.geometry import RigidTransform, matrix_to_quat, random_rotation, so3_exp
from twinforge.kinematics import Geometry, Inertial, Joint, Link, RobotModel
from twinforge.render import RenderOptions, rasterize
from twinforge.scene import GaussianScene
from twinforge.semantic import SupervisionView


def blob_scene(
    rng: np.random.Generator,
    center,
    n: int,
    radius: float,
    rgb=(0.6, 0.6, 0.6),
    scale=(0.015, 0.035),
    feature_dim: int = 0,
    opacity_logit: float = 2.0,
) -> GaussianScene:
    """A ball of ``n`` splats with random orientation and size."""
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.uniform(0, 1, n) ** (1 / 3)
    pos = np.asarray(center, dtype=float) + d * r[:, None]
    rot = np.stack([matrix_to_quat(random_rotation(rng)) for _ in range(n)]) if n else np.zeros((0, 4))
    sh = np.zeros((n, 1, 3))
    sh[:, 0, :] = shlib.rgb_to_dc(np.clip(np.asarray(rgb) + rng.normal(0, 0.05, (n, 3)), 0, 1))
    return GaussianScene(
        pos,
        rot,
        np.log(rng.uniform(*scale, (n, 3))),
        np.full(n, opacity_logit),
        sh,
        np.zeros((n, feature_dim)),
    )


@dataclass
class TwoClusterFixture:
    scene: GaussianScene
    views: list[SupervisionView]
    membership: NDArray[np.int64]  # class index per splat
    class_names: tuple[str, str]


def two_cluster_fixture(
    seed: int = 0, feature_dim: int = 8, n_per_blob: int = 120, size: int = 64, n_views: int = 3
) -> TwoClusterFixture:
    """Two disjoint blobs with orthogonal class embeddings and rendered ground-truth masks.

    A pixel is labeled with a blob's class when that blob rendered alone has
    alpha > 0.5 there and is more opaque than the other blob rendered alone.
    """
    rng = np.random.default_rng(seed)
    names = ("left_blob", "right_blob")
    blobs = [
        blob_scene(rng, (-0.22, 0.0, 2.0), n_per_blob, 0.12, (0.8, 0.3, 0.2), feature_dim=feature_dim),
        blob_scene(rng, (0.22, 0.0, 2.0), n_per_blob, 0.12, (0.2, 0.4, 0.8), feature_dim=feature_dim),
    ]
    table = {name: np.eye(feature_dim)[k] for k, name in enumerate(names)}
    scene = blobs[0].concat(blobs[1]).replace(label_table=table)
    membership = np.repeat([0, 1], n_per_blob)

    opts = RenderOptions()
    views = []
    for k in range(n_views):
        yaw = np.deg2rad(-20 + 40 * k / max(n_views - 1, 1))
        eye = np.array([0.0, 0.0, 2.0]) + 1.6 * np.array([np.sin(yaw), -0.15, -np.cos(yaw)])
        cam = CameraModel.look_at(eye, (0.0, 0.0, 2.0), (0.0, -1.0, 0.0), width=size, height=size, fov_x=np.deg2rad(35))
        alphas = np.stack([rasterize(b, cam, opts).alpha for b in blobs])
        mask = np.where(alphas.max(axis=0) > 0.5, np.argmax(alphas, axis=0), -1)
        views.append(SupervisionView(cam, mask, {0: names[0], 1: names[1]}))
    return TwoClusterFixture(scene, views, membership, names)


def mask_iou(a: NDArray[np.bool_], b: NDArray[np.bool_]) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 1.0


def _box_link(name: str, size, center, mass: float) -> Link:
    size = np.asarray(size, dtype=float)
    sq = size**2
    inertia = mass / 12.0 * np.diag([sq[1] + sq[2], sq[0] + sq[2], sq[0] + sq[1]])
    origin = RigidTransform(np.eye(3), center)
    geo = Geometry("box", origin, size=size)
    return Link(name, Inertial(mass, origin, inertia), (geo,), (geo,))


TOY_ARM_HOME = np.array([0.0, 0.1622, 0.146, 1.2627, 0.0, 0.0])


def toy_arm() -> RobotModel:
    """Six-joint desk-scale arm built from boxes, z up, end link ``tool``.

    At the zero configuration the upper arm points up and the forearm points
    along +x; the tool frame's z axis is the approach direction.
    """
    ident = np.eye(3)
    # tool z along the wrist's x axis
    tool_rot = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
    links = [
        _box_link("base", (0.12, 0.12, 0.08), (0, 0, 0.04), 2.0),
        _box_link("turret", (0.08, 0.08, 0.06), (0, 0, 0.03), 0.8),
        _box_link("upper_arm", (0.05, 0.05, 0.25), (0, 0, 0.125), 0.9),
        _box_link("forearm", (0.22, 0.04, 0.04), (0.11, 0, 0), 0.6),
        _box_link("wrist", (0.05, 0.035, 0.035), (0.025, 0, 0), 0.2),
        _box_link("hand", (0.03, 0.06, 0.03), (0.015, 0, 0), 0.15),
        Link("tool"),
    ]
    j = [
        Joint("waist", "revolute", "base", "turret", RigidTransform(ident, (0, 0, 0.08)), (0, 0, 1), -np.pi, np.pi, 20, 2),
        Joint("shoulder", "revolute", "turret", "upper_arm", RigidTransform(ident, (0, 0, 0.06)), (0, 1, 0), -1.8, 1.8, 20, 2),
        Joint("elbow", "revolute", "upper_arm", "forearm", RigidTransform(ident, (0, 0, 0.25)), (0, 1, 0), -2.6, 2.6, 15, 2),
        Joint("wrist_pitch", "revolute", "forearm", "wrist", RigidTransform(ident, (0.22, 0, 0)), (0, 1, 0), -2.6, 2.6, 5, 3),
        Joint("wrist_yaw", "revolute", "wrist", "hand", RigidTransform(ident, (0.05, 0, 0)), (0, 0, 1), -1.8, 1.8, 5, 3),
        Joint("wrist_roll", "revolute", "hand", "tool", RigidTransform(tool_rot, (0.07, 0, 0)), (0, 0, 1), -np.pi, np.pi, 5, 3),
    ]
    return RobotModel("toy_arm", links, j)


def points_scene(
    points: NDArray[np.float64],
    rgb=(0.5, 0.5, 0.5),
    scale: float = 0.01,
    feature: NDArray[np.float64] | None = None,
    opacity_logit: float = 3.0,
) -> GaussianScene:
    """Isotropic splats centered on the given points."""
    n = len(points)
    rgb = np.broadcast_to(np.asarray(rgb, dtype=float), (n, 3))
    sh = shlib.rgb_to_dc(rgb)[:, None, :]
    feats = np.zeros((n, 0)) if feature is None else np.tile(np.asarray(feature, dtype=float), (n, 1))
    rot = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    return GaussianScene(points, rot, np.full((n, 3), np.log(scale)), np.full(n, opacity_logit), sh, feats)


def toy_cabinet() -> TriangleMesh:
    """Cabinet body with one drawer front protruding along +x, faces labeled per part."""
    body = box_mesh((0.3, 0.3, 0.3), (0.0, 0.0, 0.15)).with_labels("main cabinet")
    drawer = box_mesh((0.05, 0.24, 0.1), (0.175, 0.0, 0.2)).with_labels("drawer body")
    return TriangleMesh.merge([drawer, body])


def toy_block(size: float = 0.04) -> TriangleMesh:
    """Cube resting on z = 0, the pick object of the toy tasks."""
    return box_mesh((size, size, size), (0.0, 0.0, size / 2)).with_labels("block")


# --- toy workspace for the command line pipeline -------------------------------------

TOY_ROBOT_CLASS = "a robot arm"
TOY_FEATURE_DIM = 4
# capture frame of the toy scan relative to the robot world frame
TOY_CAPTURE = RigidTransform(so3_exp([0.04, -0.03, 0.18]), [0.06, -0.04, 0.03])


def toy_world_scene(n_robot: int = 1500, seed: int = 0) -> tuple[GaussianScene, NDArray[np.int64]]:
    """Robot arm at its home pose on a checkered table, in the world frame.

    Returns the scene (features set to the class embeddings) and the class
    index of every splat (0 robot, 1 table).
    """
    from twinforge.demo.toy import table_scene
    from twinforge.registration.world import sample_robot_pointcloud

    emb = np.eye(TOY_FEATURE_DIM)
    robot_pts = sample_robot_pointcloud(toy_arm(), TOY_ARM_HOME, n_robot, seed)
    robot = points_scene(robot_pts, (0.3, 0.3, 0.35), 0.006, feature=emb[0])
    table = table_scene()
    table = table.replace(features=np.tile(emb[1], (len(table), 1)))
    scene = robot.concat(table).replace(label_table={TOY_ROBOT_CLASS: emb[0], "table": emb[1]})
    return scene, np.repeat([0, 1], [len(robot), len(table)])


def toy_camera(width: int = 80, height: int = 60) -> CameraModel:
    return CameraModel.look_at([0.75, 0.25, 0.55], [0.1, 0.0, 0.08], width=width, height=height, fov_x=np.deg2rad(60))


def write_toy_workspace(root) -> dict:
    """Write the inputs of every pipeline stage for a tiny scene under ``root``.

    The scan is stored in a displaced capture frame with blank features;
    masks come from rendering each class alone. Returns the ground truth the
    stages should recover, which is also written to ``expected.json``.
    """
    import json
    from pathlib import Path

    from twinforge.assets.mesh import save_mesh
    from twinforge.kinematics.urdf import robot_to_urdf
    from twinforge.plyio import save_label_table, save_splat_ply
    from twinforge.render.imageio import to_uint8, write_png
    from twinforge.scene import transform_scene
    from twinforge.semantic import save_supervision_view

    root = Path(root)
    (root / "views").mkdir(parents=True, exist_ok=True)
    world, membership = toy_world_scene()
    capture = transform_scene(world, TOY_CAPTURE)
    save_splat_ply(capture.replace(features=np.zeros((len(capture), 0)), label_table={}), root / "scene.ply")
    save_label_table(world.label_table, root / "labels.json")
    (root / "robot.urdf").write_text(robot_to_urdf(toy_arm()))
    save_mesh(toy_cabinet(), root / "cabinet.obj")

    opts = RenderOptions()
    names = {0: TOY_ROBOT_CLASS, 1: "table"}
    parts = [capture.subset(np.flatnonzero(membership == k)) for k in (0, 1)]
    capture_from_world = TOY_CAPTURE.inverse()
    for k, eye in enumerate(([0.7, -0.35, 0.5], [0.6, 0.4, 0.6])):
        cam = CameraModel.look_at(eye, [0.05, 0.0, 0.15], width=64, height=48, fov_x=np.deg2rad(60))
        cam = cam.with_pose(cam.world_to_camera @ capture_from_world)
        alphas = np.stack([rasterize(p, cam, opts).alpha for p in parts])
        mask = np.where(alphas.max(axis=0) > 0.5, np.argmax(alphas, axis=0), -1)
        save_supervision_view(SupervisionView(cam, mask, names), root / "views" / f"view{k}.png")

    gt = toy_camera()
    write_png(root / "camera_image.png", to_uint8(rasterize(world, gt, opts).color))
    init = gt.world_to_camera @ RigidTransform(so3_exp(np.deg2rad(3.0) * np.array([0.6, 0.8, 0.0])), [0.02, -0.015, 0.02])
    with open(root / "camera_init.json", "w") as fh:
        json.dump(init.to_list(), fh, indent=2)
        fh.write("\n")
    expected = {
        "scene_to_world": capture_from_world.to_list(),
        "camera_world_to_camera": gt.world_to_camera.to_list(),
        "camera": {"width": gt.width, "height": gt.height, "fov_x_deg": 60.0},
    }
    (root / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")
    return expected

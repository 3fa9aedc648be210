"""Command line entry point running the pipeline stages from one config file.

Every stage reads its inputs from the config (paths are relative to the
config file) or from the outputs of earlier stages under ``paths.output``:

    train-features   <out>/features/{scene.ply,labels.json,loss.jsonl}
    align            <out>/align/{scene.ply,labels.json,T_scene.json,icp_report.json}
    align-camera     <out>/camera/{pose.json,camera.json,trace.json}
    annotate         <out>/asset/<name>/{model.urdf,meshes/,physics.json,articulation.json}
    generate         <out>/dataset/...
    render           --out PNG

Exit status is 0 on success, 2 for configuration errors and 3 when a stage
fails; errors are also reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from twinforge.augment import AugmentationConfig
from twinforge.config import ConfigError, from_plain, to_plain
from twinforge.demo.runner import DemoConfig

log = logging.getLogger("twinforge")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


@dataclass(frozen=True)
class PathsConfig:
    scene: str = "scene.ply"  # splat scan in its capture frame
    label_table: str | None = "labels.json"  # class name -> embedding
    robot: str = "robot.urdf"
    assets: dict[str, str] = field(default_factory=dict)  # asset name -> OBJ mesh to annotate
    supervision: tuple[str, ...] = ()  # mask PNGs, each with a .json sidecar holding camera and class names
    output: str = "out"


@dataclass(frozen=True)
class FeatureStage:
    feature_dim: int = 4
    learning_rate: float = 0.05
    iterations: int = 300
    temperature: float = 0.07
    batch_pixels: int = 4096
    eval_every: int = 50


@dataclass(frozen=True)
class AlignStage:
    robot_class: str = "a robot arm"
    threshold: float = 0.5  # cosine similarity for selecting robot splats
    n_points: int = 4000  # samples on the robot model surface
    joint_config: tuple[float, ...] | None = None  # robot configuration during the scan; zeros when absent
    max_iterations: int = 60
    correspondence_cutoff: float = 0.25
    convergence_eps: float = 1e-9
    trim_fraction: float = 0.1


@dataclass(frozen=True)
class CameraStage:
    width: int = 80
    height: int = 60
    fov_x_deg: float = 60.0
    image: str | None = None  # real photo to align against
    init_pose: str | None = None  # world-to-camera 4x4 JSON
    max_iterations: int = 60
    step_size: float = 0.05
    pyramid_levels: int = 3
    loss_tolerance: float = 1e-7


@dataclass(frozen=True)
class AnnotationStage:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = "TWINFORGE_API_KEY"
    model: str = "gpt-4o"
    max_retries: int = 2
    timeout: float = 60.0
    max_in_flight: int = 4
    backoff_initial: float = 1.0
    backoff_max: float = 30.0
    mock: bool = False
    mock_fixture: str | None = None  # JSON list of canned replies; the bundled set when absent
    resolution: int = 256


@dataclass(frozen=True)
class GenerationStage:
    episodes: int = 10
    workers: int = 1
    tasks: tuple[str, ...] = ("pick_place",)
    bindings: dict[str, dict[str, str]] = field(default_factory=dict)  # task -> role -> asset overrides
    camera_poses: tuple[str, ...] = ()  # world-to-camera JSONs; the aligned camera when empty
    demo: DemoConfig = field(default_factory=DemoConfig)


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    features: FeatureStage = field(default_factory=FeatureStage)
    align: AlignStage = field(default_factory=AlignStage)
    camera: CameraStage = field(default_factory=CameraStage)
    annotation: AnnotationStage = field(default_factory=AnnotationStage)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    generation: GenerationStage = field(default_factory=GenerationStage)
    base_seed: int = 0  # seeds every stage; overrides augmentation.base_seed
    log_level: str = "info"


class _Run:
    """Resolved configuration plus the directory relative paths start from."""

    def __init__(self, cfg: PipelineConfig, base: Path):
        self.cfg = cfg
        self.base = base

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base / q

    def require(self, p: str | None, key: str) -> Path:
        if p is None:
            raise ConfigError(key, "no path configured")
        q = self.path(p)
        if not q.exists():
            raise ConfigError(key, f"missing file {q}")
        return q

    @property
    def out(self) -> Path:
        return self.path(self.cfg.paths.output)


# --- config loading --------------------------------------------------------------


def load_config(path: str | None, overrides: dict | None = None) -> tuple[PipelineConfig, Path]:
    """Parse a YAML or JSON config (JSON is valid YAML); unknown keys are errors."""
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("--config", f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("--config", f"{p}: not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("--config", f"{p}: top level must be a mapping")
        base = p.resolve().parent
    cfg = from_plain(PipelineConfig, data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            cfg = replace(cfg, base_seed=value)
        elif key == "mock" and value:
            cfg = replace(cfg, annotation=replace(cfg.annotation, mock=True))
        elif key == "workers":
            cfg = replace(cfg, generation=replace(cfg.generation, workers=value))
        elif key == "episodes":
            cfg = replace(cfg, generation=replace(cfg.generation, episodes=value))
    if cfg.generation.workers < 1 or cfg.generation.episodes < 0:
        raise ConfigError("generation", "workers must be >= 1 and episodes >= 0")
    cfg = replace(cfg, augmentation=replace(cfg.augmentation, base_seed=cfg.base_seed))
    return cfg, base


# --- logging -----------------------------------------------------------------------


class _JsonLines(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {"time": round(record.created, 3), "level": record.levelname.lower(), "logger": record.name, "message": record.getMessage()}
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry)


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLines())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level.upper(), logging.INFO))


def _error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message, **extra}}) + "\n")


# --- shared stage helpers ------------------------------------------------------------


def _load_scene(run: _Run, scene_path: Path, labels_path: Path | None):
    from twinforge.plyio import load_label_table, load_splat_ply

    table = load_label_table(labels_path) if labels_path is not None and labels_path.exists() else None
    return load_splat_ply(scene_path, run.cfg.features.feature_dim, table)


def _input_scene(run: _Run, after: tuple[str, ...]):
    """The newest scene among earlier stage outputs, falling back to the configured scan."""
    for stage in after:
        p = run.out / stage / "scene.ply"
        if p.exists():
            return _load_scene(run, p, run.out / stage / "labels.json")
    labels = run.path(run.cfg.paths.label_table) if run.cfg.paths.label_table else None
    return _load_scene(run, run.require(run.cfg.paths.scene, "paths.scene"), labels)


def _save_scene(scene, directory: Path) -> None:
    from twinforge.plyio import save_label_table, save_splat_ply

    directory.mkdir(parents=True, exist_ok=True)
    save_splat_ply(scene, directory / "scene.ply")
    if scene.label_table:
        save_label_table(scene.label_table, directory / "labels.json")


def _camera(stage: CameraStage, world_to_camera):
    from twinforge.camera import CameraModel

    f = (stage.width / 2.0) / math.tan(math.radians(stage.fov_x_deg) / 2.0)
    return CameraModel(f, f, stage.width / 2.0, stage.height / 2.0, stage.width, stage.height, world_to_camera)


def _robot(run: _Run):
    from twinforge.kinematics import parse_urdf

    path = run.require(run.cfg.paths.robot, "paths.robot")
    return parse_urdf(path.read_text(encoding="utf-8")), path.parent


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_plain(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- commands --------------------------------------------------------------------------


def cmd_train_features(run: _Run, args) -> None:
    from twinforge.semantic import FeatureTrainConfig, load_supervision_view, train_features

    c = run.cfg.features
    if not run.cfg.paths.supervision:
        raise ConfigError("paths.supervision", "no supervision views configured")
    views = [load_supervision_view(run.require(p, f"paths.supervision[{i}]")) for i, p in enumerate(run.cfg.paths.supervision)]
    scene = _input_scene(run, ())
    train_cfg = FeatureTrainConfig(c.learning_rate, c.iterations, c.temperature, c.batch_pixels, run.cfg.base_seed)
    history: list = []
    trained = train_features(scene, views, train_cfg, history=history, eval_every=c.eval_every)
    out = run.out / "features"
    _save_scene(trained, out)
    (out / "loss.jsonl").write_text("".join(json.dumps({"iteration": i, "loss": loss}) + "\n" for i, loss in history))
    log.info("trained features: loss %.6g -> %.6g", history[0][1], history[-1][1])


def cmd_align(run: _Run, args) -> None:
    from twinforge.registration import IcpParams, align_world, write_pose_json

    c = run.cfg.align
    robot, urdf_dir = _robot(run)
    scene = _input_scene(run, ("features",))
    q = np.zeros(robot.dof) if c.joint_config is None else np.asarray(c.joint_config, dtype=float)
    params = IcpParams(c.max_iterations, c.correspondence_cutoff, c.convergence_eps, c.trim_fraction)
    aligned, result = align_world(
        scene, robot, q, params, robot_class=c.robot_class, threshold=c.threshold, n_points=c.n_points,
        seed=run.cfg.base_seed, base_dir=urdf_dir,
    )  # fmt: skip
    out = run.out / "align"
    _save_scene(aligned, out)
    write_pose_json(result.transform, out / "T_scene.json")
    _write_json(out / "icp_report.json", result.to_dict())
    log.info("aligned scene: rms %.6g after %d iterations", result.rms_residual, result.iterations_used)


def cmd_align_camera(run: _Run, args) -> None:
    from twinforge.registration import CamAlignParams, align_camera, read_pose_json, write_pose_json
    from twinforge.render.imageio import read_image

    c = run.cfg.camera
    image = run.require(args.image or c.image, "camera.image")
    init = read_pose_json(run.require(args.init_pose or c.init_pose, "camera.init_pose"))
    scene = _input_scene(run, ("align", "features"))
    real = read_image(image)
    cam0 = _camera(c, init)
    if real.shape[:2] != (c.height, c.width):
        raise ConfigError("camera", f"image is {real.shape[1]}x{real.shape[0]}, config says {c.width}x{c.height}")
    params = CamAlignParams(c.max_iterations, c.step_size, c.pyramid_levels, c.loss_tolerance)
    cam, loss, trace = align_camera(scene, real, cam0, params)
    out = run.out / "camera"
    out.mkdir(parents=True, exist_ok=True)
    write_pose_json(cam.world_to_camera, out / "pose.json")
    _write_json(out / "camera.json", cam.to_dict())
    _write_json(out / "trace.json", {"losses": trace.losses, "levels": trace.levels, "evaluations": trace.evaluations})
    log.info("camera aligned: loss %.6g -> %.6g", trace.losses[0], loss)


def _annotation_client(run: _Run):
    from twinforge.annotation import AnnotationClient, AnnotationClientConfig, HttpBackend, MockBackend, bundled_mock

    a = run.cfg.annotation
    if a.mock:
        backend = MockBackend.from_file(run.require(a.mock_fixture, "annotation.mock_fixture")) if a.mock_fixture else bundled_mock()
        return AnnotationClient(backend, "mock")
    cfg = AnnotationClientConfig(
        a.endpoint, a.api_key_env, a.model, a.max_retries, a.timeout, a.max_in_flight, a.backoff_initial, a.backoff_max
    )
    return AnnotationClient(HttpBackend(cfg), a.model)


def cmd_annotate(run: _Run, args) -> None:
    from twinforge.annotation import annotate_asset
    from twinforge.assets import load_mesh, write_asset_bundle

    assets = run.cfg.paths.assets
    names = [args.asset] if args.asset else sorted(assets)
    if not names:
        raise ConfigError("paths.assets", "no assets configured")
    client = _annotation_client(run)
    for name in names:
        if name not in assets:
            raise ConfigError("--asset", f"asset {name!r} is not listed under paths.assets")
        mesh = load_mesh(run.require(assets[name], f"paths.assets.{name}"))
        asset, proposal = annotate_asset(mesh, name, client, run.cfg.annotation.resolution)
        out = write_asset_bundle(asset, name, run.out)
        _write_json(out / "proposal.json", {"category": proposal.category, "joint_type": proposal.joint_type, "part_labels": list(proposal.part_labels)})
        log.info("annotated %s: %s, joint %s", name, proposal.category, proposal.joint_type)


def _generation_job(run: _Run):
    from twinforge.assets import load_asset_bundle
    from twinforge.demo import GenerationJob, SceneAsset, SceneState, default_task, toy_library
    from twinforge.registration import read_pose_json
    from twinforge.semantic import extract_splats_by_class

    g = run.cfg.generation
    robot, urdf_dir = _robot(run)
    scene = _input_scene(run, ("align", "features"))
    if run.cfg.align.robot_class in scene.label_table and scene.feature_dim:
        # the robot is drawn from its model each frame; drop its scanned splats
        idx, _ = extract_splats_by_class(scene, run.cfg.align.robot_class, run.cfg.align.threshold)
        scene = scene.subset(np.setdiff1d(np.arange(len(scene)), idx))
    poses = list(g.camera_poses)
    if not poses:
        aligned = run.out / "camera" / "pose.json"
        if not aligned.exists():
            raise ConfigError("generation.camera_poses", "no camera poses configured and no aligned camera found")
        poses = [str(aligned)]
    cameras = tuple(_camera(run.cfg.camera, read_pose_json(run.require(p, "generation.camera_poses"))) for p in poses)
    library = toy_library()
    for bundle in sorted((run.out / "asset").glob("*/model.urdf")):
        library[bundle.parent.name] = SceneAsset(load_asset_bundle(bundle.parent))
    tasks = []
    for name in g.tasks:
        try:
            task = default_task(name)
        except ValueError as exc:
            raise ConfigError("generation.tasks", str(exc)) from exc
        if name in g.bindings:
            task = replace(task, bindings={**task.bindings, **g.bindings[name]})
        tasks.append(task)
    state = SceneState(scene, cameras, library)
    return GenerationJob(state, robot, tuple(tasks), run.cfg.augmentation, g.demo, str(urdf_dir))


def cmd_generate(run: _Run, args) -> None:
    from twinforge.demo import generate_dataset

    job = _generation_job(run)
    g = run.cfg.generation
    report = generate_dataset(job, g.episodes, run.out / "dataset", g.workers)
    print(json.dumps(report.to_dict(), sort_keys=True))
    log.info("generated %d episodes, success rate %.3f", report.episodes, report.success_rate)


def cmd_render(run: _Run, args) -> None:
    from twinforge.registration import read_pose_json
    from twinforge.render import rasterize
    from twinforge.render.imageio import to_uint8, write_png

    pose = read_pose_json(run.require(args.camera_pose, "--camera-pose"))
    scene = _input_scene(run, ("align", "features"))
    image = rasterize(scene, _camera(run.cfg.camera, pose)).color
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_png(out, to_uint8(image))
    log.info("rendered %s", out)


def toy_config() -> dict:
    """Config for the workspace written by ``toy-fixture``."""
    from twinforge.fixtures import TOY_ARM_HOME, TOY_FEATURE_DIM

    home = [float(v) for v in TOY_ARM_HOME]
    return {
        "paths": {
            "scene": "scene.ply",
            "label_table": "labels.json",
            "robot": "robot.urdf",
            "assets": {"cabinet": "cabinet.obj"},
            "supervision": ["views/view0.png", "views/view1.png"],
            "output": "out",
        },
        "features": {"feature_dim": TOY_FEATURE_DIM, "iterations": 200},
        "align": {"joint_config": home, "n_points": 3000},
        "camera": {"width": 80, "height": 60, "fov_x_deg": 60.0, "image": "camera_image.png", "init_pose": "camera_init.json"},
        "generation": {"episodes": 2, "workers": 1, "tasks": ["pick_place"], "demo": {"home": list(home)}},
        "base_seed": 0,
    }


def cmd_toy_fixture(out_dir: str) -> None:
    from twinforge.fixtures import write_toy_workspace

    root = Path(out_dir)
    write_toy_workspace(root)
    (root / "config.yaml").write_text(yaml.safe_dump(toy_config(), sort_keys=False), encoding="utf-8")
    log.info("wrote toy workspace to %s", root)


COMMANDS = {
    "train-features": cmd_train_features,
    "align": cmd_align,
    "align-camera": cmd_align_camera,
    "annotate": cmd_annotate,
    "generate": cmd_generate,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config, YAML or JSON")
    common.add_argument("--seed", type=int, help="override base_seed")
    common.add_argument("--mock", action="store_true", help="use canned annotation replies instead of the network")
    common.add_argument("--workers", type=int, help="override generation.workers")
    common.add_argument("--print-config", action="store_true", help="print the fully defaulted config and exit")
    common.add_argument("--log-level", help="debug, info, warning or error")

    parser = argparse.ArgumentParser(prog="twinforge", description="Scan-to-simulation pipeline for robot demonstration data.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train-features", parents=[common], help="fit per-splat semantic features to labeled views")
    sub.add_parser("align", parents=[common], help="register the scan to the robot world frame")
    p = sub.add_parser("align-camera", parents=[common], help="refine a camera pose against a real image")
    p.add_argument("--image", help="real image, overrides camera.image")
    p.add_argument("--init-pose", help="initial world-to-camera JSON, overrides camera.init_pose")
    p = sub.add_parser("annotate", parents=[common], help="infer articulation and physics for an asset mesh")
    p.add_argument("--asset", help="asset name under paths.assets; all of them when omitted")
    p = sub.add_parser("generate", parents=[common], help="generate the demonstration dataset")
    p.add_argument("--episodes", type=int, help="override generation.episodes")
    p = sub.add_parser("render", parents=[common], help="render the current scene from one pose")
    p.add_argument("--camera-pose", required=True, help="world-to-camera JSON")
    p.add_argument("--out", required=True, help="output PNG")
    p = sub.add_parser("toy-fixture", help="write a tiny self-contained workspace and its config")
    p.add_argument("--out", required=True, help="directory to create")
    p.add_argument("--log-level", help="debug, info, warning or error")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "toy-fixture":
        _setup_logging(args.log_level or "info")
        try:
            cmd_toy_fixture(args.out)
        except OSError as exc:
            _error("stage", str(exc), command=args.command, type=type(exc).__name__)
            return EXIT_STAGE
        return EXIT_OK

    overrides = {"seed": args.seed, "mock": args.mock, "workers": args.workers, "episodes": getattr(args, "episodes", None)}
    try:
        cfg, base = load_config(args.config, overrides)
    except ConfigError as exc:
        _error("config", str(exc), path=exc.path)
        return EXIT_CONFIG
    if args.print_config:
        print(json.dumps(to_plain(cfg), indent=2))
        return EXIT_OK
    _setup_logging(args.log_level or cfg.log_level)
    run = _Run(cfg, base)
    try:
        COMMANDS[args.command](run, args)
    except ConfigError as exc:
        _error("config", str(exc), path=exc.path, command=args.command)
        return EXIT_CONFIG
    except Exception as exc:  # every stage failure maps to one exit code
        log.debug("stage failed", exc_info=True)
        _error("stage", str(exc), command=args.command, type=type(exc).__name__)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

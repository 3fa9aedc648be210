"""On-disk demonstration dataset: episode files, re-rendering and batch generation.

Layout::

    <out>/meta.json                      schema version, job snapshot, report, timestamps
    <out>/ep_000000/episode.json         header line, then one JSON line per frame
    <out>/ep_000000/meta.json            wall-clock generation time
    <out>/ep_000000/cam0_00000.png       one image per camera and frame

Everything except the two meta.json files is a pure function of the job and
the episode seed.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from twinforge.augment import AugmentationConfig
from twinforge.camera import CameraModel
from twinforge.config import from_plain, to_plain
from twinforge.demo.runner import (
    DemoConfig,
    Episode,
    Frame,
    ObjectState,
    Placement,
    make_composer,
    round_floats,
    run_task,
)
from twinforge.demo.tasks import TaskSpec
from twinforge.demo.world import PlacedObject, SceneState, yaw_pose
from twinforge.kinematics.model import RobotModel

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HEADER_KEYS = frozenset(
    {"schema_version", "id", "seed", "task", "placements", "augmentation", "success", "failure_phase", "num_frames", "camera_ids"}
)
FRAME_KEYS = frozenset({"index", "timestamp", "joint_config", "gripper", "action", "objects", "renders"})


class DatasetError(RuntimeError):
    pass


class SchemaVersionError(DatasetError):
    """The file was written by an incompatible version of the format."""


class MissingFrameError(DatasetError):
    def __init__(self, path: Path, frame_index: int, camera: str):
        super().__init__(f"frame {frame_index}: missing image {path}")
        self.path = path
        self.frame_index = frame_index
        self.camera = camera


class EpisodeFailed(DatasetError):
    """An episode raised instead of returning; aborts the whole run."""

    def __init__(self, episode_id: int, cause: str):
        super().__init__(f"episode {episode_id} failed: {cause}")
        self.episode_id = episode_id
        self.cause = cause

    def __reduce__(self):
        return (EpisodeFailed, (self.episode_id, self.cause))


def episode_dirname(episode_id: int) -> str:
    return f"ep_{episode_id:06}"


def _dumps(obj) -> str:
    return json.dumps(round_floats(to_plain(obj)), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _write_image(src, dst: Path) -> None:
    if isinstance(src, np.ndarray):
        Image.fromarray(src).save(dst, format="PNG")
    elif Path(src).resolve() != dst.resolve():
        shutil.copyfile(src, dst)


def write_episode(episode: Episode, directory: str | os.PathLike) -> Path:
    """Write the episode files into ``directory`` (created if needed)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cams = sorted(episode.frames[0].renders) if episode.frames else []
    header = {
        "schema_version": SCHEMA_VERSION,
        "id": episode.id,
        "seed": episode.seed,
        "task": episode.task.to_dict(),
        "placements": {role: p.to_dict() for role, p in episode.placements.items()},
        "augmentation": episode.augmentation,
        "success": episode.success,
        "failure_phase": episode.failure_phase,
        "num_frames": len(episode.frames),
        "camera_ids": cams,
    }
    lines = [_dumps(header)]
    for i, f in enumerate(episode.frames):
        refs = {}
        for cam in sorted(f.renders):
            name = f"{cam}_{i:05}.png"
            _write_image(f.renders[cam], d / name)
            refs[cam] = name
        lines.append(
            _dumps(
                {
                    "index": i,
                    "timestamp": f.timestamp,
                    "joint_config": f.joint_config,
                    "gripper": f.gripper,
                    "action": {"dq": f.action_dq, "gripper": f.action_gripper},
                    "objects": {role: s.to_dict() for role, s in f.objects.items()},
                    "renders": refs,
                }
            )
        )
    _atomic_write(d / "episode.json", "\n".join(lines) + "\n")
    _atomic_write(d / "meta.json", _dumps({"generation_time": episode.generation_time}) + "\n")
    return d


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def read_episode(directory: str | os.PathLike) -> Episode:
    """Load an episode; image references come back as paths to existing files."""
    d = Path(directory)
    with open(d / "episode.json", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DatasetError(f"{d / 'episode.json'} is empty")
    header = json.loads(lines[0])
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"episode schema version {version!r}, this reader handles {SCHEMA_VERSION}")
    extra = sorted(set(header) - HEADER_KEYS)
    if extra:
        raise SchemaVersionError(f"episode header has fields {extra} unknown to schema version {SCHEMA_VERSION}")
    missing = sorted(HEADER_KEYS - set(header))
    if missing:
        raise DatasetError(f"episode header lacks {missing}")
    frames = []
    for line in lines[1:]:
        rec = json.loads(line)
        if set(rec) != FRAME_KEYS:
            raise SchemaVersionError(f"frame record fields {sorted(rec)} do not match schema version {SCHEMA_VERSION}")
        i = rec["index"]
        renders = {}
        for cam, name in rec["renders"].items():
            path = d / name
            if not path.is_file():
                raise MissingFrameError(path, i, cam)
            renders[cam] = path
        frames.append(
            Frame(
                rec["timestamp"],
                np.array(rec["joint_config"], dtype=float),
                rec["gripper"],
                np.array(rec["action"]["dq"], dtype=float),
                rec["action"]["gripper"],
                {role: ObjectState.from_dict(s) for role, s in rec["objects"].items()},
                renders,
            )
        )
    if len(frames) != header["num_frames"]:
        raise DatasetError(f"header announces {header['num_frames']} frames, found {len(frames)}")
    gen_time = None
    meta = d / "meta.json"
    if meta.is_file():
        gen_time = json.loads(meta.read_text(encoding="utf-8")).get("generation_time")
    placements = {
        role: Placement(p["asset"], tuple(p["position"]), p["yaw"], p["scale"]) for role, p in header["placements"].items()
    }
    cameras = [CameraModel.from_dict(c) for c in header["augmentation"]["cameras"]]
    return Episode(
        header["id"],
        header["seed"],
        TaskSpec.from_dict(header["task"]),
        placements,
        header["augmentation"],
        cameras,
        frames,
        header["success"],
        header["failure_phase"],
        gen_time,
    )


def final_objects(episode: Episode, state: SceneState) -> dict[str, PlacedObject]:
    """The objects as recorded in the last frame, rebuilt against the asset library."""
    base = placed_objects(episode, state)
    last = episode.frames[-1].objects
    return {role: last[role].apply(obj) for role, obj in base.items()}


def placed_objects(episode: Episode, state: SceneState) -> dict[str, PlacedObject]:
    """The objects as initially placed in the episode."""
    out = {}
    for role, p in episode.placements.items():
        item = state.library[p.asset]
        out[role] = PlacedObject(p.asset, item, yaw_pose(p.yaw, p.position), p.scale)
    return out


def rerender_frame(
    episode: Episode, frame_index: int, state: SceneState, robot: RobotModel, base_dir: str | os.PathLike | None = None
) -> dict[str, NDArray[np.uint8]]:
    """Render one recorded frame again from the stored cameras, states and augmentation snapshot."""
    aug = from_plain(AugmentationConfig, episode.augmentation["config"])
    base = placed_objects(episode, state)
    composer = make_composer(state, robot, base, aug, episode.seed, base_dir)
    frame = episode.frames[frame_index]
    objects = {role: frame.objects[role].apply(obj) for role, obj in base.items()}
    images = composer.render(episode.cameras, frame.joint_config, objects)
    return {f"cam{k}": im for k, im in enumerate(images)}


def load_image(ref) -> NDArray[np.uint8]:
    if isinstance(ref, np.ndarray):
        return ref
    with Image.open(ref) as im:
        return np.asarray(im.convert("RGB"))


@dataclass(frozen=True, eq=False)
class GenerationJob:
    """Everything needed to produce episodes; must be picklable for worker processes."""

    state: SceneState
    robot: RobotModel
    tasks: tuple[TaskSpec, ...]  # episode i runs tasks[i % len(tasks)]
    aug: AugmentationConfig = field(default_factory=AugmentationConfig)
    demo: DemoConfig = field(default_factory=DemoConfig)
    base_dir: str | None = None  # where robot mesh paths are resolved

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("generation job has no tasks")
        for t in self.tasks:
            t.check_assets(self.state.library)

    def snapshot(self) -> dict:
        return {
            "robot": self.robot.name,
            "tasks": [t.to_dict() for t in self.tasks],
            "augmentation": to_plain(self.aug),
            "demo": to_plain(self.demo),
        }


@dataclass
class TaskStats:
    episodes: int = 0
    successes: int = 0
    total_time: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    @property
    def mean_generation_time(self) -> float:
        return self.total_time / self.episodes if self.episodes else 0.0


@dataclass
class GenerationReport:
    per_task: dict[str, TaskStats] = field(default_factory=dict)
    failed: list[dict] = field(default_factory=list)  # {"id", "task", "failure_phase"} of unsuccessful episodes

    @property
    def episodes(self) -> int:
        return sum(s.episodes for s in self.per_task.values())

    @property
    def successes(self) -> int:
        return sum(s.successes for s in self.per_task.values())

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    @property
    def mean_generation_time(self) -> float:
        n = self.episodes
        return sum(s.total_time for s in self.per_task.values()) / n if n else 0.0

    def add(self, task: str, success: bool, seconds: float, episode_id: int, failure_phase: str | None) -> None:
        s = self.per_task.setdefault(task, TaskStats())
        s.episodes += 1
        s.successes += int(success)
        s.total_time += seconds
        if not success:
            self.failed.append({"id": episode_id, "task": task, "failure_phase": failure_phase})

    def to_dict(self) -> dict:
        return {
            "episodes": self.episodes,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "mean_generation_time": self.mean_generation_time,
            "per_task": {
                name: {
                    "episodes": s.episodes,
                    "successes": s.successes,
                    "success_rate": s.success_rate,
                    "mean_generation_time": s.mean_generation_time,
                }
                for name, s in sorted(self.per_task.items())
            },
            "failed": sorted(self.failed, key=lambda f: f["id"]),
        }


_JOB: GenerationJob | None = None
_OUT: Path | None = None


def _init_worker(job: GenerationJob, out: Path) -> None:
    global _JOB, _OUT
    _JOB, _OUT = job, out


def _generate_one(i: int) -> tuple[int, str, bool, float, str | None]:
    job = _JOB
    task = job.tasks[i % len(job.tasks)]
    try:
        ep = run_task(job.state, task, job.robot, job.aug, job.aug.base_seed + i, job.demo, episode_id=i, base_dir=job.base_dir)
        write_episode(ep, _OUT / episode_dirname(i))
    except Exception as exc:  # reported with the episode id, then the run stops
        raise EpisodeFailed(i, f"{type(exc).__name__}: {exc}") from None
    log.info("episode %d (%s) success=%s %.2fs", i, task.name, ep.success, ep.generation_time)
    return i, task.name, ep.success, ep.generation_time, ep.failure_phase


def generate_dataset(job: GenerationJob, n_episodes: int, out_dir: str | os.PathLike, workers: int = 1) -> GenerationReport:
    """Generate ``n_episodes`` with seeds base_seed + i and write them under ``out_dir``.

    Unsuccessful episodes are written and counted like any other. An
    exception inside an episode stops the run with :class:`EpisodeFailed`.
    """
    if n_episodes < 0:
        raise ValueError("n_episodes must be >= 0")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise DatasetError(f"output directory {out} is not writable: {exc}") from exc

    started = time.time()
    report = GenerationReport()
    if workers == 1 or n_episodes <= 1:
        _init_worker(job, out)
        results = map(_generate_one, range(n_episodes))
        for r in results:
            report.add(r[1], r[2], r[3], r[0], r[4])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(job, out)) as pool:
            try:
                for r in pool.map(_generate_one, range(n_episodes)):
                    report.add(r[1], r[2], r[3], r[0], r[4])
            except BaseException:
                pool.shutdown(wait=True, cancel_futures=True)
                raise
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": job.snapshot(),
        "report": report.to_dict(),
        "started_at": started,
        "finished_at": time.time(),
    }
    _atomic_write(out / "meta.json", json.dumps(to_plain(meta), sort_keys=True, indent=2) + "\n")
    return report

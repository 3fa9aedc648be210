"""Scripted demonstrations in the aligned scene and the dataset they are stored in."""

from twinforge.demo.dataset import (
    DatasetError,
    EpisodeFailed,
    GenerationJob,
    GenerationReport,
    MissingFrameError,
    SchemaVersionError,
    final_objects,
    generate_dataset,
    load_image,
    placed_objects,
    read_episode,
    rerender_frame,
    write_episode,
)
from twinforge.demo.runner import DemoConfig, Episode, Frame, ObjectState, Placement, run_task
from twinforge.demo.tasks import TASK_NAMES, Phase, TaskSpec, default_task, evaluate_success
from twinforge.demo.toy import toy_library, toy_scene_state
from twinforge.demo.world import PlacedObject, PlacementRejected, SceneAsset, SceneState, attach_object

__all__ = [
    "TASK_NAMES",
    "DatasetError",
    "DemoConfig",
    "Episode",
    "EpisodeFailed",
    "Frame",
    "GenerationJob",
    "GenerationReport",
    "MissingFrameError",
    "ObjectState",
    "Phase",
    "PlacedObject",
    "Placement",
    "PlacementRejected",
    "SceneAsset",
    "SceneState",
    "SchemaVersionError",
    "TaskSpec",
    "attach_object",
    "default_task",
    "evaluate_success",
    "final_objects",
    "generate_dataset",
    "load_image",
    "placed_objects",
    "read_episode",
    "rerender_frame",
    "run_task",
    "toy_library",
    "toy_scene_state",
    "write_episode",
]

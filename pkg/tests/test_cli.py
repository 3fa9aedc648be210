from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from twinforge.cli import PipelineConfig, main
from twinforge.config import to_plain
from twinforge.demo import read_episode

STAGES = [["train-features"], ["align"], ["align-camera"], ["annotate", "--mock"], ["generate"]]


def _err(capsys) -> dict:
    lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith('{"error"')]
    assert len(lines) == 1
    return json.loads(lines[0])["error"]


def _rot_err_deg(a, b) -> float:
    r = np.asarray(a)[:3, :3] @ np.asarray(b)[:3, :3].T
    return math.degrees(math.acos(np.clip((np.trace(r) - 1) / 2, -1, 1)))


def _tree(root: Path, skip=("meta.json",)) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.yaml"
    assert main(["align", "--config", str(missing)]) == 2
    err = _err(capsys)
    assert err["kind"] == "config"
    assert str(missing) in err["message"]


def test_print_config_is_fully_defaulted(capsys):
    assert main(["generate", "--print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == to_plain(PipelineConfig())
    assert set(printed) == {"paths", "features", "align", "camera", "annotation", "augmentation", "generation", "base_seed", "log_level"}


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"base_seed": 3, "generation": {"workers": 1, "episodes": 5}}))
    assert main(["generate", "--config", str(cfg), "--seed", "11", "--workers", "2", "--episodes", "7", "--mock", "--print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["base_seed"] == 11
    assert printed["augmentation"]["base_seed"] == 11
    assert printed["generation"]["workers"] == 2
    assert printed["generation"]["episodes"] == 7
    assert printed["annotation"]["mock"] is True


def test_json_config_accepted(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"features": {"iterations": 12}}))
    assert main(["train-features", "--config", str(cfg), "--print-config"]) == 0
    assert json.loads(capsys.readouterr().out)["features"]["iterations"] == 12


@pytest.mark.parametrize(
    "data, path",
    [
        ({"featurez": {}}, ""),
        ({"features": {"iterations": 10, "lr": 0.1}}, "features"),
        ({"generation": {"demo": {"control_rate": 20, "bogus": 1}}}, "generation.demo"),
        ({"features": {"iterations": "many"}}, "features.iterations"),
        ({"generation": {"workers": 0}}, "generation"),
    ],
)
def test_bad_config_exit_2(tmp_path, capsys, data, path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump(data))
    assert main(["align", "--config", str(cfg)]) == 2
    assert _err(capsys)["path"] == path


def test_missing_input_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"paths": {"scene": "absent.ply"}}))
    assert main(["align", "--config", str(cfg)]) == 2
    err = _err(capsys)
    assert err["path"] == "paths.robot"
    assert str(tmp_path / "robot.urdf") in err["message"]


def test_stage_failure_exit_3(tmp_path, capsys):
    assert main(["toy-fixture", "--out", str(tmp_path)]) == 0
    cfg = yaml.safe_load((tmp_path / "config.yaml").read_text())
    cfg["align"]["robot_class"] = "a flying saucer"  # not in the label table
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(cfg))
    capsys.readouterr()
    assert main(["align", "--config", str(tmp_path / "bad.yaml")]) == 3
    err = _err(capsys)
    assert err["kind"] == "stage"
    assert err["command"] == "align"


def test_logs_are_json_lines(tmp_path, capsys):
    assert main(["toy-fixture", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().err.splitlines()
    assert lines
    for line in lines:
        entry = json.loads(line)
        assert {"time", "level", "logger", "message"} <= set(entry)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    assert main(["toy-fixture", "--out", str(root)]) == 0
    cfg = str(root / "config.yaml")
    t0 = time.perf_counter()
    for stage in STAGES:
        assert main([*stage, "--config", cfg]) == 0, stage
    return root, cfg, time.perf_counter() - t0


@pytest.mark.slow
def test_toy_pipeline_smoke(toy_run):
    root, _, elapsed = toy_run
    assert elapsed < 300
    expected = json.loads((root / "expected.json").read_text())
    t_scene = json.loads((root / "out/align/T_scene.json").read_text())
    assert _rot_err_deg(t_scene, expected["scene_to_world"]) < 1.0
    assert np.linalg.norm(np.asarray(t_scene)[:3, 3] - np.asarray(expected["scene_to_world"])[:3, 3]) < 0.005
    pose = json.loads((root / "out/camera/pose.json").read_text())
    init = json.loads((root / "camera_init.json").read_text())
    gt = expected["camera_world_to_camera"]
    # the refined pose must be closer to the ground truth than the start
    assert _rot_err_deg(pose, gt) < 0.5 * _rot_err_deg(init, gt)
    assert _rot_err_deg(pose, gt) < 1.0
    assert np.linalg.norm(np.asarray(pose)[:3, 3] - np.asarray(gt)[:3, 3]) < 0.01
    cam = json.loads((root / "out/camera/camera.json").read_text())
    assert (cam["width"], cam["height"]) == (expected["camera"]["width"], expected["camera"]["height"])

    losses = [json.loads(l)["loss"] for l in (root / "out/features/loss.jsonl").read_text().splitlines()]
    assert losses[-1] < losses[0]
    bundle = root / "out/asset/cabinet"
    for name in ("model.urdf", "physics.json", "articulation.json"):
        assert (bundle / name).is_file()

    meta = json.loads((root / "out/dataset/meta.json").read_text())
    assert meta["report"]["episodes"] == 2
    assert meta["report"]["success_rate"] == 1.0
    ep = read_episode(root / "out/dataset/ep_000000")
    assert ep.success and ep.frames


@pytest.mark.slow
def test_toy_pipeline_idempotent(toy_run):
    root, cfg, _ = toy_run
    before = _tree(root / "out")
    for stage in STAGES:
        assert main([*stage, "--config", cfg]) == 0, stage
    after = _tree(root / "out")
    assert before.keys() == after.keys()
    changed = [k for k in before if before[k] != after[k]]
    assert changed == []
    meta = json.loads((root / "out/dataset/meta.json").read_text())
    assert {"started_at", "finished_at"} <= set(meta)


@pytest.mark.slow
def test_render_command(toy_run, tmp_path):
    root, cfg, _ = toy_run
    out = tmp_path / "frame.png"
    assert main(["render", "--config", cfg, "--camera-pose", str(root / "out/camera/pose.json"), "--out", str(out)]) == 0
    from twinforge.render.imageio import read_image

    img = read_image(out)
    assert img.shape == (60, 80, 3)
    assert img.std() > 0.01

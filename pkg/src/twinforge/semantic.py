"""Per-splat semantic features trained against class embeddings.

Rendered features are blended with the photometric weights, which stay frozen
during training. Each labeled pixel contributes a softmax cross-entropy over
cosine similarities to every class embedding, scaled by a temperature.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from twinforge.camera import CameraModel
from twinforge.render import RenderOptions, rasterize
from twinforge.render.imageio import read_mask_png, write_mask_png
from twinforge.scene import GaussianScene

log = logging.getLogger(__name__)

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class SupervisionView:
    camera: CameraModel
    mask: NDArray[np.int64]  # (H, W), -1 is unlabeled
    class_ids: dict[int, str]

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.shape != (self.camera.height, self.camera.width):
            raise ValueError(f"mask shape {mask.shape} does not match camera {self.camera.height}x{self.camera.width}")
        ids = {int(k): str(v) for k, v in self.class_ids.items()}
        present = set(np.unique(mask[mask >= 0]).tolist())
        missing = present - set(ids)
        if missing:
            raise ValueError(f"mask ids without class names: {sorted(missing)}")
        mask = mask.astype(np.int64)
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "class_ids", ids)


@dataclass(frozen=True)
class FeatureTrainConfig:
    learning_rate: float = 0.05
    iterations: int = 500
    temperature: float = 0.07
    batch_pixels: int = 4096
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "iterations", "temperature", "batch_pixels"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def save_supervision_view(view: SupervisionView, mask_path: str | os.PathLike) -> None:
    """Write the mask as 16-bit PNG plus a ``.json`` sidecar with class names and camera."""
    write_mask_png(mask_path, view.mask)
    sidecar = {"class_ids": {str(k): v for k, v in view.class_ids.items()}, "camera": view.camera.to_dict()}
    with open(os.fspath(mask_path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_supervision_view(mask_path: str | os.PathLike, camera: CameraModel | None = None) -> SupervisionView:
    with open(os.fspath(mask_path) + ".json") as fh:
        sidecar = json.load(fh)
    if camera is None:
        if "camera" not in sidecar:
            raise ValueError(f"{mask_path}: sidecar has no camera and none was given")
        camera = CameraModel.from_dict(sidecar["camera"])
    return SupervisionView(camera, read_mask_png(mask_path), sidecar["class_ids"])


@dataclass
class _ViewData:
    weights: sparse.csr_matrix  # (labeled pixels, splats)
    targets: NDArray[np.int64]  # class index into the label order


def _class_order(scene: GaussianScene) -> tuple[list[str], NDArray[np.float64]]:
    names = list(scene.label_table)
    return names, np.stack([scene.label_table[n] for n in names])


def _prepare_views(scene, views, names, opts) -> list[_ViewData]:
    col = {n: i for i, n in enumerate(names)}
    out = []
    for view in views:
        flat = view.mask.ravel()
        lut = np.full(max(view.class_ids, default=-1) + 2, -1, dtype=np.int64)
        for cid, name in view.class_ids.items():
            if name not in col:
                raise ValueError(f"class {name!r} is not in the scene's label table")
            lut[cid] = col[name]
        labeled = np.flatnonzero(flat >= 0)
        if labeled.size == 0:
            continue
        r = rasterize(scene, view.camera, opts, return_weights=True)
        pix, idx, w = r.weights
        n_pix = view.camera.width * view.camera.height
        full = sparse.csr_matrix((w, (pix, idx)), shape=(n_pix, len(scene)))
        out.append(_ViewData(full[labeled], lut[flat[labeled]]))
    return out


def _loss_and_grad(
    feats: NDArray[np.float64], data: _ViewData, rows: NDArray[np.int64] | None, emb, tau
) -> tuple[float, NDArray[np.float64], int]:
    """Summed loss and gradient w.r.t. splat features over the selected rows."""
    w = data.weights if rows is None else data.weights[rows]
    y = data.targets if rows is None else data.targets[rows]
    f = w @ feats  # (P, d)
    norm = np.linalg.norm(f, axis=1)
    inv = 1.0 / np.maximum(norm, _NORM_EPS)
    u = f * inv[:, None]
    cos = u @ emb.T  # (P, K)
    z = cos / tau
    z -= z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(y)
    loss = -logp[np.arange(n), y].sum()
    dcos = np.exp(logp)
    dcos[np.arange(n), y] -= 1.0
    dcos /= tau
    # d cos_k / d f = (e_k - cos_k u) / |f|
    g_f = (dcos @ emb - (dcos * cos).sum(axis=1, keepdims=True) * u) * inv[:, None]
    g_f[norm < _NORM_EPS] = 0.0
    return float(loss), np.asarray(w.T @ g_f), n


def _check(scene: GaussianScene, views: list[SupervisionView]) -> None:
    if not scene.label_table:
        raise ValueError("empty label table")
    if scene.feature_dim < 2:
        raise ValueError(f"feature training needs feature_dim >= 2, scene has {scene.feature_dim}")
    d = next(iter(scene.label_table.values())).size
    if d != scene.feature_dim:
        raise ValueError(f"embedding dimension {d} does not match scene feature_dim {scene.feature_dim}")
    if not any((v.mask >= 0).any() for v in views):
        raise ValueError("zero labeled pixels")


def feature_loss(
    scene: GaussianScene, views: list[SupervisionView], temperature: float = 0.07, opts: RenderOptions | None = None
) -> float:
    """Full-batch mean loss over all labeled pixels."""
    _check(scene, views)
    names, emb = _class_order(scene)
    data = _prepare_views(scene, views, names, opts or RenderOptions())
    total, count = 0.0, 0
    for vd in data:
        loss, _, n = _loss_and_grad(scene.features, vd, None, emb, temperature)
        total += loss
        count += n
    return total / count


def train_features(
    scene: GaussianScene,
    views: list[SupervisionView],
    cfg: FeatureTrainConfig = FeatureTrainConfig(),
    opts: RenderOptions | None = None,
    *,
    history: list | None = None,
    eval_every: int = 50,
) -> GaussianScene:
    """Optimize splat features with Adam on uniformly sampled labeled pixels.

    All-zero feature rows are replaced by a seeded random start since the
    cosine objective is undefined at the origin. Splats that receive no
    blending weight in any view keep their input features. When ``history`` is a list,
    the full-batch loss is appended every ``eval_every`` iterations and at the
    end, as ``(iteration, loss)`` pairs.
    """
    _check(scene, views)
    opts = opts or RenderOptions()
    names, emb = _class_order(scene)
    data = _prepare_views(scene, views, names, opts)
    rng = np.random.default_rng(cfg.seed)

    feats = np.array(scene.features)
    dead = ~np.any(feats != 0.0, axis=1)
    if dead.any():
        init = rng.standard_normal((int(dead.sum()), scene.feature_dim))
        feats[dead] = init / np.linalg.norm(init, axis=1, keepdims=True)

    seen = np.zeros(len(scene), dtype=bool)
    for vd in data:
        seen[vd.weights.indices] = True

    sizes = np.array([vd.weights.shape[0] for vd in data])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    batch = min(cfg.batch_pixels, total)

    def full_loss(f):
        return sum(_loss_and_grad(f, vd, None, emb, cfg.temperature)[0] for vd in data) / total

    m = np.zeros_like(feats)
    v = np.zeros_like(feats)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for it in range(cfg.iterations):
        if history is not None and it % eval_every == 0:
            history.append((it, full_loss(feats)))
        picks = np.sort(rng.choice(total, size=batch, replace=False))
        grad = np.zeros_like(feats)
        for k, vd in enumerate(data):
            sel = picks[(picks >= offsets[k]) & (picks < offsets[k + 1])] - offsets[k]
            if sel.size:
                grad += _loss_and_grad(feats, vd, sel, emb, cfg.temperature)[1]
        grad /= batch
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        mh = m / (1 - b1 ** (it + 1))
        vh = v / (1 - b2 ** (it + 1))
        feats -= cfg.learning_rate * mh / (np.sqrt(vh) + eps)
    feats[~seen] = scene.features[~seen]
    if history is not None:
        history.append((cfg.iterations, full_loss(feats)))
    log.info("trained features for %d splats over %d labeled pixels", len(scene), total)
    return scene.replace(features=feats)


def _cosine(x: NDArray[np.float64], e: NDArray[np.float64]) -> NDArray[np.float64]:
    norm = np.linalg.norm(x, axis=-1)
    return np.where(norm > _NORM_EPS, (x @ e) / np.maximum(norm, _NORM_EPS), 0.0)


def _embedding(scene: GaussianScene, class_name: str) -> NDArray[np.float64]:
    if class_name not in scene.label_table:
        raise KeyError(f"unknown class {class_name!r}")
    return scene.label_table[class_name]


def query_mask(
    scene: GaussianScene, camera: CameraModel, class_name: str, threshold: float, opts: RenderOptions | None = None
) -> NDArray[np.bool_]:
    """Pixels whose rendered feature has cosine >= threshold to the class and alpha > 0.5."""
    e = _embedding(scene, class_name)
    r = rasterize(scene, camera, opts, features=True)
    return (_cosine(r.feature, e) >= threshold) & (r.alpha > 0.5)


def argmax_class_map(scene: GaussianScene, camera: CameraModel, opts: RenderOptions | None = None) -> NDArray[np.int64]:
    """Per-pixel index into ``list(scene.label_table)`` of the most similar class; -1 where alpha <= 0.5."""
    names, emb = _class_order(scene)
    r = rasterize(scene, camera, opts, features=True)
    cos = np.stack([_cosine(r.feature, e) for e in emb], axis=-1)
    out = np.argmax(cos, axis=-1)
    out[r.alpha <= 0.5] = -1
    return out


def extract_splats_by_class(
    scene: GaussianScene, class_name: str, threshold: float
) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    e = _embedding(scene, class_name)
    idx = np.flatnonzero(_cosine(scene.features, e) >= threshold)
    return idx, scene.positions[idx].copy()

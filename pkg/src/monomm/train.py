"""Desk-scale training on synthetic scenes, checkpoints, and inference on frames."""

from __future__ import annotations

import copy
import csv
import io
import logging
import os
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .data.kitti import Frame, GroundTruthObject
from .data.preprocess import crop_top, frame_from_scene, hflip, resize
from .data.synth import SynthConfig, synth_scene
from .detect.anchors import AnchorStats
from .detect.losses import FrameTargets, build_targets, total_loss
from .model import MonoMM
from .optim import Adam, clip_grad_norm, cosine_lr
from .tensor import precision

log = logging.getLogger(__name__)

LOSS_COLUMNS = ("step", "lr", "total", "cls", "reg", "dep")
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def synth_config(cfg: RunConfig) -> SynthConfig:
    return SynthConfig(
        height=cfg.image_height + cfg.crop_top,
        width=cfg.image_width,
        focal=cfg.synth_focal,
        classes=tuple(cfg.classes),
        min_objects=cfg.synth_min_objects,
        max_objects=cfg.synth_max_objects,
        z_range=(cfg.synth_z_min, cfg.synth_z_max),
    )


def scene_seeds(seed: int, n: int) -> list[int]:
    return [seed * 1000 + i for i in range(n)]


def make_scenes(cfg: RunConfig, n: int | None = None, seed: int | None = None) -> list[Frame]:
    scfg = synth_config(cfg)
    seed = cfg.seed if seed is None else seed
    return [frame_from_scene(synth_scene(s, scfg), cfg.lidar_density) for s in scene_seeds(seed, n or cfg.scenes)]


@dataclass
class InputTransform:
    """Maps model-input pixel coordinates back to the original frame."""

    crop: int
    sx: float
    sy: float
    width: int
    height: int

    def to_original(self, box):
        x1, y1, x2, y2 = box
        out = (x1 / self.sx, y1 / self.sy + self.crop, x2 / self.sx, y2 / self.sy + self.crop)
        return (
            float(np.clip(out[0], 0, self.width - 1)),
            float(np.clip(out[1], 0, self.height - 1)),
            float(np.clip(out[2], 0, self.width - 1)),
            float(np.clip(out[3], 0, self.height - 1)),
        )


def prepare_frame(frame: Frame, cfg: RunConfig) -> tuple[Frame, InputTransform]:
    """Crop the top rows and resize to the configured model input size."""
    _, h0, w0 = frame.image.shape
    crop = cfg.crop_top if h0 - cfg.crop_top > 0 else 0
    out = crop_top(frame, crop) if crop else frame
    _, h1, w1 = out.image.shape
    if (h1, w1) != (cfg.image_height, cfg.image_width):
        out = resize(out, cfg.image_height, cfg.image_width)
    return out, InputTransform(crop, cfg.image_width / w1, cfg.image_height / h1, w0, h0)


def build_model(cfg: RunConfig) -> MonoMM:
    with precision(cfg.precision):
        return MonoMM(cfg.model_config(), seed=cfg.seed)


@dataclass
class TrainResult:
    model: MonoMM
    config: RunConfig
    history: list[dict] = field(default_factory=list)


def _targets(model: MonoMM, frame: Frame, cfg: RunConfig) -> FrameTargets:
    return build_targets(model.anchors(), frame.objects, frame.P2, cfg.classes, frame.depth, 8,
                         cfg.pos_iou, cfg.neg_iou, cfg.n_bins, cfg.d_min, cfg.d_max)


def train(cfg: RunConfig, frames: list[Frame], steps: int | None = None,
          callback: Callable[[dict], None] | None = None) -> TrainResult:
    """Adam with cosine annealing; each step averages the loss over ``batch_size`` frames."""
    steps = cfg.total_steps() if steps is None else steps
    frames = [prepare_frame(f, cfg)[0] for f in frames]
    if not frames:
        raise ValueError("no training frames")
    model = build_model(cfg)
    model.anchor_stats = AnchorStats.fit(frames, model.cfg.anchors)
    rng = np.random.default_rng(cfg.seed)
    cache: dict[tuple[int, bool], tuple[np.ndarray, FrameTargets]] = {}
    history = []
    with precision(cfg.precision):
        dtype = np.float32 if cfg.precision == 32 else np.float64
        params = model.parameters()
        opt = Adam(params, (cfg.beta1, cfg.beta2), cfg.adam_eps, cfg.weight_decay)
        order: list[int] = []
        weights = cfg.loss_weights()
        for step in range(steps):
            lr = cosine_lr(step, steps, cfg.lr, cfg.lr_min)
            opt.zero_grad()
            sums = {"total": 0.0, "cls": 0.0, "reg": 0.0, "dep": 0.0}
            for _ in range(cfg.batch_size):
                if not order:
                    order = list(rng.permutation(len(frames)))
                idx = int(order.pop(0))
                flip = bool(cfg.hflip_prob > 0 and rng.random() < cfg.hflip_prob)
                if (idx, flip) not in cache:
                    f = hflip(frames[idx]) if flip else frames[idx]
                    cache[(idx, flip)] = (f.image.astype(dtype), _targets(model, f, cfg))
                image, targets = cache[(idx, flip)]
                out = model(image)
                loss, parts = total_loss(out.cls_logits, out.reg, out.depth_logits, targets, weights)
                (loss * (1.0 / cfg.batch_size)).backward()
                for k in sums:
                    sums[k] += parts[k] / cfg.batch_size
            clip_grad_norm(params, cfg.grad_clip)
            opt.step(lr)
            record = {"step": step, "lr": lr, **sums}
            history.append(record)
            if callback is not None:
                callback(record)
    return TrainResult(model, cfg, history)


def predict_frame(model: MonoMM, frame: Frame, cfg: RunConfig) -> list[GroundTruthObject]:
    """Detections for one frame, in the frame's original pixel coordinates."""
    prepared, tf = prepare_frame(frame, cfg)
    dtype = np.float32 if cfg.precision == 32 else np.float64
    with precision(cfg.precision):
        dets = model.detect(prepared.image.astype(dtype), prepared.P2, cfg.score_thr, cfg.nms_iou)
    objects = []
    for d in dets:
        obj = d.to_object(cfg.classes)
        obj.bbox2d = tf.to_original(obj.bbox2d)
        objects.append(obj)
    return objects


def write_loss_curve(history: list[dict], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOSS_COLUMNS)
        for rec in history:
            writer.writerow([rec["step"]] + [repr(float(rec[k])) for k in LOSS_COLUMNS[1:]])


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(model: MonoMM, cfg: RunConfig, path: str | os.PathLike) -> None:
    """Zip of the config text, every parameter, and the anchor statistics.

    Entry order and timestamps are fixed so identical weights give identical bytes.
    """
    entries = [("config.txt", cfg.to_text().encode())]
    entries += [(f"params/{name}.npy", _npy_bytes(p.data)) for name, p in model.named_parameters()]
    stats = model.anchor_stats
    entries += [("anchor_stats/mean.npy", _npy_bytes(stats.mean)), ("anchor_stats/var.npy", _npy_bytes(stats.var)),
                ("anchor_stats/count.npy", _npy_bytes(stats.count))]
    with zipfile.ZipFile(path, "w") as zf:
        for name, data in entries:
            info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)


def load_checkpoint(path: str | os.PathLike, expect: RunConfig | None = None) -> tuple[MonoMM, RunConfig]:
    """Rebuild the model from a checkpoint.

    If ``expect`` is given, its model-defining settings must match the
    checkpoint's, otherwise :class:`ConfigError` is raised.
    """
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise ConfigError(f"cannot open checkpoint {path}: {exc}") from None
    with zf:
        cfg = parse_config(zf.read("config.txt").decode(), source=f"{path}:config.txt")
        if expect is not None and expect.model_config() != cfg.model_config():
            raise ConfigError("checkpoint was trained with a different model configuration")
        model = build_model(cfg)
        state = {}
        for name in zf.namelist():
            if name.startswith("params/"):
                state[name[len("params/"):-len(".npy")]] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
        try:
            model.load_state_dict(state)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"checkpoint does not match its config: {exc}") from None
        arrays = {k: np.load(io.BytesIO(zf.read(f"anchor_stats/{k}.npy"))) for k in ("mean", "var", "count")}
        model.anchor_stats = AnchorStats(arrays["mean"], arrays["var"], arrays["count"])
    return model, cfg


def clone_model(model: MonoMM) -> MonoMM:
    return copy.deepcopy(model)

"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .backbone import BackboneConfig
from .dap import DapConfig
from .detect.anchors import AnchorConfig
from .detect.losses import LossWeights
from .dmb import DmbConfig
from .fmf import FmfConfig
from .model import ModelConfig


class ConfigError(ValueError):
    pass


# the five module combinations compared against each other, as config overrides
ABLATIONS = {
    "a": dict(enable_fmf=False, enable_dmb=False, fusion_mode="conv-sum"),  # plain neck, no state-space block
    "b": dict(enable_fmf=True, enable_dmb=False, fusion_mode="conv-sum"),
    "c": dict(enable_fmf=False, enable_dmb=True, fusion_mode="mamba"),  # DMB on visual features alone
    "d": dict(enable_fmf=False, enable_dmb=True, fusion_mode="conv-sum"),
    "e": dict(enable_fmf=True, enable_dmb=True, fusion_mode="conv-sum"),
}


@dataclass
class RunConfig:
    # run
    seed: int = 42
    precision: int = 32
    classes: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    image_height: int = 96
    image_width: int = 320
    crop_top: int = 0
    # ablation switches
    enable_fmf: bool = True
    enable_dmb: bool = True
    fusion_mode: str = "conv-sum"
    # backbone
    backbone_channels: tuple[int, ...] = (8, 16, 32, 32, 32)
    backbone_blocks: int = 1
    # multi-scale fusion
    fmf_mid: int = 16
    fmf_out: int = 32
    fmf_dw_kernels: tuple[int, ...] = (3, 5, 7)
    fmf_residual: str = "outside"
    # depth branch
    dap_layers: int = 2
    dap_channels: int = 32
    n_bins: int = 32
    d_min: float = 1.0
    d_max: float = 80.0
    # state-space block
    dmb_patch: tuple[int, ...] = (2, 2)
    dmb_width: int = 32
    dmb_inner: int = 64
    dmb_state: int = 8
    dmb_layers: int = 1
    dmb_conv_kernel: int = 4
    dmb_dcn_kernel: int = 3
    dmb_dcn_offset: float = 2.0
    dmb_dcn_mode: str = "1d"
    dmb_pos_embed: str = "learned"
    dmb_share_directions: bool = False
    dmb_norm_after_ssm: bool = True
    # anchors and head
    anchor_base: float = 16.0
    anchor_scales: int = 16
    anchor_ratios: tuple[float, ...] = (0.5, 1.0, 1.5)
    pos_iou: float = 0.5
    neg_iou: float = 0.4
    head_hidden: int = 32
    # losses
    w_cls: float = 1.0
    w_reg: float = 1.0
    w_dep: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    smooth_l1_delta: float = 1.0
    # optimisation
    lr: float = 5e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float = 10.0
    batch_size: int = 4
    steps: int = 500
    epochs: int = 0
    scenes: int = 8
    hflip_prob: float = 0.0
    # inference
    score_thr: float = 0.75
    nms_iou: float = 0.4
    # synthetic data
    synth_min_objects: int = 1
    synth_max_objects: int = 3
    synth_z_min: float = 6.0
    synth_z_max: float = 20.0
    synth_focal: float = 300.0
    lidar_density: float = 1.0

    def __post_init__(self):
        self.validate()

    @classmethod
    def full_size(cls, **overrides) -> "RunConfig":
        """Full-resolution model sizes and optimiser schedule (not trainable at desk scale)."""
        base = dict(
            image_height=288, image_width=1280, crop_top=100,
            backbone_channels=(32, 64, 128, 256, 256), backbone_blocks=2,
            fmf_mid=256, fmf_out=256, dap_layers=3, dap_channels=256, n_bins=96,
            dmb_patch=(4, 4), dmb_width=256, dmb_inner=512, dmb_state=16, dmb_layers=2,
            head_hidden=256, lr=1e-4, lr_min=0.0, batch_size=12, epochs=100, steps=0, scenes=3712,
            hflip_prob=0.5, synth_z_min=5.0, synth_z_max=60.0, synth_focal=720.0, lidar_density=0.05,
        )
        base.update(overrides)
        return cls(**base)

    def validate(self) -> None:
        try:
            self.model_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")
        if self.lr <= 0 or self.lr_min < 0 or self.lr_min > self.lr:
            raise ConfigError("need 0 <= lr_min <= lr and lr > 0")
        if self.batch_size < 1 or self.steps < 0 or self.epochs < 0 or self.scenes < 1:
            raise ConfigError("batch_size and scenes must be >= 1; steps and epochs >= 0")
        if not 0.0 < self.score_thr < 1.0 or not 0.0 < self.nms_iou <= 1.0:
            raise ConfigError("score_thr must be in (0, 1) and nms_iou in (0, 1]")
        if not 0.0 < self.lidar_density <= 1.0 or not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError("lidar_density must be in (0, 1] and hflip_prob in [0, 1]")
        if self.synth_min_objects < 0 or self.synth_max_objects < self.synth_min_objects:
            raise ConfigError("need 0 <= synth_min_objects <= synth_max_objects")
        if not 0 < self.synth_z_min < self.synth_z_max:
            raise ConfigError("need 0 < synth_z_min < synth_z_max")
        if self.crop_top < 0:
            raise ConfigError("crop_top must be >= 0")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=(self.image_height, self.image_width),
            classes=tuple(self.classes),
            backbone=BackboneConfig(tuple(self.backbone_channels), self.backbone_blocks),
            fmf=FmfConfig(self.fmf_mid, tuple(self.fmf_dw_kernels), self.fmf_out, 3, self.fmf_residual),
            dap=DapConfig(self.dap_layers, self.dap_channels, self.n_bins, self.d_min, self.d_max),
            dmb=DmbConfig(
                patch=tuple(self.dmb_patch), width=self.dmb_width, inner=self.dmb_inner, state=self.dmb_state,
                layers=self.dmb_layers, conv_kernel=self.dmb_conv_kernel, dcn_kernel=self.dmb_dcn_kernel,
                dcn_offset_range=self.dmb_dcn_offset, dcn_mode=self.dmb_dcn_mode,
                norm_after_ssm=self.dmb_norm_after_ssm, pos_embed=self.dmb_pos_embed,
                share_directions=self.dmb_share_directions,
            ),
            anchors=AnchorConfig(self.anchor_base, self.anchor_scales, 1.0 / 3.0, tuple(self.anchor_ratios),
                                 8, self.pos_iou, self.neg_iou),
            head_hidden=self.head_hidden,
            enable_fmf=self.enable_fmf,
            enable_dmb=self.enable_dmb,
            fusion_mode=self.fusion_mode,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.w_cls, self.w_reg, self.w_dep, self.focal_alpha, self.focal_gamma,
                           self.smooth_l1_delta)

    def total_steps(self) -> int:
        if self.epochs > 0:
            return self.epochs * math.ceil(self.scenes / self.batch_size)
        return self.steps

    # sklearn-style parameter access, so an estimator can nest this object
    def get_params(self, deep: bool = True) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def set_params(self, **params) -> "RunConfig":
        unknown = sorted(set(params) - {f.name for f in fields(self)})
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        updated = dataclasses.replace(self, **params)
        for f in fields(self):
            setattr(self, f.name, getattr(updated, f.name))
        return self

    def replace(self, **params) -> "RunConfig":
        return dataclasses.replace(self, **params)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))


_HINTS = None


def _hints() -> dict:
    global _HINTS
    if _HINTS is None:
        _HINTS = typing.get_type_hints(RunConfig)
    return _HINTS


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_scalar(kind, text: str):
    if kind is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return kind(text)


def parse_value(key: str, text: str):
    hint = _hints()[key]
    try:
        if typing.get_origin(hint) is tuple:
            kind = typing.get_args(hint)[0]
            items = [t.strip() for t in text.split(",") if t.strip()]
            if not items:
                raise ValueError("empty list")
            return tuple(_parse_scalar(kind, t) for t in items)
        return _parse_scalar(hint, text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    """Overlay ``key = value`` lines on ``base``; '#' starts a comment; unknown keys are errors."""
    names = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in names:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    base = base or RunConfig()
    try:
        return dataclasses.replace(base, **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base, str(path))

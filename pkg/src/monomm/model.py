"""End-to-end network: backbone, neck, depth branch, optional DMB, detection head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backbone import Backbone, BackboneConfig
from .dap import DAP, DapConfig
from .detect.anchors import AnchorConfig, AnchorSet, AnchorStats, generate_anchors
from .detect.coder import Detection, decode_boxes, geometry_to_box3d
from .detect.head import DetectionHead
from .detect.nms import nms
from .dmb import DMB, DmbConfig
from .features import FeatureMap
from .fmf import FMF, FmfConfig, PlainFusion
from .nn import Module
from .tensor import Tensor, no_grad

FUSION_MODES = ("conv-sum", "mamba")
STRIDE = 8


@dataclass
class ModelConfig:
    image_size: tuple[int, int] = (288, 1280)
    classes: tuple[str, ...] = ("Car", "Pedestrian", "Cyclist")
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    fmf: FmfConfig = field(default_factory=FmfConfig)
    dap: DapConfig = field(default_factory=DapConfig)
    dmb: DmbConfig = field(default_factory=DmbConfig)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    head_hidden: int = 256
    enable_fmf: bool = True
    enable_dmb: bool = True
    fusion_mode: str = "conv-sum"

    def __post_init__(self):
        h, w = self.image_size
        if h % 32 or w % 32 or h <= 0 or w <= 0:
            raise ValueError(f"image size {self.image_size} must be positive multiples of 32")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.fusion_mode == "mamba" and not self.enable_dmb:
            raise ValueError("fusion_mode 'mamba' needs enable_dmb")
        if not self.classes:
            raise ValueError("at least one class is required")
        if self.enable_dmb:
            ph, pw = self.dmb.patch
            fh, fw = self.feature_shape
            if fh % ph or fw % pw:
                raise ValueError(f"feature grid {(fh, fw)} not divisible by DMB patch {(ph, pw)}")
        if self.anchors.stride != STRIDE:
            raise ValueError(f"anchor stride must be {STRIDE}")

    @property
    def feature_shape(self) -> tuple[int, int]:
        return self.image_size[0] // STRIDE, self.image_size[1] // STRIDE

    @property
    def neck_channels(self) -> int:
        return self.fmf.c_out

    @property
    def fused_channels(self) -> int:
        return self.dap.channels if self.fusion_mode == "conv-sum" else self.neck_channels


@dataclass
class ModelOutput:
    fused: FeatureMap
    depth_logits: Tensor
    cls_logits: Tensor
    reg: Tensor


class MonoMM(Module):
    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        cfg = cfg or ModelConfig()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.backbone = Backbone(cfg.backbone, rng=rng)
        in_ch = self.backbone.out_channels
        self.neck = FMF(in_ch, cfg.fmf, rng=rng) if cfg.enable_fmf else PlainFusion(in_ch, cfg.fmf.c_out, rng=rng)
        self.dap = DAP(cfg.neck_channels, cfg.dap, fuse=cfg.fusion_mode == "conv-sum", rng=rng)
        if cfg.enable_dmb:
            ph, pw = cfg.dmb.patch
            fh, fw = cfg.feature_shape
            self.dmb = DMB(cfg.fused_channels, (fh // ph, fw // pw), cfg.dmb, rng=rng)
        else:
            self.dmb = None
        self.head = DetectionHead(cfg.fused_channels, len(cfg.classes), cfg.anchors.n_templates,
                                  cfg.head_hidden, rng=rng)
        self.anchor_stats = AnchorStats.default(cfg.anchors.n_templates)

    def anchors(self) -> AnchorSet:
        fh, fw = self.cfg.feature_shape
        return generate_anchors(fh, fw, STRIDE, self.cfg.anchors, self.anchor_stats)

    def forward(self, image) -> ModelOutput:
        image = Tensor.wrap(image)
        if tuple(image.shape[1:]) != tuple(self.cfg.image_size):
            raise ValueError(f"model expects images of size {self.cfg.image_size}, got {image.shape[1:]}")
        visual = self.neck(self.backbone(image))
        depth_feat, depth_logits = self.dap(visual)
        fused = self.dap.fuse(visual, depth_feat) if self.cfg.fusion_mode == "conv-sum" else visual
        if self.dmb is not None:
            fused = FeatureMap(self.dmb(fused.data), fused.stride)
        cls_logits, reg = self.head(fused)
        return ModelOutput(fused, depth_logits, cls_logits, reg)

    def detect(self, image, P2: np.ndarray, score_thr: float = 0.75, nms_iou: float = 0.4,
               max_candidates: int = 1000) -> list[Detection]:
        """Decoded detections after score filtering and per-class NMS."""
        with no_grad():
            out = self.forward(image)
        logits = out.cls_logits.data.astype(np.float64)
        scores = 1.0 / (1.0 + np.exp(-logits))
        anchor_idx, cls_idx = np.nonzero(scores >= score_thr)
        if len(anchor_idx) > max_candidates:
            top = np.argsort(-scores[anchor_idx, cls_idx], kind="stable")[:max_candidates]
            anchor_idx, cls_idx = anchor_idx[top], cls_idx[top]
        if len(anchor_idx) == 0:
            return []
        anchors = self.anchors()
        geom = decode_boxes(anchors.centers[anchor_idx], anchors.sizes[anchor_idx],
                            anchors.prior_mean[anchor_idx], anchors.prior_std[anchor_idx],
                            out.reg.data[anchor_idx].astype(np.float64))
        boxes3d = geometry_to_box3d(geom, P2)
        dets = []
        for i in range(len(anchor_idx)):
            box2d = tuple(float(v) for v in geom.box2d[i])
            if not (box2d[2] > box2d[0] and box2d[3] > box2d[1]) or not np.all(np.isfinite(boxes3d[i])):
                continue
            dets.append(Detection(int(cls_idx[i]), float(scores[anchor_idx[i], cls_idx[i]]), box2d,
                                  tuple(float(v) for v in boxes3d[i])))
        return nms(dets, nms_iou, score_thr)

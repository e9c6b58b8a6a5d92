"""scikit-learn style wrapper around training and inference."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .data.kitti import Frame
from .data.synth import SyntheticScene
from .data.preprocess import frame_from_scene
from .eval.ap import Difficulty, EvalConfig, ap40


def check_frames(X, require_labels: bool = False) -> list[Frame]:
    """Validate a sequence of frames (synthetic scenes are converted)."""
    if isinstance(X, (Frame, SyntheticScene)):
        raise TypeError("expected a sequence of frames, got a single frame")
    frames = []
    for i, item in enumerate(X):
        if isinstance(item, SyntheticScene):
            item = frame_from_scene(item)
        if not isinstance(item, Frame):
            raise TypeError(f"item {i} is {type(item).__name__}, expected Frame or SyntheticScene")
        img = np.asarray(item.image)
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError(f"item {i}: image must be (3, H, W), got {img.shape}")
        if not np.all(np.isfinite(img)):
            raise ValueError(f"item {i}: image contains non-finite values")
        if np.asarray(item.P2).shape != (3, 4):
            raise ValueError(f"item {i}: P2 must be 3x4")
        frames.append(item)
    if not frames:
        raise ValueError("need at least one frame")
    if require_labels and not any(f.objects for f in frames):
        raise ValueError("training frames carry no labelled objects")
    return frames


class MonoMMDetector(BaseEstimator):
    """Monocular 3-D detector with ``fit`` / ``predict`` / ``score``.

    Parameters
    ----------
    config : RunConfig, optional
        Full run configuration; nested parameters are reachable as
        ``config__<key>`` through ``get_params`` / ``set_params``.
    steps : int, optional
        Overrides the configured number of optimisation steps.
    """

    def __init__(self, config: RunConfig | None = None, steps: int | None = None):
        self.config = config
        self.steps = steps

    def _cfg(self) -> RunConfig:
        return self.config if self.config is not None else RunConfig()

    def fit(self, X, y=None):
        from .train import train

        frames = check_frames(X, require_labels=True)
        cfg = self._cfg()
        result = train(cfg, frames, steps=self.steps)
        self.model_ = result.model
        self.config_ = cfg
        self.loss_history_ = result.history
        self.classes_ = tuple(cfg.classes)
        return self

    def predict(self, X) -> list[list]:
        """Per-frame lists of scored detections (KITTI label objects)."""
        from .train import predict_frame

        check_is_fitted(self, "model_")
        return [predict_frame(self.model_, f, self.config_) for f in check_frames(X)]

    def score(self, X, y=None) -> float:
        """Mean moderate 3-D AP|40 over the classes present in ``X``'s labels."""
        frames = check_frames(X, require_labels=True)
        dets = self.predict(frames)
        gts = [f.objects for f in frames]
        thresholds = EvalConfig().thresholds
        present = [c for c in self.classes_ if any(o.cls == c for f in frames for o in f.objects)]
        return float(np.mean([ap40(dets, gts, c, "3d", thresholds.get(c, 0.5), Difficulty.MODERATE)
                              for c in present]))

"""Directory-level evaluation and the metrics report."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..data.kitti import KittiFormatError, read_label_file
from .ap import Difficulty, EvalConfig, ap40

log = logging.getLogger(__name__)

BUCKETS = (Difficulty.EASY, Difficulty.MODERATE, Difficulty.HARD)
METRICS = (("AP3D", "3d"), ("APBEV", "bev"))


@dataclass
class MetricsReport:
    values: dict[str, float]
    classes: tuple[str, ...]
    warnings: list[str] = field(default_factory=list)

    def key_values(self) -> str:
        return "".join(f"{k}={v:.4f}\n" for k, v in self.values.items())

    def table(self) -> str:
        head = f"{'class':<12}" + "".join(
            f"| {name:<6} {'easy':>6} {'mod':>6} {'hard':>6} " for name, _ in METRICS
        )
        rows = [head.rstrip()]
        for cls in self.classes:
            row = f"{cls:<12}"
            for name, _ in METRICS:
                vals = [self.values[f"{name}_{cls}_{b.name.capitalize()}"] * 100 for b in BUCKETS]
                row += f"| {'':<6} " + " ".join(f"{v:6.2f}" for v in vals) + " "
            rows.append(row.rstrip())
        return "\n".join(rows) + "\n"

    def render(self) -> str:
        warn = "".join(f"warning: {w}\n" for w in self.warnings)
        return warn + self.table() + "\n" + self.key_values()


def evaluate_frames(dets, gts, cfg: EvalConfig | None = None, classes=None) -> MetricsReport:
    cfg = cfg or EvalConfig()
    classes = tuple(classes or cfg.thresholds)
    values = {}
    for cls in classes:
        thr = cfg.thresholds[cls]
        for name, kind in METRICS:
            for bucket in BUCKETS:
                key = f"{name}_{cls}_{bucket.name.capitalize()}"
                values[key] = ap40(dets, gts, cls, kind, thr, bucket, cfg.rules)
    return MetricsReport(values, classes)


def evaluate_dirs(results_dir: str | os.PathLike, gt_dir: str | os.PathLike,
                  cfg: EvalConfig | None = None, classes=None) -> MetricsReport:
    """Evaluate every ``*.txt`` label file in ``gt_dir`` against same-named result files.

    A frame without a result file counts as having no detections; such frames
    are listed in the report warnings.
    """
    results_dir, gt_dir = Path(results_dir), Path(gt_dir)
    if not gt_dir.is_dir():
        raise FileNotFoundError(f"ground-truth directory {gt_dir} does not exist")
    if not results_dir.is_dir():
        raise FileNotFoundError(f"results directory {results_dir} does not exist")
    names = sorted(p.name for p in gt_dir.glob("*.txt"))
    if not names:
        raise FileNotFoundError(f"no label files in {gt_dir}")
    missing = [n for n in names if not (results_dir / n).exists()]
    extra = sorted(p.name for p in results_dir.glob("*.txt") if not (gt_dir / p.name).exists())
    gts = [read_label_file(gt_dir / n) for n in names]
    dets = [read_label_file(results_dir / n) if n not in missing else [] for n in names]
    for d in (det for frame in dets for det in frame):
        if d.score is None:
            raise KittiFormatError(f"result files must carry a score column (class {d.cls})")
    report = evaluate_frames(dets, gts, cfg, classes)
    if missing:
        report.warnings.append(f"{len(missing)} result file(s) missing, scored as empty: {', '.join(missing)}")
    if extra:
        report.warnings.append(f"result file(s) without ground truth ignored: {', '.join(extra)}")
    for w in report.warnings:
        log.warning(w)
    return report

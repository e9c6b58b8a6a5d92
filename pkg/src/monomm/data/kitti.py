"""KITTI object labels, calibration files and result files."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class KittiFormatError(ValueError):
    pass


@dataclass
class GroundTruthObject:
    """One KITTI label line.

    ``dims`` is (h, w, l) in meters; ``location`` is the bottom-centre of the
    box in camera coordinates (x right, y down, z forward). ``score`` is only
    present for result files.
    """

    cls: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    dims: tuple[float, float, float]
    location: tuple[float, float, float]
    rotation_y: float
    score: float | None = None

    @property
    def height2d(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]

    @property
    def center3d(self) -> np.ndarray:
        x, y, z = self.location
        return np.array([x, y - self.dims[0] / 2.0, z])

    def to_line(self) -> str:
        x1, y1, x2, y2 = self.bbox2d
        h, w, l = self.dims
        x, y, z = self.location
        occ = int(self.occlusion)
        trunc = f"{self.truncation:.2f}" if self.truncation >= 0 else "-1"
        line = (
            f"{self.cls} {trunc} {occ} {self.alpha:.2f} "
            f"{x1:.2f} {y1:.2f} {x2:.2f} {y2:.2f} {h:.2f} {w:.2f} {l:.2f} "
            f"{x:.2f} {y:.2f} {z:.2f} {self.rotation_y:.2f}"
        )
        if self.score is not None:
            line += f" {self.score:.4f}"
        return line


def parse_kitti_label(line: str, lineno: int | None = None) -> GroundTruthObject:
    """Parse a 15-field label line (16 with a trailing score)."""
    where = f"line {lineno}: " if lineno is not None else ""
    fields = line.split()
    if len(fields) not in (15, 16):
        raise KittiFormatError(f"{where}expected 15 or 16 fields, got {len(fields)}")
    try:
        nums = [float(v) for v in fields[1:]]
        occlusion = int(float(fields[2]))
    except ValueError as exc:
        raise KittiFormatError(f"{where}unparseable numeric field ({exc})") from None
    return GroundTruthObject(
        cls=fields[0],
        truncation=nums[0],
        occlusion=occlusion,
        alpha=nums[2],
        bbox2d=tuple(nums[3:7]),
        dims=tuple(nums[7:10]),
        location=tuple(nums[10:13]),
        rotation_y=nums[13],
        score=nums[14] if len(nums) == 15 else None,
    )


def read_label_file(path: str | os.PathLike) -> list[GroundTruthObject]:
    objects = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    objects.append(parse_kitti_label(line, i))
                except KittiFormatError as exc:
                    raise KittiFormatError(f"{path}: {exc}") from None
    return objects


def write_kitti_result(objects: Iterable[GroundTruthObject], path: str | os.PathLike) -> None:
    """Write one line per object; objects carrying a score get the 16th field."""
    text = "".join(obj.to_line() + "\n" for obj in objects)
    Path(path).write_text(text)


def read_calib_p2(path: str | os.PathLike) -> np.ndarray:
    with open(path) as fh:
        for line in fh:
            if line.startswith("P2:"):
                vals = [float(v) for v in line.split()[1:]]
                if len(vals) != 12:
                    raise KittiFormatError(f"{path}: P2 needs 12 numbers, got {len(vals)}")
                return check_p2(np.array(vals).reshape(3, 4))
    raise KittiFormatError(f"{path}: no 'P2:' entry")


def check_p2(P2: np.ndarray) -> np.ndarray:
    P2 = np.asarray(P2, dtype=np.float64)
    if P2.shape != (3, 4) or not np.all(np.isfinite(P2)) or P2[0, 0] <= 0:
        raise KittiFormatError("P2 must be a finite 3x4 matrix with positive focal length")
    return P2


def write_calib(P2: np.ndarray, path: str | os.PathLike) -> None:
    # shortest round-trip repr, so reloading gives the identical matrix
    Path(path).write_text("P2: " + " ".join(repr(float(v)) for v in np.asarray(P2).reshape(-1)) + "\n")


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + math.pi) % (2 * math.pi) - math.pi


@dataclass
class Frame:
    """An image with calibration, labels and (optionally) a metric depth map."""

    image: np.ndarray
    P2: np.ndarray
    objects: list[GroundTruthObject] = field(default_factory=list)
    depth: np.ndarray | None = None
    name: str = "000000"

"""On-disk frame directories: ``image_2/*.npy``, ``calib/*.txt``, ``label_2/*.txt``, ``depth/*.npy``."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .kitti import Frame, read_calib_p2, read_label_file, write_calib, write_kitti_result


def export_frames(frames, root: str | os.PathLike) -> None:
    root = Path(root)
    for sub in ("image_2", "calib", "label_2", "depth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for f in frames:
        np.save(root / "image_2" / f"{f.name}.npy", np.ascontiguousarray(f.image, dtype=np.float32))
        write_calib(f.P2, root / "calib" / f"{f.name}.txt")
        write_kitti_result(f.objects, root / "label_2" / f"{f.name}.txt")
        if f.depth is not None:
            np.save(root / "depth" / f"{f.name}.npy", np.ascontiguousarray(f.depth, dtype=np.float32))


def load_frames(root: str | os.PathLike, with_labels: bool = True) -> list[Frame]:
    """Load every frame with an image under ``root/image_2``, sorted by name.

    Images are raw ``(3, H, W)`` float arrays saved with ``numpy.save``.
    """
    root = Path(root)
    image_dir = root / "image_2"
    if not image_dir.is_dir():
        raise FileNotFoundError(f"{image_dir} does not exist")
    names = sorted(p.stem for p in image_dir.glob("*.npy"))
    if not names:
        raise FileNotFoundError(f"no images in {image_dir}")
    missing = [n for n in names if not (root / "calib" / f"{n}.txt").exists()]
    if missing:
        raise FileNotFoundError(f"missing calibration for: {', '.join(missing)}")
    frames = []
    for n in names:
        image = np.load(image_dir / f"{n}.npy", allow_pickle=False)
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError(f"{n}: expected a (3, H, W) image, got {image.shape}")
        label_path = root / "label_2" / f"{n}.txt"
        objects = read_label_file(label_path) if with_labels and label_path.exists() else []
        depth_path = root / "depth" / f"{n}.npy"
        depth = np.load(depth_path, allow_pickle=False).astype(np.float64) if depth_path.exists() else None
        frames.append(Frame(image.astype(np.float64), read_calib_p2(root / "calib" / f"{n}.txt"), objects, depth, n))
    return frames

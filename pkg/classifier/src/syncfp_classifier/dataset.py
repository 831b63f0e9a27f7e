"""Spectrogram dataset loading.

Reads the layout the syncprobe CLI exports: one directory per class
label holding ``SYNCSPC1`` spectrogram files, plus a ``manifest.json``
naming classes and counts.  Each spectrogram is bilinearly resized to a
square single-channel image and min-max normalized per image (an
all-zero image stays all-zero).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

SPECTROGRAM_MAGIC = b"SYNCSPC1"
IMAGE_SIZE = 224


class DatasetError(Exception):
    """Corrupt files or a manifest that disagrees with what's on disk."""


@dataclass
class LoadedDataset:
    images: torch.Tensor  # [n, 1, IMAGE_SIZE, IMAGE_SIZE], float32 in [0, 1]
    labels: torch.Tensor  # [n], int64
    classes: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def read_spectrogram_file(path) -> np.ndarray:
    """Parse one SYNCSPC1 file into a [freq_bins, frames] float array."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != SPECTROGRAM_MAGIC:
            raise DatasetError(f"{path}: corrupt file (magic {magic!r})")
        header = fh.read(16)
        if len(header) != 16:
            raise DatasetError(f"{path}: corrupt file (truncated header)")
        bins, frames, _window, _hop = struct.unpack("<IIII", header)
        raw = fh.read(bins * frames * 4)
    if len(raw) != bins * frames * 4:
        raise DatasetError(f"{path}: corrupt file (truncated data)")
    return np.frombuffer(raw, dtype="<f4").reshape(bins, frames).astype(np.float32)


def to_image(spec: np.ndarray, size: int = IMAGE_SIZE) -> torch.Tensor:
    """Resize to [1, size, size] and min-max normalize (0/0 guard: zeros)."""
    t = torch.from_numpy(np.ascontiguousarray(spec))[None, None]
    t = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    lo, hi = t.min(), t.max()
    if hi > lo:
        t = (t - lo) / (hi - lo)
    else:
        t = torch.zeros_like(t)
    return t[0]


def load_manifest(root) -> dict:
    path = os.path.join(root, "manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise DatasetError(f"no manifest.json under {root}") from exc


def load_dataset(root, size: int = IMAGE_SIZE) -> LoadedDataset:
    """Load every trace of every class listed in the manifest."""
    manifest = load_manifest(root)
    classes = list(manifest["classes"])
    expected = int(manifest["traces_per_class"])
    images = []
    labels = []
    for label_idx, label in enumerate(classes):
        class_dir = os.path.join(root, label)
        if not os.path.isdir(class_dir):
            raise DatasetError(f"class directory missing: {class_dir}")
        files = sorted(f for f in os.listdir(class_dir) if f.endswith(".spec"))
        if len(files) != expected:
            raise DatasetError(
                f"class count mismatch for {label!r}: manifest says {expected}, "
                f"found {len(files)}"
            )
        for name in files:
            spec = read_spectrogram_file(os.path.join(class_dir, name))
            images.append(to_image(spec, size))
            labels.append(label_idx)
    return LoadedDataset(
        images=torch.stack(images),
        labels=torch.tensor(labels, dtype=torch.int64),
        classes=classes,
    )

"""Classifier architectures.

The default is a small three-block CNN sized for desk-scale datasets
(hundreds of images); a 152-layer residual network with a single-channel
first layer is available behind a flag for parity experiments.  Both end
in an n_classes linear head over a global average pool.
"""

from __future__ import annotations

import torch
from torch import nn


class SmallCnn(nn.Module):
    """Three strided conv blocks, 4x4 average pool, linear head.

    Pooling to a grid rather than a single cell keeps coarse position
    information: which frequency bands carry energy is exactly what
    separates spectrogram classes, and a fully global pool would erase it.
    """

    def __init__(self, n_classes: int):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, 16, 3, stride=2, padding=1),
            nn.BatchNorm2d(16),
            nn.ReLU(inplace=True),
            nn.Conv2d(16, 32, 3, stride=2, padding=1),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.Conv2d(32, 64, 3, stride=2, padding=1),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d((4, 4)),
        )
        self.dropout = nn.Dropout(0.25)
        self.head = nn.Linear(64 * 4 * 4, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.dropout(self.features(x).flatten(1)))


def make_model(arch: str, n_classes: int) -> nn.Module:
    if arch == "small":
        return SmallCnn(n_classes)
    if arch == "resnet152":
        try:
            from torchvision.models import resnet152
        except ImportError as exc:
            raise RuntimeError(
                "the resnet152 architecture needs torchvision installed"
            ) from exc
        # Randomly initialized: pretrained weights assume 3-channel inputs
        # and an online download; neither holds here.
        model = resnet152(weights=None, num_classes=n_classes)
        model.conv1 = nn.Conv2d(1, 64, kernel_size=7, stride=2, padding=3, bias=False)
        return model
    raise ValueError(f"unknown architecture {arch!r}")

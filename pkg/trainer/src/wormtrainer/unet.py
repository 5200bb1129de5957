"""Compact U-Net with two prediction branches.

Each branch sits on the last feature map: a 3x3 convolution with 64 channels
and ReLU, then a 1x1 layer with 2 classes under a softmax. The positive-class
probability is the map the rest of the pipeline consumes.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class _Head(nn.Module):
    def __init__(self, c_in: int):
        super().__init__()
        self.feature = nn.Conv2d(c_in, 64, 3, padding=1)
        self.out = nn.Conv2d(64, 2, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        logits = self.out(F.relu(self.feature(x)))
        return torch.softmax(logits, dim=1)[:, 1]


class TwoBranchUNet(nn.Module):
    """Encoder-decoder backbone with skeleton and endpoint heads."""

    def __init__(self, base: int = 16):
        super().__init__()
        self.enc1 = _block(1, base)
        self.enc2 = _block(base, 2 * base)
        self.enc3 = _block(2 * base, 4 * base)
        self.bottom = _block(4 * base, 8 * base)
        self.up3 = nn.ConvTranspose2d(8 * base, 4 * base, 2, stride=2)
        self.dec3 = _block(8 * base, 4 * base)
        self.up2 = nn.ConvTranspose2d(4 * base, 2 * base, 2, stride=2)
        self.dec2 = _block(4 * base, 2 * base)
        self.up1 = nn.ConvTranspose2d(2 * base, base, 2, stride=2)
        self.dec1 = _block(2 * base, base)
        self.skeleton_head = _Head(base)
        self.endpoint_head = _Head(base)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        e1 = self.enc1(x)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        e3 = self.enc3(F.max_pool2d(e2, 2))
        b = self.bottom(F.max_pool2d(e3, 2))
        d3 = self.dec3(torch.cat([self.up3(b), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.skeleton_head(d1), self.endpoint_head(d1)


def pad_to_multiple(x: torch.Tensor, multiple: int = 8) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad H and W up to a multiple so pooling divides evenly."""
    h, w = x.shape[-2:]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="reflect")
    return x, (h, w)

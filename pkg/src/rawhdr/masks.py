"""Exposure masks: fixed thresholds, learned soft masks and their constraint loss.

Masks are single-channel ``(N, 1, h, w)`` tensors at packed resolution and
broadcast over feature channels wherever they weight features.
"""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn

from .errors import NumericalError, ShapeError
from .layers import Gate, ResBlock, conv3x3

HARD_LO, HARD_HI = 0.05, 0.95


class MaskTriple(NamedTuple):
    over: torch.Tensor
    under: torch.Tensor
    well: torch.Tensor


def well_mask(over: torch.Tensor, under: torch.Tensor) -> torch.Tensor:
    return torch.clamp(1.0 - over - under, min=0.0)


def hard_masks(packed: torch.Tensor, lo: float = HARD_LO, hi: float = HARD_HI) -> MaskTriple:
    """Binary masks from the per-pixel maximum over the four packed channels."""
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    peak = packed.amax(dim=1, keepdim=True)
    over = (peak > hi).to(packed.dtype)
    under = (peak < lo).to(packed.dtype)
    return MaskTriple(over, under, well_mask(over, under))


class MaskNet(nn.Module):
    """Entry projection, two residual blocks, exit projection to one logit map."""

    def __init__(self, width: int = 16, in_channels: int = 4):
        super().__init__()
        self.entry = conv3x3(in_channels, width)
        self.blocks = nn.Sequential(ResBlock(width), ResBlock(width))
        self.act = Gate()
        self.exit = nn.Conv2d(width, 1, 1)

    def forward(self, x):
        return self.exit(self.act(self.blocks(self.entry(x))))


def open_sigmoid(logits: torch.Tensor) -> torch.Tensor:
    """Sigmoid kept strictly inside (0, 1); plain rounding reaches 1.0 past logit ~37."""
    info = torch.finfo(logits.dtype)
    return torch.sigmoid(logits).clamp(info.tiny, 1.0 - info.eps / 2)


class SoftMasks(nn.Module):
    def __init__(self, width: int = 16):
        super().__init__()
        self.p_over = MaskNet(width)
        self.p_under = MaskNet(width)

    def forward(self, packed: torch.Tensor) -> MaskTriple:
        logits = {"over": self.p_over(packed), "under": self.p_under(packed)}
        for name, t in logits.items():
            bad = ~torch.isfinite(t)
            if bad.any():
                loc = tuple(int(i) for i in bad.nonzero()[0])
                raise NumericalError(f"non-finite {name}-mask activation at index {loc}")
        over = open_sigmoid(logits["over"])
        under = open_sigmoid(logits["under"])
        return MaskTriple(over, under, well_mask(over, under))


def soft_masks(packed: torch.Tensor, net: SoftMasks) -> MaskTriple:
    return net(packed)


def mask_loss(soft: MaskTriple, hard: MaskTriple) -> torch.Tensor:
    """Mean absolute deviation of the soft over/under masks from the hard ones."""
    for s, h in ((soft.over, hard.over), (soft.under, hard.under)):
        if s.shape != h.shape:
            raise ShapeError(f"mask shapes differ: {tuple(s.shape)} vs {tuple(h.shape)}")
    return (soft.over - hard.over).abs().mean() + (soft.under - hard.under).abs().mean()

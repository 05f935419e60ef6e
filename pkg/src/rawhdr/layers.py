"""Small building blocks shared by the mask nets and the main network."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class Gate(nn.Module):
    """SiLU nonlinearity; ``enabled=False`` turns it into the identity (test hook)."""

    def __init__(self):
        super().__init__()
        self.enabled = True

    def forward(self, x):
        return F.silu(x) if self.enabled else x


def set_gates(module: nn.Module, enabled: bool) -> None:
    for m in module.modules():
        if isinstance(m, Gate):
            m.enabled = enabled


def conv3x3(cin: int, cout: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, 3, padding=1)


class ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv1 = conv3x3(cin, cout)
        self.act1 = Gate()
        self.conv2 = conv3x3(cout, cout)
        self.act2 = Gate()

    def forward(self, x):
        return self.act2(self.conv2(self.act1(self.conv1(x))))


class ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = conv3x3(width, width)
        self.act = Gate()
        self.conv2 = conv3x3(width, width)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))

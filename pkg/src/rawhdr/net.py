"""Raw-to-HDR reconstruction network.

Three parallel paths run on the packed Raw input:

* soft exposure masks (``masks.SoftMasks``),
* dual intensity guidance: U-Net encoders on the green pair, the red/blue
  pair and all four channels; two decoders fuse each guide with the full
  features, and the under/over masks blend the two decoded maps,
* global spatial guidance: a U-shaped stack of window-attention (LeWin)
  transformer blocks over an embedding of the packed input.

A 1x1 head mixes both guidance features and adds a 1x1 projection of the
input plus the inverse softplus of the input itself, so with silent branches
the output is exactly the (floored) input. Softplus keeps radiance
non-negative.

Tensors are NCHW except inside the transformer, which works on NHWC tokens.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import NumericalError, ShapeError
from .layers import ConvBlock, Gate
from .masks import MaskTriple, SoftMasks, hard_masks
from .raw_model import B, G1, G2, R, RawMosaic, pack


@dataclass(frozen=True)
class NetConfig:
    base_width: int = 16
    unet_depth: int = 2
    gsg_stages: int = 2
    blocks_per_stage: int = 2
    window_size: int = 8
    heads: int = 2
    leff_expansion: float = 2.0
    mask_width: int = 16
    # ablation switches
    use_dig: bool = True
    use_gsg: bool = True
    mask_mode: str = "soft"  # "soft" | "hard"

    def __post_init__(self):
        if self.gsg_stages < 1:
            raise ValueError("gsg_stages must be >= 1")
        if self.base_width % self.heads:
            raise ValueError("heads must divide base_width")
        if self.mask_mode not in ("soft", "hard"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if self.unet_depth < 0 or self.window_size < 1:
            raise ValueError("invalid depth or window size")

    @property
    def pad_multiple(self) -> int:
        """Side multiple that every packed input is padded to."""
        gsg = self.window_size * 2 ** (self.gsg_stages - 1)
        return math.lcm(2**self.unet_depth, gsg)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


# ---------------------------------------------------------------- U-Net parts


class UNetEncoder(nn.Module):
    def __init__(self, cin: int, base: int, depth: int):
        super().__init__()
        self.depth = depth
        self.inc = ConvBlock(cin, base)
        self.downs = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for level in range(1, depth + 1):
            c_prev, c = base * 2 ** (level - 1), base * 2**level
            self.downs.append(nn.Conv2d(c_prev, c_prev, 4, stride=2, padding=1))
            self.blocks.append(ConvBlock(c_prev, c))

    def forward(self, x):
        """Return the bottleneck feature and the per-level skips (finest first)."""
        if x.shape[-2] % 2**self.depth or x.shape[-1] % 2**self.depth:
            raise ShapeError(f"input {tuple(x.shape[-2:])} not divisible by 2**{self.depth}")
        y = self.inc(x)
        skips = []
        for down, block in zip(self.downs, self.blocks):
            skips.append(y)
            y = block(down(y))
        return y, skips


def unet_encode(x: torch.Tensor, encoder: UNetEncoder):
    return encoder(x)


class UNetDecoder(nn.Module):
    """Decodes a concatenated (guide, full) bottleneck using both skip sets."""

    def __init__(self, base: int, depth: int):
        super().__init__()
        c_bottom = base * 2**depth
        self.fuse = ConvBlock(2 * c_bottom, c_bottom)
        self.ups = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for level in range(depth, 0, -1):
            c, c_next = base * 2**level, base * 2 ** (level - 1)
            self.ups.append(nn.ConvTranspose2d(c, c_next, 2, stride=2))
            self.blocks.append(ConvBlock(3 * c_next, c_next))

    def forward(self, y_guide, y_full, skips_guide, skips_full):
        y = self.fuse(torch.cat([y_guide, y_full], dim=1))
        for up, block, sg, sf in zip(self.ups, self.blocks, reversed(skips_guide), reversed(skips_full)):
            y = block(torch.cat([up(y), sg, sf], dim=1))
        return y


class DualIntensityGuidance(nn.Module):
    def __init__(self, base: int, depth: int):
        super().__init__()
        self.enc_g = UNetEncoder(2, base, depth)
        self.enc_rb = UNetEncoder(2, base, depth)
        self.enc_full = UNetEncoder(4, base, depth)
        self.dec_g = UNetDecoder(base, depth)
        self.dec_rb = UNetDecoder(base, depth)

    def guided_features(self, packed):
        """Decoded green-guided and red/blue-guided features (Y_G', Y_RB')."""
        y_g, s_g = self.enc_g(packed[:, [G1, G2]])
        y_rb, s_rb = self.enc_rb(packed[:, [R, B]])
        y_full, s_full = self.enc_full(packed)
        return self.dec_g(y_g, y_full, s_g, s_full), self.dec_rb(y_rb, y_full, s_rb, s_full)

    def forward(self, packed, masks: MaskTriple):
        y_g, y_rb = self.guided_features(packed)
        return masks.under * y_g + masks.over * y_rb


def dual_intensity_guidance(packed, masks: MaskTriple, dig: DualIntensityGuidance):
    return dig(packed, masks)


# --------------------------------------------------------- transformer parts


def window_partition(x: torch.Tensor, ws: int) -> torch.Tensor:
    """(N, H, W, C) -> (N * nWindows, ws*ws, C)."""
    n, h, w, c = x.shape
    x = x.view(n, h // ws, ws, w // ws, ws, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, ws * ws, c)


def window_reverse(tokens: torch.Tensor, ws: int, n: int, h: int, w: int) -> torch.Tensor:
    c = tokens.shape[-1]
    x = tokens.view(n, h // ws, w // ws, ws, ws, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(n, h, w, c)


class WindowAttention(nn.Module):
    def __init__(self, dim: int, heads: int, window_size: int):
        super().__init__()
        if dim % heads:
            raise ValueError(f"heads={heads} must divide dim={dim}")
        self.dim, self.heads, self.window_size = dim, heads, window_size
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        n, h, w, c = x.shape
        ws = self.window_size
        if h % ws or w % ws:
            raise ShapeError(f"feature map {h}x{w} not divisible by window {ws}")
        tokens = window_partition(x, ws)
        bw, t, _ = tokens.shape
        hd = c // self.heads
        qkv = self.qkv(tokens).view(bw, t, 3, self.heads, hd).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = torch.softmax((q @ k.transpose(-2, -1)) / math.sqrt(hd), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(bw, t, c)
        return window_reverse(self.proj(out), ws, n, h, w)


def w_msa(features: torch.Tensor, attn: WindowAttention) -> torch.Tensor:
    return attn(features)


class LeFF(nn.Module):
    """Pointwise expand, 3x3 depthwise conv on the token grid, gate, pointwise contract."""

    def __init__(self, dim: int, expansion: float = 2.0):
        super().__init__()
        hidden = int(round(dim * expansion))
        self.fc1 = nn.Linear(dim, hidden)
        self.dwconv = nn.Conv2d(hidden, hidden, 3, padding=1, groups=hidden)
        self.act = Gate()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        y = self.fc1(x).permute(0, 3, 1, 2)
        y = self.act(self.dwconv(y)).permute(0, 2, 3, 1)
        return self.fc2(y)


def leff(features: torch.Tensor, ff: LeFF) -> torch.Tensor:
    return ff(features)


class LeWinBlock(nn.Module):
    def __init__(self, dim: int, heads: int, window_size: int, expansion: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-5)
        self.attn = WindowAttention(dim, heads, window_size)
        self.norm2 = nn.LayerNorm(dim, eps=1e-5)
        self.ff = LeFF(dim, expansion)

    def forward(self, x):
        x = self.attn(self.norm1(x)) + x
        return self.ff(self.norm2(x)) + x


def lewin_block(features: torch.Tensor, block: LeWinBlock) -> torch.Tensor:
    return block(features)


class Downsample(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 4, stride=2, padding=1)

    def forward(self, x):  # NHWC
        return self.conv(x.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)


class Upsample(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.proj = nn.Linear(cin, cout)

    def forward(self, x):  # NHWC
        x = F.interpolate(x.permute(0, 3, 1, 2), scale_factor=2, mode="nearest")
        return self.proj(x.permute(0, 2, 3, 1))


class GlobalSpatialGuidance(nn.Module):
    """U-shaped LeWin transformer; ``stages - 1`` halvings, widths double per level."""

    def __init__(self, dim: int, stages: int, blocks: int, heads: int, window_size: int, expansion: float):
        super().__init__()
        self.stages = stages
        self.window_size = window_size

        def stage(width):
            return nn.Sequential(*[LeWinBlock(width, heads, window_size, expansion) for _ in range(blocks)])

        widths = [dim * 2**i for i in range(stages)]
        self.enc = nn.ModuleList(stage(widths[i]) for i in range(stages - 1))
        self.down = nn.ModuleList(Downsample(widths[i], widths[i + 1]) for i in range(stages - 1))
        self.bottleneck = stage(widths[-1])
        self.up = nn.ModuleList(Upsample(widths[i + 1], widths[i]) for i in range(stages - 1))
        self.merge = nn.ModuleList(nn.Linear(2 * widths[i], widths[i]) for i in range(stages - 1))
        self.dec = nn.ModuleList(stage(widths[i]) for i in range(stages - 1))

    def forward(self, x):
        """x: NCHW features; returns NCHW at the same shape."""
        mult = self.window_size * 2 ** (self.stages - 1)
        if x.shape[-2] % mult or x.shape[-1] % mult:
            raise ShapeError(f"GSG input {tuple(x.shape[-2:])} must be padded to a multiple of {mult}")
        y = x.permute(0, 2, 3, 1)
        skips = []
        for enc, down in zip(self.enc, self.down):
            y = enc(y)
            skips.append(y)
            y = down(y)
        y = self.bottleneck(y)
        for i in reversed(range(self.stages - 1)):
            y = self.up[i](y)
            y = self.merge[i](torch.cat([y, skips[i]], dim=-1))
            y = self.dec[i](y)
        return y.permute(0, 3, 1, 2)


def global_spatial_guidance(x: torch.Tensor, gsg: GlobalSpatialGuidance) -> torch.Tensor:
    return gsg(x)


# ------------------------------------------------------------- whole network


def inverse_softplus(x: torch.Tensor, floor: float = 2.0**-16) -> torch.Tensor:
    """log(exp(x) - 1) for x >= floor, in a form that stays finite for small x."""
    x = torch.clamp(x, min=floor)
    return x + torch.log(-torch.expm1(-x))


class NetOutput(NamedTuple):
    hdr: torch.Tensor
    masks: MaskTriple


class RawHDRNet(nn.Module):
    def __init__(self, config: NetConfig = NetConfig()):
        super().__init__()
        self.config = config
        c = config.base_width
        self.masks = SoftMasks(config.mask_width) if config.mask_mode == "soft" else None
        self.dig = DualIntensityGuidance(c, config.unet_depth) if config.use_dig else None
        if config.use_gsg:
            self.embed = nn.Conv2d(4, c, 3, padding=1)
            self.gsg = GlobalSpatialGuidance(
                c, config.gsg_stages, config.blocks_per_stage, config.heads,
                config.window_size, config.leff_expansion,
            )
            # the pre-LN residual stream grows with depth; normalize before fusing
            self.gsg_norm = nn.LayerNorm(c, eps=1e-5)
        else:
            self.embed = self.gsg = self.gsg_norm = None
        self.head = nn.Conv2d(2 * c, 4, 1)
        self.skip = nn.Conv2d(4, 4, 1)

    def compute_masks(self, packed) -> MaskTriple:
        if self.masks is None:
            return hard_masks(packed)
        return self.masks(packed)

    def forward(self, packed: torch.Tensor) -> NetOutput:
        """packed: (N, 4, h, w) normalized Raw; returns radiance and the masks used."""
        if packed.ndim != 4 or packed.shape[1] != 4:
            raise ShapeError(f"expected (N, 4, h, w), got {tuple(packed.shape)}")
        h, w = packed.shape[-2:]
        m = self.config.pad_multiple
        ph, pw = (-h) % m, (-w) % m
        x = F.pad(packed, (0, pw, 0, ph), mode="replicate") if (ph or pw) else packed

        masks = self.compute_masks(x)
        n, _, hp, wp = x.shape
        zeros = x.new_zeros(n, self.config.base_width, hp, wp)
        y_di = self.dig(x, masks) if self.dig is not None else zeros
        y_gs = zeros
        if self.gsg is not None:
            y_gs = self.gsg_norm(self.gsg(self.embed(x)).permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        pre = self.head(torch.cat([y_di, y_gs], dim=1)) + self.skip(x) + inverse_softplus(x)
        hdr = F.softplus(pre)

        hdr = hdr[..., :h, :w]
        masks = MaskTriple(*(t[..., :h, :w] for t in masks))
        return NetOutput(hdr, masks)


def packed_to_tensor(packed: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(h, w, 4) numpy -> (1, 4, h, w) tensor."""
    return torch.as_tensor(np.ascontiguousarray(np.moveaxis(packed, -1, 0)), dtype=dtype)[None]


def tensor_to_image(t: torch.Tensor) -> np.ndarray:
    """(1, c, h, w) tensor -> (h, w, c) float64 numpy."""
    return np.moveaxis(t.detach().cpu().double().numpy()[0], 0, -1)


def forward(raw: RawMosaic, model: RawHDRNet) -> np.ndarray:
    """Reconstruct an (H/2, W/2, 4) HDR image from a single Raw mosaic."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        out = model(packed_to_tensor(pack(raw), dtype)).hdr
    hdr = tensor_to_image(out)
    if not np.all(np.isfinite(hdr)):
        raise NumericalError("network produced non-finite radiance")
    return hdr

"""Central finite differences against reverse-mode gradients, per named operation.

Every check runs in float64. Non-scalar outputs are reduced with a fixed
random projection so one backward pass yields the full gradient. For each
parameter group (every named tensor, plus the differentiable inputs) a
random subset of coordinates is perturbed, and the group error is

    max |fd - ad| / max(max |ad|, max |fd|, tiny)

over the sampled coordinates. The reported value is the max over groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import losses
from .masks import MaskTriple, SoftMasks, hard_masks, mask_loss
from .net import (
    DualIntensityGuidance,
    GlobalSpatialGuidance,
    LeFF,
    LeWinBlock,
    NetConfig,
    WindowAttention,
)
from .training import init_model, kaiming_init_

FD_STEP = 1e-5
DTYPE = torch.float64
_TINY = 1e-12


@dataclass
class GradCheckResult:
    op: str
    max_rel_err: float
    groups: dict[str, float]


def _randomize_zero_params(module: torch.nn.Module, gen: torch.Generator) -> None:
    """Kaiming init leaves biases and LN offsets at zero; perturb so their gradients are exercised generically."""
    with torch.no_grad():
        for p in module.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=gen, dtype=p.dtype))


def check(fn: Callable[[], torch.Tensor], tensors: dict[str, torch.Tensor], seed: int,
          per_group: int = 4, step: float = FD_STEP) -> dict[str, float]:
    """Compare autograd and central FD on ``per_group`` sampled entries of each tensor."""
    for t in tensors.values():
        t.requires_grad_(True)
        t.grad = None
    fn().backward()
    rng = np.random.default_rng(seed)
    errors = {}
    for name, t in tensors.items():
        ad_full = t.grad.detach().reshape(-1).clone()
        flat = t.data.view(-1)
        idx = rng.choice(flat.numel(), size=min(per_group, flat.numel()), replace=False)
        ad, fd = [], []
        with torch.no_grad():
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + step
                f_plus = fn().item()
                flat[i] = orig - step
                f_minus = fn().item()
                flat[i] = orig
                fd.append((f_plus - f_minus) / (2 * step))
                ad.append(ad_full[i].item())
        ad, fd = np.array(ad), np.array(fd)
        scale = max(np.abs(ad).max(), np.abs(fd).max(), _TINY)
        errors[name] = float(np.abs(ad - fd).max() / scale)
    return errors


def _projection(shape, gen):
    return torch.randn(shape, generator=gen, dtype=DTYPE)


def _masks(shape, gen) -> MaskTriple:
    over = torch.rand(shape, generator=gen, dtype=DTYPE)
    under = torch.rand(shape, generator=gen, dtype=DTYPE) * (1 - over)
    return MaskTriple(over, under, torch.clamp(1 - over - under, min=0))


def _setup_log_l2(gen):
    h = torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE) * 4 + 0.01
    href = torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE) * 4 + 0.01
    return (lambda: losses.log_l2(h, href)), {"H": h}


def _setup_mask_loss(gen):
    packed = torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE)
    net = kaiming_init_(SoftMasks(8), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(net, gen)
    hard = hard_masks(packed, 0.3, 0.7)
    return (lambda: mask_loss(net(packed), hard)), dict(net.named_parameters())


def _setup_soft_masks(gen):
    packed = torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE)
    net = kaiming_init_(SoftMasks(8), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(net, gen)
    w_o, w_u = _projection((1, 1, 8, 8), gen), _projection((1, 1, 8, 8), gen)

    def fn():
        m = net(packed)
        return (w_o * m.over).sum() + (w_u * m.under).sum()

    return fn, {"packed": packed, **dict(net.named_parameters())}


def _setup_dig(gen):
    dig = kaiming_init_(DualIntensityGuidance(4, 1), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(dig, gen)
    packed = torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE)
    masks = _masks((1, 1, 8, 8), gen)
    w = _projection((1, 4, 8, 8), gen)
    return (lambda: (w * dig(packed, masks)).sum()), {"packed": packed, **dict(dig.named_parameters())}


def _tokens(gen, side=8, dim=4):
    return torch.randn(1, side, side, dim, generator=gen, dtype=DTYPE)


def _setup_w_msa(gen):
    attn = kaiming_init_(WindowAttention(4, 2, 4), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(attn, gen)
    x, w = _tokens(gen), _projection((1, 8, 8, 4), gen)
    return (lambda: (w * attn(x)).sum()), {"F": x, **dict(attn.named_parameters())}


def _setup_leff(gen):
    ff = kaiming_init_(LeFF(4, 2.0), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(ff, gen)
    x, w = _tokens(gen), _projection((1, 8, 8, 4), gen)
    return (lambda: (w * ff(x)).sum()), {"F": x, **dict(ff.named_parameters())}


def _setup_lewin(gen):
    block = kaiming_init_(LeWinBlock(4, 2, 4, 2.0), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(block, gen)
    x, w = _tokens(gen), _projection((1, 8, 8, 4), gen)
    return (lambda: (w * block(x)).sum()), {"F": x, **dict(block.named_parameters())}


def _setup_gsg(gen):
    gsg = kaiming_init_(GlobalSpatialGuidance(4, 2, 2, 2, 4, 2.0), int(gen.initial_seed())).to(DTYPE)
    _randomize_zero_params(gsg, gen)
    x = torch.randn(1, 4, 8, 8, generator=gen, dtype=DTYPE)
    w = _projection((1, 4, 8, 8), gen)
    return (lambda: (w * gsg(x)).sum()), {"x": x, **dict(gsg.named_parameters())}


GRADCHECK_NET_CONFIG = NetConfig(
    base_width=4, unet_depth=1, gsg_stages=2, blocks_per_stage=2, window_size=2, heads=2,
    leff_expansion=2.0, mask_width=4,
)


def _setup_forward(gen):
    """Full network on a 16x16 Raw (8x8 packed) through the total training loss.

    Inputs stay above 0.05: near-black pixels drive the prediction towards
    1e-8, where log(h + eps) bends too sharply for a 1e-5 central difference.
    """
    model = init_model(GRADCHECK_NET_CONFIG, int(gen.initial_seed()), dtype=DTYPE)
    _randomize_zero_params(model, gen)
    packed = 0.05 + 0.95 * torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE)
    href = torch.rand(1, 4, 8, 8, generator=gen, dtype=DTYPE) * 4 + 0.01
    hard = hard_masks(packed)

    def fn():
        out = model(packed)
        return losses.total_loss(out.hdr, href, out.masks, hard)

    return fn, dict(model.named_parameters())


OPS: dict[str, Callable] = {
    "log_l2": _setup_log_l2,
    "mask_loss": _setup_mask_loss,
    "soft_masks": _setup_soft_masks,
    "dual_intensity_guidance": _setup_dig,
    "w_msa": _setup_w_msa,
    "leff": _setup_leff,
    "lewin_block": _setup_lewin,
    "global_spatial_guidance": _setup_gsg,
    "forward": _setup_forward,
}


def grad_check(op_name: str, seed: int = 0, per_group: int = 4) -> GradCheckResult:
    if op_name not in OPS:
        raise KeyError(f"unknown op {op_name!r}; choose from {sorted(OPS)}")
    gen = torch.Generator().manual_seed(int(seed))
    fn, tensors = OPS[op_name](gen)
    groups = check(fn, tensors, seed, per_group)
    return GradCheckResult(op_name, max(groups.values()), groups)

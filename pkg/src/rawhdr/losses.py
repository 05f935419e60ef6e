"""Training objective: log-space L2, a pluggable perceptual term, mask constraint."""

from __future__ import annotations

import math
from typing import Callable

import torch
import torch.nn.functional as F

from .errors import ShapeError
from .masks import MaskTriple, mask_loss

LOG_EPS = 2.0**-16
DEFAULT_MU = 5000.0

PerceptualFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def _check_pair(h, href):
    if h.shape != href.shape:
        raise ShapeError(f"shape mismatch: {tuple(h.shape)} vs {tuple(href.shape)}")


def log_l2(h: torch.Tensor, href: torch.Tensor, eps: float = LOG_EPS) -> torch.Tensor:
    """Mean squared difference of log radiance; for batches, per-sample means are summed."""
    _check_pair(h, href)
    if (h < 0).any() or (href < 0).any():
        raise ValueError("log_l2 needs non-negative radiance")
    d = (torch.log(h + eps) - torch.log(href + eps)) ** 2
    if d.ndim == 4:
        return d.flatten(1).mean(dim=1).sum()
    return d.mean()


def mu_law(x: torch.Tensor, peak, mu: float = DEFAULT_MU) -> torch.Tensor:
    return torch.log1p(mu * torch.clamp(x / peak, 0.0, 1.0)) / math.log1p(mu)


_BINOMIAL = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def pyramid_down(x: torch.Tensor) -> torch.Tensor:
    """5-tap binomial blur (replicate borders) then 2x decimation; x is NCHW."""
    c = x.shape[1]
    k = _BINOMIAL.to(x.dtype)
    x = F.pad(x, (2, 2, 2, 2), mode="replicate")
    x = F.conv2d(x, k.view(1, 1, 1, 5).repeat(c, 1, 1, 1), groups=c)
    x = F.conv2d(x, k.view(1, 1, 5, 1).repeat(c, 1, 1, 1), groups=c)
    return x[..., ::2, ::2]


def pyramid_gradient_l1(a: torch.Tensor, b: torch.Tensor, levels: int = 3) -> torch.Tensor:
    """Sum over pyramid levels of the mean L1 gap between forward-difference maps."""
    total = a.new_zeros(())
    for level in range(levels):
        if level:
            a, b = pyramid_down(a), pyramid_down(b)
        if a.shape[-1] > 1:
            total = total + ((a[..., 1:] - a[..., :-1]) - (b[..., 1:] - b[..., :-1])).abs().mean()
        if a.shape[-2] > 1:
            total = total + ((a[..., 1:, :] - a[..., :-1, :]) - (b[..., 1:, :] - b[..., :-1, :])).abs().mean()
    return total


def gradient_pyramid_proxy(h: torch.Tensor, href: torch.Tensor, mu: float = DEFAULT_MU) -> torch.Tensor:
    """Default perceptual term: pyramid-gradient L1 between mu-law tone-mapped images.

    The tone-mapping peak comes from the reference and is treated as a constant.
    """
    peak = href.detach().amax().clamp_min(1e-12)
    return pyramid_gradient_l1(mu_law(h, peak, mu), mu_law(href, peak, mu))


def perceptual_loss(h: torch.Tensor, href: torch.Tensor, impl: PerceptualFn | None = None) -> torch.Tensor:
    _check_pair(h, href)
    fn = impl or gradient_pyramid_proxy
    value = fn(h, href)
    if not torch.is_tensor(value) or value.ndim != 0:
        raise TypeError("perceptual plug-in must return a scalar tensor")
    if not torch.isfinite(value) or value < 0:
        raise ValueError(f"perceptual plug-in returned invalid value {float(value)}")
    return value


def total_loss(
    h: torch.Tensor,
    href: torch.Tensor,
    soft: MaskTriple,
    hard: MaskTriple,
    tau1: float = 0.5,
    tau2: float = 0.5,
    perceptual: PerceptualFn | None = None,
) -> torch.Tensor:
    return log_l2(h, href) + tau1 * perceptual_loss(h, href, perceptual) + tau2 * mask_loss(soft, hard)


def loss_terms(h, href, soft, hard, tau1=0.5, tau2=0.5, perceptual=None) -> dict[str, torch.Tensor]:
    """Individual components plus their weighted total, for logging."""
    rec = log_l2(h, href)
    per = perceptual_loss(h, href, perceptual)
    msk = mask_loss(soft, hard)
    return {"rec": rec, "perceptual": per, "mask": msk, "total": rec + tau1 * per + tau2 * msk}

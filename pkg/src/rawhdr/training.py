"""Initialization, Adam, step schedule, training loop and checkpoints."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import formats
from .errors import NumericalError
from .losses import loss_terms
from .masks import hard_masks
from .metrics import DEFAULT_MU, psnr_mu
from .net import NetConfig, RawHDRNet, packed_to_tensor, tensor_to_image
from .raw_model import RawMosaic, pack

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    lr_drop_epoch: int = 1000
    lr_drop_factor: float = 10.0
    epochs: int = 2000
    batch_size: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    crop_size: int = 64
    checkpoint_every: int = 0
    tau1: float = 0.5
    tau2: float = 0.5
    eval_every: int = 0
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if self.lr0 < 0:
            raise ValueError("lr0 must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.crop_size % 2:
            raise ValueError("crop_size is in Raw pixels and must be even")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# ------------------------------------------------------------ initialization


def _fan_in(module: nn.Module) -> int:
    w = module.weight
    if isinstance(module, nn.ConvTranspose2d):
        # each output pixel of a k=stride transposed conv sees in_channels inputs
        k = math.prod(module.kernel_size) // math.prod(module.stride)
        return module.in_channels * max(k, 1)
    if isinstance(module, nn.Conv2d):
        return (module.in_channels // module.groups) * math.prod(module.kernel_size)
    return w.shape[1]


def kaiming_init_(model: nn.Module, seed: int) -> nn.Module:
    """Zero-mean Gaussian weights with variance 2 / fan_in, zero biases, unit LN gains."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for _, m in sorted(model.named_modules(), key=lambda kv: kv[0]):
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                std = math.sqrt(2.0 / _fan_in(m))
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen, dtype=torch.float64) * std)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()
    return model


def init_model(config: NetConfig = NetConfig(), seed: int = 0, dtype=torch.float32) -> RawHDRNet:
    return kaiming_init_(RawHDRNet(config), seed).to(dtype)


def init_params(config: NetConfig = NetConfig(), seed: int = 0) -> dict[str, torch.Tensor]:
    return dict(init_model(config, seed).state_dict())


# ---------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new (params, state) without mutating inputs."""
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name, torch.zeros_like(p))
        v = state.v.get(name, torch.zeros_like(p))
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params[name] = p - lr * m_hat / (torch.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


def lr_at(epoch: int, config: TrainConfig) -> float:
    if epoch < config.lr_drop_epoch:
        return config.lr0
    return config.lr0 / config.lr_drop_factor


# --------------------------------------------------------------- checkpoints


def save_model(path, model: RawHDRNet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    formats.write_params(path, model.state_dict())
    formats.write_json(formats.sidecar_path(path), model.config.to_dict())


def load_model(path, dtype=torch.float32) -> RawHDRNet:
    """Load ``model.rhnp`` (or a training directory containing one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "model.rhnp"
    config = NetConfig.from_dict(formats.read_json(formats.sidecar_path(path)))
    model = RawHDRNet(config)
    params = formats.read_params(path)
    expected = model.state_dict()
    if set(params) != set(expected):
        missing = sorted(set(expected) ^ set(params))
        raise formats.FormatError(f"checkpoint does not match config; differing arrays: {missing[:5]}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in params.items()})
    return model.to(dtype)


def save_training_state(out_dir, model, state: AdamState, epoch: int, config: TrainConfig, history) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(out_dir / "model.rhnp", model)
    moments = {f"m.{k}": v for k, v in state.m.items()} | {f"v.{k}": v for k, v in state.v.items()}
    formats.write_params(out_dir / "optimizer.rhnp", moments)
    formats.write_json(out_dir / "train_state.json", {
        "epoch": epoch,
        "adam_step": state.step,
        "optimizer": "optimizer.rhnp",
        "seed": config.seed,
        "train_config": config.to_dict(),
        "history": history,
    })


def load_training_state(out_dir):
    """Return (model, adam_state, next_epoch, history)."""
    out_dir = Path(out_dir)
    meta = formats.read_json(out_dir / "train_state.json")
    model = load_model(out_dir / "model.rhnp")
    moments = formats.read_params(out_dir / meta["optimizer"])
    state = AdamState(
        step=meta["adam_step"],
        m={k[2:]: torch.from_numpy(v) for k, v in moments.items() if k.startswith("m.")},
        v={k[2:]: torch.from_numpy(v) for k, v in moments.items() if k.startswith("v.")},
    )
    return model, state, meta["epoch"], meta["history"]


# ---------------------------------------------------------------------- loop


def prepare_pairs(dataset) -> list[tuple[np.ndarray, np.ndarray]]:
    """(RawMosaic, HDR) pairs -> (packed input, HDR target) float arrays."""
    pairs = []
    for raw, hdr in dataset:
        packed = pack(raw) if isinstance(raw, RawMosaic) else np.asarray(raw)
        hdr = np.asarray(hdr, dtype=np.float64)
        if packed.shape != hdr.shape:
            raise ValueError(f"input {packed.shape} and target {hdr.shape} disagree")
        pairs.append((packed, hdr))
    return pairs


def random_crop(packed, hdr, crop_size: int, rng: np.random.Generator):
    c = crop_size // 2
    h, w = packed.shape[:2]
    if c >= h and c >= w:
        return packed, hdr
    c_h, c_w = min(c, h), min(c, w)
    i = int(rng.integers(0, h - c_h + 1))
    j = int(rng.integers(0, w - c_w + 1))
    return packed[i:i + c_h, j:j + c_w], hdr[i:i + c_h, j:j + c_w]


def evaluate_model(model: RawHDRNet, pairs, mu: float = DEFAULT_MU) -> float:
    """Mean PSNR-mu of the model over (packed, hdr) pairs."""
    dtype = next(model.parameters()).dtype
    scores = []
    with torch.no_grad():
        for packed, hdr in pairs:
            pred = tensor_to_image(model(packed_to_tensor(packed, dtype)).hdr)
            scores.append(psnr_mu(pred, hdr, mu))
    return float(np.mean(scores))


def train(
    dataset,
    net_config: NetConfig = NetConfig(),
    train_config: TrainConfig = TrainConfig(),
    holdout=None,
    out_dir=None,
    resume: bool = False,
    max_steps: int | None = None,
):
    """Fit a model on (RawMosaic, HDR) pairs; returns (model, history).

    Epoch ``e`` shuffles and crops with a generator seeded by (seed, e), so a
    run resumed from a checkpoint replays the same sample stream.
    """
    pairs = prepare_pairs(dataset)
    if not pairs:
        raise ValueError("training dataset is empty")
    holdout_pairs = prepare_pairs(holdout) if holdout else []
    cfg = train_config

    if resume:
        model, state, start_epoch, history = load_training_state(out_dir)
    else:
        model = init_model(net_config, cfg.seed)
        state, start_epoch, history = AdamState(), 0, []

    steps = 0
    next_epoch = start_epoch
    for epoch in range(start_epoch, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(pairs))
        lr = lr_at(epoch, cfg)
        sums: dict[str, float] = {}
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        for batch in batches:
            crops = [random_crop(*pairs[k], cfg.crop_size, rng) for k in batch]
            x = torch.cat([packed_to_tensor(p) for p, _ in crops])
            y = torch.cat([packed_to_tensor(t) for _, t in crops])
            model.zero_grad(set_to_none=True)
            out = model(x)
            terms = loss_terms(out.hdr, y, out.masks, hard_masks(x), cfg.tau1, cfg.tau2)
            if not torch.isfinite(terms["total"]):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}: " + ", ".join(f"{k}={float(v)}" for k, v in terms.items())
                )
            terms["total"].backward()
            params = {n: p.detach() for n, p in model.named_parameters()}
            grads = {n: (p.grad if p.grad is not None else torch.zeros_like(p)) for n, p in model.named_parameters()}
            new_params, state = adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            with torch.no_grad():
                for n, p in model.named_parameters():
                    p.copy_(new_params[n])
            for k, v in terms.items():
                sums[k] = sums.get(k, 0.0) + v.item()
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break

        record = {"epoch": epoch, "lr": lr, **{k: v / len(batches) for k, v in sums.items()}}
        if holdout_pairs and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            record["holdout_psnr_mu"] = evaluate_model(model, holdout_pairs, cfg.mu)
        history.append(record)
        log.debug("epoch %d: %s", epoch, record)
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_training_state(out_dir, model, state, epoch + 1, cfg, history)
        next_epoch = epoch + 1
        if max_steps is not None and steps >= max_steps:
            break

    if out_dir is not None:
        save_training_state(out_dir, model, state, next_epoch, cfg, history)
    return model, history

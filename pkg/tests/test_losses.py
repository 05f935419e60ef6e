import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from rawhdr.errors import ShapeError
from rawhdr.losses import (
    LOG_EPS,
    gradient_pyramid_proxy,
    log_l2,
    loss_terms,
    mu_law,
    perceptual_loss,
    pyramid_gradient_l1,
    total_loss,
)
from rawhdr.masks import MaskTriple, hard_masks, mask_loss

D = torch.float64


def rand(*shape, seed=0, lo=0.0, hi=1.0):
    g = torch.Generator().manual_seed(seed)
    return lo + (hi - lo) * torch.rand(*shape, generator=g, dtype=D)


class TestLogL2:
    def test_identity(self):
        h = rand(1, 4, 6, 6)
        assert log_l2(h, h).item() == 0.0

    def test_factor_e(self):
        href = rand(4, 8, 8, lo=1.0, hi=100.0)
        val = log_l2(math.e * href, href).item()
        # exact value with eps: mean of log((e*x + eps) / (x + eps))**2
        x = href.numpy()
        oracle = np.mean(np.log((math.e * x + LOG_EPS) / (x + LOG_EPS)) ** 2)
        assert val == pytest.approx(oracle, rel=1e-12)
        assert abs(val - 1.0) < 2 * (math.e - 1) * LOG_EPS / 1.0

    def test_loop_oracle(self):
        h, href = rand(3, 5, 4, seed=1), rand(3, 5, 4, seed=2)
        a, b = h.numpy().ravel(), href.numpy().ravel()
        acc = 0.0
        for i in range(a.size):
            acc += (math.log(a[i] + LOG_EPS) - math.log(b[i] + LOG_EPS)) ** 2
        assert log_l2(h, href).item() == pytest.approx(acc / a.size, rel=1e-12)

    def test_batch_sum_of_sample_means(self):
        h, href = rand(3, 4, 5, 5, seed=3), rand(3, 4, 5, 5, seed=4)
        per = sum(log_l2(h[i], href[i]) for i in range(3))
        assert log_l2(h, href).item() == pytest.approx(per.item(), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ShapeError):
            log_l2(rand(1, 4, 4, 4), rand(1, 4, 4, 2))
        with pytest.raises(ValueError):
            log_l2(-rand(1, 4, 4, 4, lo=0.1), rand(1, 4, 4, 4))


def pyramid_oracle(a: np.ndarray, b: np.ndarray, levels=3) -> float:
    """Direct loops: binomial blur with clamped indices, decimate, forward differences."""
    k = np.array([1, 4, 6, 4, 1]) / 16.0

    def down(x):
        n, c, h, w = x.shape
        tmp = np.zeros_like(x)
        for i in range(h):
            for j in range(w):
                tmp[..., i, j] = sum(k[t] * x[..., i, min(max(j + t - 2, 0), w - 1)] for t in range(5))
        out = np.zeros_like(x)
        for i in range(h):
            for j in range(w):
                out[..., i, j] = sum(k[t] * tmp[..., min(max(i + t - 2, 0), h - 1), j] for t in range(5))
        return out[..., ::2, ::2]

    total = 0.0
    for level in range(levels):
        if level:
            a, b = down(a), down(b)
        total += np.mean(np.abs(np.diff(a, axis=-1) - np.diff(b, axis=-1)))
        total += np.mean(np.abs(np.diff(a, axis=-2) - np.diff(b, axis=-2)))
    return total


class TestPerceptual:
    def test_identity(self):
        h = rand(1, 4, 16, 16, hi=50.0)
        assert perceptual_loss(h, h).item() == 0.0
        assert perceptual_loss(h, h, impl=lambda a, b: (a - b).abs().mean()).item() == 0.0

    def test_dc_offset_invariance(self):
        x = rand(1, 4, 16, 16)
        assert pyramid_gradient_l1(x + 0.37, x).item() == pytest.approx(0.0, abs=1e-15)

    def test_loop_oracle(self):
        h, href = rand(1, 2, 12, 16, seed=5, hi=4.0), rand(1, 2, 12, 16, seed=6, hi=4.0)
        peak = href.max()
        ta, tb = mu_law(h, peak).numpy(), mu_law(href, peak).numpy()
        assert gradient_pyramid_proxy(h, href).item() == pytest.approx(pyramid_oracle(ta, tb), rel=1e-12)

    def test_plugin_contract(self):
        h, href = rand(1, 4, 4, 4), rand(1, 4, 4, 4, seed=1)
        with pytest.raises(ValueError):
            perceptual_loss(h, href, impl=lambda a, b: torch.tensor(-1.0))
        with pytest.raises(TypeError):
            perceptual_loss(h, href, impl=lambda a, b: torch.ones(2))
        with pytest.raises(ShapeError):
            perceptual_loss(h, rand(1, 4, 4, 2))

    def test_plugin_failure_surfaces(self):
        def broken(a, b):
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match="boom"):
            perceptual_loss(rand(1, 4, 4, 4), rand(1, 4, 4, 4), impl=broken)


def setup(seed=0):
    h, href = rand(1, 4, 16, 16, seed=seed, hi=3.0), rand(1, 4, 16, 16, seed=seed + 1, hi=3.0)
    hard = hard_masks(rand(1, 4, 16, 16, seed=seed + 2))
    over = rand(1, 1, 16, 16, seed=seed + 3)
    under = rand(1, 1, 16, 16, seed=seed + 4) * (1 - over)
    soft = MaskTriple(over, under, torch.clamp(1 - over - under, min=0))
    return h, href, soft, hard


class TestTotalLoss:
    def test_zero_weights(self):
        h, href, soft, hard = setup()
        assert total_loss(h, href, soft, hard, 0.0, 0.0).item() == log_l2(h, href).item()

    def test_perfect(self):
        h, _, _, hard = setup()
        assert total_loss(h, h, hard, hard).item() == 0.0

    @given(st.integers(0, 10_000))
    def test_recomposition(self, seed):
        h, href, soft, hard = setup(seed)
        expect = log_l2(h, href) + 0.5 * gradient_pyramid_proxy(h, href) + 0.5 * mask_loss(soft, hard)
        assert total_loss(h, href, soft, hard).item() == pytest.approx(expect.item(), rel=1e-12)
        terms = loss_terms(h, href, soft, hard)
        assert terms["total"].item() == pytest.approx(expect.item(), rel=1e-12)
        assert all(v.item() >= 0 for v in terms.values())

    def test_linear_in_weights(self):
        h, href, soft, hard = setup(7)
        f = lambda t1, t2: total_loss(h, href, soft, hard, t1, t2).item()
        base = f(0, 0)
        d1, d2 = f(1, 0) - base, f(0, 1) - base
        assert f(0.3, 0.8) == pytest.approx(base + 0.3 * d1 + 0.8 * d2, rel=1e-12)

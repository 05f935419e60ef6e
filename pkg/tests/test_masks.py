import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from rawhdr.errors import NumericalError, ShapeError
from rawhdr.masks import MaskTriple, SoftMasks, hard_masks, mask_loss, soft_masks
from rawhdr.training import kaiming_init_


def px(values):
    return torch.tensor(values, dtype=torch.float64).view(1, 4, 1, 1)


class TestHardMasks:
    def test_over(self):
        m = hard_masks(px([0.1, 0.99, 0.2, 0.97]))
        assert (m.over.item(), m.under.item(), m.well.item()) == (1, 0, 0)

    def test_midtone(self):
        m = hard_masks(px([0.5] * 4))
        assert (m.over.item(), m.under.item(), m.well.item()) == (0, 0, 1)

    def test_under(self):
        m = hard_masks(px([0.04] * 4))
        assert (m.over.item(), m.under.item(), m.well.item()) == (0, 1, 0)

    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            hard_masks(px([0.5] * 4), 0.6, 0.6)

    @given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.45), st.floats(0.55, 1.0))
    def test_idempotent_after_midtone_embedding(self, seed, lo, hi):
        x = torch.rand(2, 4, 5, 6, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)
        m = hard_masks(x, lo, hi)
        embedded = (m.over * 1.0 + m.under * 0.0 + m.well * 0.5).expand(-1, 4, -1, -1)
        again = hard_masks(embedded, lo, hi)
        for a, b in zip(m, again):
            assert torch.equal(a, b)


def net(seed=0, width=8):
    return kaiming_init_(SoftMasks(width), seed).double()


class TestSoftMasks:
    @given(st.integers(0, 2**31 - 1))
    def test_ranges_and_well_rule(self, seed):
        g = torch.Generator().manual_seed(seed)
        x = torch.rand(1, 4, 6, 6, generator=g, dtype=torch.float64)
        m = soft_masks(x, net(seed % 1000))
        assert m.over.shape == (1, 1, 6, 6)
        assert ((m.over > 0) & (m.over < 1)).all() and ((m.under > 0) & (m.under < 1)).all()
        assert ((m.well >= 0) & (m.well <= 1)).all()
        oracle = np.maximum(1 - m.over.detach().numpy() - m.under.detach().numpy(), 0)
        assert np.array_equal(m.well.detach().numpy(), oracle)
        total = m.over + m.under + m.well
        assert (total >= 1 - 1e-15).all()
        le1 = (m.over + m.under) <= 1
        assert torch.allclose(total[le1], torch.ones_like(total[le1]), atol=1e-15)

    def test_saturated_negative_bias(self):
        n = net()
        with torch.no_grad():
            for p in (n.p_over, n.p_under):
                p.exit.weight.zero_()
                p.exit.bias.fill_(-20.0)
        m = n(torch.rand(1, 4, 4, 4, dtype=torch.float64))
        assert m.over.max() < 1e-8 and m.under.max() < 1e-8 and m.well.min() > 1 - 1e-8

    def test_nonfinite_reported(self):
        n = net()
        x = torch.rand(1, 4, 4, 4, dtype=torch.float64)
        x[0, 0, 2, 3] = float("nan")
        with pytest.raises(NumericalError, match="index"):
            n(x)


def triple(over, under):
    return MaskTriple(over, under, torch.clamp(1 - over - under, min=0))


class TestMaskLoss:
    def test_identity(self):
        h = hard_masks(torch.rand(1, 4, 8, 8))
        assert mask_loss(h, h).item() == 0.0

    def test_offset(self):
        h = hard_masks(torch.rand(1, 4, 8, 8, dtype=torch.float64))
        s = triple(h.over + 0.1, h.under)
        assert mask_loss(s, h).item() == pytest.approx(0.1, abs=1e-15)

    def test_loop_oracle(self, rng):
        so, su, ho, hu = (rng.uniform(0, 1, (1, 1, 5, 7)) for _ in range(4))
        val = mask_loss(triple(*map(torch.tensor, (so, su))), triple(*map(torch.tensor, (ho, hu)))).item()
        n = so.size
        a = sum(abs(so.flat[i] - ho.flat[i]) for i in range(n)) / n
        b = sum(abs(su.flat[i] - hu.flat[i]) for i in range(n)) / n
        assert val == pytest.approx(a + b, rel=1e-12)

    def test_shape_mismatch(self):
        a = hard_masks(torch.rand(1, 4, 4, 4))
        b = hard_masks(torch.rand(1, 4, 4, 6))
        with pytest.raises(ShapeError):
            mask_loss(a, b)


@pytest.mark.parametrize("dtype", [torch.float32, torch.float64])
def test_open_sigmoid_extremes(dtype):
    from rawhdr.masks import open_sigmoid

    out = open_sigmoid(torch.tensor([-1e4, -50.0, 0.0, 50.0, 1e4], dtype=dtype))
    assert ((out > 0) & (out < 1)).all()
    assert out[2] == 0.5

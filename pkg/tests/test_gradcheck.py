import pytest
import torch

from rawhdr.gradcheck import OPS, check, grad_check


@pytest.mark.parametrize("op", sorted(OPS))
def test_ops_within_tolerance(op):
    assert grad_check(op, seed=1).max_rel_err <= 1e-4


def test_log_l2_tight():
    assert grad_check("log_l2", seed=0).max_rel_err <= 1e-6


def test_detects_wrong_gradient():
    x = torch.rand(5, dtype=torch.float64)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, t):
            ctx.save_for_backward(t)
            return (t**2).sum()

        @staticmethod
        def backward(ctx, g):
            (t,) = ctx.saved_tensors
            return g * 3 * t  # should be 2 t

    errs = check(lambda: Wrong.apply(x), {"x": x}, seed=0)
    assert errs["x"] > 0.1


def test_unknown_op():
    with pytest.raises(KeyError):
        grad_check("nope")

"""Weighted fusion of a bracketed Raw stack into linear HDR ground truth."""

from __future__ import annotations

import numpy as np

from .camera_sim import ExposureStack
from .errors import ShapeError
from .raw_model import pack

Z_LO, Z_HI = 0.02, 0.98


def hat_weight(z: np.ndarray, z_lo: float = Z_LO, z_hi: float = Z_HI) -> np.ndarray:
    """Triangular weight, zero at and outside the window ends."""
    return np.maximum(np.minimum(z - z_lo, z_hi - z), 0.0)


def _packed_frames(stack: ExposureStack) -> np.ndarray:
    if len(stack) == 0:
        raise ValueError("exposure stack is empty")
    shape = stack.mosaics[0].shape
    for m in stack.mosaics:
        if m.shape != shape:
            raise ShapeError(f"stack frames disagree in shape: {m.shape} vs {shape}")
    return np.stack([pack(m) for m in stack.mosaics])


def merge(stack: ExposureStack, z_lo: float = Z_LO, z_hi: float = Z_HI) -> np.ndarray:
    """Merge to an (h, w, 4) radiance map in 0 EV units.

    Samples whose weights are all zero fall back to the shortest exposure
    when that one is blown out, otherwise to the longest exposure.
    """
    z = _packed_frames(stack)  # (n, h, w, 4)
    order = np.argsort(stack.evs)
    z = z[order]
    t = np.exp2(np.asarray(stack.evs, dtype=np.float64)[order])[:, None, None, None]

    w = hat_weight(z, z_lo, z_hi)
    wsum = w.sum(axis=0)
    num = (w * z / t).sum(axis=0)
    merged = np.divide(num, wsum, out=np.zeros_like(num), where=wsum > 0)

    short, long_ = z[0] / t[0], z[-1] / t[-1]
    fallback = np.where(z[0] >= z_hi, short, long_)
    return np.where(wsum > 0, merged, fallback)


def coverage_report(stack: ExposureStack, z_lo: float = Z_LO, z_hi: float = Z_HI) -> float:
    """Fraction of packed pixels well exposed (all 4 weights > 0) in some frame."""
    w = hat_weight(_packed_frames(stack), z_lo, z_hi)
    covered = np.any(np.all(w > 0, axis=-1), axis=0)
    return float(covered.mean())

"""HDR evaluation metrics on numpy arrays (float64 throughout)."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

DEFAULT_MU = 5000.0
PSNR_TABLE_CAP = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mu_tonemap(x, mu: float = DEFAULT_MU, peak: float | None = None) -> np.ndarray:
    """log(1 + mu * clamp(x / peak, 0, 1)) / log(1 + mu); peak defaults to max(x)."""
    x = np.asarray(x, dtype=np.float64)
    if peak is None:
        peak = float(x.max())
    if mu <= 0 or peak <= 0:
        raise ValueError(f"mu and peak must be positive (mu={mu}, peak={peak})")
    return np.log1p(mu * np.clip(x / peak, 0.0, 1.0)) / math.log1p(mu)


def psnr(a, b, peak: float | None = None) -> float:
    """PSNR in dB, peak taken from the reference ``b`` unless given; identical inputs give inf."""
    a, b = _pair(a, b)
    if peak is None:
        peak = float(b.max())
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr_mu(a, b, mu: float = DEFAULT_MU, peak: float | None = None) -> float:
    a, b = _pair(a, b)
    if peak is None:
        peak = float(b.max())
    return psnr(mu_tonemap(a, mu, peak), mu_tonemap(b, mu, peak), 1.0)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2-D image."""
    n = g.size
    img = sliding_window_view(img, n, axis=0) @ g
    return sliding_window_view(img, n, axis=1) @ g


def _ssim_maps(a: np.ndarray, b: np.ndarray, data_range: float):
    g = gaussian_window()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    luminance = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    contrast_structure = (2 * cov + c2) / (var_a + var_b + c2)
    return luminance, contrast_structure


def _channels(x: np.ndarray):
    return [x] if x.ndim == 2 else [x[..., c] for c in range(x.shape[-1])]


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs spatial sides >= {SSIM_WINDOW}, got {a.shape[:2]}")
    vals = []
    for ca, cb in zip(_channels(a), _channels(b)):
        lum, cs = _ssim_maps(ca, cb, data_range)
        vals.append(float(np.mean(lum * cs)))
    return float(np.mean(vals))


def _avg_pool2(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b, data_range: float = 1.0, weights=MS_SSIM_WEIGHTS) -> float:
    """Five-scale SSIM; per-scale terms are clipped at 0 so the product stays in [0, 1]."""
    a, b = _pair(a, b)
    min_side = SSIM_WINDOW * 2 ** (len(weights) - 1)
    if min(a.shape[:2]) < min_side:
        raise ShapeError(f"MS-SSIM needs spatial sides >= {min_side}, got {a.shape[:2]}")
    vals = []
    for ca, cb in zip(_channels(a), _channels(b)):
        score = 1.0
        for scale, wgt in enumerate(weights):
            lum, cs = _ssim_maps(ca, cb, data_range)
            if scale == len(weights) - 1:
                term = float(np.mean(lum * cs))
            else:
                term = float(np.mean(cs))
                ca, cb = _avg_pool2(ca), _avg_pool2(cb)
            score *= max(term, 0.0) ** wgt
        vals.append(score)
    return float(np.mean(vals))


def evaluate(pred, ref, mu: float = DEFAULT_MU, scene_id: str = "") -> dict:
    """Metric record for one scene; MS-SSIM is None when the image is too small."""
    pred, ref = _pair(pred, ref)
    peak = float(ref.max())
    tm_pred, tm_ref = mu_tonemap(pred, mu, peak), mu_tonemap(ref, mu, peak)
    try:
        mss = ms_ssim(tm_pred, tm_ref)
    except ShapeError:
        mss = None
    return {
        "scene_id": scene_id,
        "psnr": psnr(pred, ref, peak),
        "psnr_mu": psnr(tm_pred, tm_ref, 1.0),
        "ssim": ssim(tm_pred, tm_ref),
        "ms_ssim": mss,
        "mu": mu,
        "peak": peak,
    }


def cap_for_table(value: float | None) -> float | None:
    if value is None:
        return None
    return min(value, PSNR_TABLE_CAP)

"""Synthetic HDR scenes and a linear Raw capture model.

The capture model is channel-variant: every CFA site sees the scene through
its own relative sensitivity, then gain, clipping and quantization are
applied. Default sensitivities reproduce the channel-mean asymmetry of a
consumer DSLR (green brightest, then blue, then red).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .raw_model import B, G1, G2, R, TILE_OFFSETS, RawMosaic, pack_array

# channel means 704.93 (R), 1273.61 (G), 942.00 (B) normalized by green
DEFAULT_SENSITIVITY = (round(704.93 / 1273.61, 3), 1.0, round(942.00 / 1273.61, 3))
DEFAULT_EVS = (-3.0, 0.0, 3.0)

# packed channel -> scene RGB index
_SCENE_CHANNEL = {R: 0, G1: 1, B: 2, G2: 1}


@dataclass(frozen=True)
class CameraProfile:
    sensitivity: tuple[float, float, float] = DEFAULT_SENSITIVITY
    bit_depth: int = 14
    black_level: int = 512
    white_level: int = 16383
    read_noise_sigma: float = 0.0
    shot_noise_gain: float = 0.0

    def __post_init__(self):
        s_r, s_g, s_b = self.sensitivity
        object.__setattr__(self, "sensitivity", (float(s_r), float(s_g), float(s_b)))
        if not (s_g > s_r > 0 and s_g > s_b > 0):
            raise ValueError(f"sensitivities must be positive and green-dominant, got {self.sensitivity}")
        if not 0 <= self.black_level < self.white_level <= 2**self.bit_depth - 1:
            raise ValueError("inconsistent black/white levels for bit depth")
        if self.read_noise_sigma < 0 or self.shot_noise_gain < 0:
            raise ValueError("noise parameters must be non-negative")

    @property
    def span(self) -> int:
        return self.white_level - self.black_level

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sensitivity"] = list(self.sensitivity)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CameraProfile":
        d = dict(d)
        if "sensitivity" in d:
            d["sensitivity"] = tuple(d["sensitivity"])
        return cls(**d)


@dataclass
class ExposureStack:
    mosaics: list[RawMosaic]
    evs: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.mosaics:
            raise ValueError("exposure stack is empty")
        if len(self.evs) != len(self.mosaics):
            raise ValueError("need one EV per mosaic")
        if any(b <= a for a, b in zip(self.evs, self.evs[1:])):
            raise ValueError(f"EVs must be strictly increasing, got {self.evs}")

    def __len__(self):
        return len(self.mosaics)


def _value_noise(rng: np.random.Generator, size, cells: int) -> np.ndarray:
    """Smooth random field in [0, 1] from a bicubically upsampled coarse grid."""
    h, w = size
    grid = rng.random((cells + 1, cells + 1))
    field_ = ndimage.zoom(grid, (h / (cells + 1), w / (cells + 1)), order=3, mode="nearest")
    field_ = field_[:h, :w]
    lo, hi = field_.min(), field_.max()
    return (field_ - lo) / (hi - lo + 1e-12)


def _shape_mask(rng: np.random.Generator, size, radius_range) -> np.ndarray:
    """Disk or rectangle rasterized on the 2x2 CFA tile grid.

    Edges never split a Bayer tile, so all four sites of a packed pixel see
    the same side of a hard edge (as the optical low-pass of a real camera
    would roughly ensure).
    """
    h, w = size[0] // 2, size[1] // 2
    yy, xx = np.mgrid[0:h, 0:w] + 0.5
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    r = rng.uniform(*radius_range) * min(h, w)
    if rng.random() < 0.5:
        tiles = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    else:
        ry = r * rng.uniform(0.5, 1.5)
        tiles = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= r)
    return np.repeat(np.repeat(tiles, 2, axis=0), 2, axis=1)


def render_scene(
    seed: int,
    size: tuple[int, int],
    dynamic_range_bits: int = 20,
    center_log2: float = 0.0,
    fill: float | None = None,
    neutral: bool = False,
) -> np.ndarray:
    """Render an (H, W, 3) linear RGB radiance map.

    Radiance spans ``[2**(center_log2 - bits/2), 2**(center_log2 + bits/2)]``;
    both ends are always present, as a hard-edged emitter and a shadow well.
    ``fill`` short-circuits everything and returns a uniform scene;
    ``neutral`` drops all colour so R = G = B at every pixel.
    """
    h, w = size
    if h % 2 or w % 2:
        raise ValueError(f"scene sides must be even, got {size}")
    if not 8 <= dynamic_range_bits <= 24:
        raise ValueError("dynamic_range_bits must lie in [8, 24]")
    if fill is not None:
        return np.full((h, w, 3), float(fill))

    rng = np.random.default_rng(seed)
    hi = center_log2 + dynamic_range_bits / 2
    lo = center_log2 - dynamic_range_bits / 2

    # base: mid-tones metered around 18% grey, [2**-5, 2**-1] relative to center
    base = center_log2 - 5.0 + 4.0 * _value_noise(rng, size, cells=int(rng.integers(3, 7)))
    log_rad = np.repeat(base[..., None], 3, axis=2)
    for c in range(3):
        log_rad[..., c] += 0.6 * (_value_noise(rng, size, cells=3) - 0.5)
    # fine texture so hard regions carry structure
    log_rad += 0.4 * (_value_noise(rng, size, cells=max(4, min(h, w) // 8))[..., None] - 0.5)

    n_wells = int(rng.integers(1, 4))
    for k in range(n_wells):
        m = _shape_mask(rng, size, (0.08, 0.2))
        depth = lo if k == 0 else rng.uniform(lo, center_log2 - 4.0)
        log_rad[m] = depth + 0.5 * (log_rad[m] - base[m][..., None]) + rng.uniform(0, 1.0)

    n_emitters = int(rng.integers(1, 4))
    for k in range(n_emitters):
        m = _shape_mask(rng, size, (0.04, 0.12))
        level = hi if k == 0 else rng.uniform(center_log2 + 1.0, hi)
        tint = rng.uniform(-0.5, 0.5, size=3)
        log_rad[m] = level - 0.5 - np.abs(tint)

    if neutral:
        log_rad[:] = log_rad.mean(axis=2, keepdims=True)
    log_rad = np.clip(log_rad, lo, hi)
    # pin both range ends on 2x2-aligned tiles so every channel sees them
    ty, tx = (int(rng.integers(0, h // 2)) * 2, int(rng.integers(0, w // 2)) * 2)
    log_rad[ty:ty + 2, tx:tx + 2] = hi
    by, bx = (int(rng.integers(0, h // 2)) * 2, int(rng.integers(0, w // 2)) * 2)
    if (by, bx) == (ty, tx):
        by = (by + 2) % h
    log_rad[by:by + 2, bx:bx + 2] = lo
    return np.exp2(log_rad)


def cfa_sensitivity_map(profile: CameraProfile, shape) -> np.ndarray:
    """Per-site channel gain for an RGGB mosaic of the given shape."""
    s = profile.sensitivity
    gains = np.empty(shape)
    for ch, (dy, dx) in TILE_OFFSETS.items():
        gains[dy::2, dx::2] = s[_SCENE_CHANNEL[ch]]
    return gains


def mosaic_radiance(scene: np.ndarray) -> np.ndarray:
    """Sample an (H, W, 3) scene through an RGGB color filter array."""
    h, w, _ = scene.shape
    plane = np.empty((h, w))
    for ch, (dy, dx) in TILE_OFFSETS.items():
        plane[dy::2, dx::2] = scene[dy::2, dx::2, _SCENE_CHANNEL[ch]]
    return plane


def expected_packed(scene: np.ndarray, profile: CameraProfile) -> np.ndarray:
    """Noise- and clip-free packed signal ``s_c * radiance`` at 0 EV."""
    plane = mosaic_radiance(scene) * cfa_sensitivity_map(profile, scene.shape[:2])
    return pack_array(plane)


def capture(scene: np.ndarray, profile: CameraProfile, ev: float = 0.0, seed: int = 0) -> RawMosaic:
    scene = np.asarray(scene, dtype=np.float64)
    if scene.ndim != 3 or scene.shape[2] != 3:
        raise ValueError(f"scene must be (H, W, 3), got {scene.shape}")
    if scene.min() < 0:
        raise ValueError("scene radiance must be non-negative")
    signal = np.exp2(ev) * mosaic_radiance(scene) * cfa_sensitivity_map(profile, scene.shape[:2])
    signal = signal * profile.span
    rng = np.random.default_rng(seed)
    if profile.shot_noise_gain > 0:
        electrons = rng.poisson(signal / profile.shot_noise_gain)
        signal = electrons * profile.shot_noise_gain
    if profile.read_noise_sigma > 0:
        signal = signal + rng.normal(0.0, profile.read_noise_sigma, size=signal.shape)
    counts = np.clip(np.round(signal + profile.black_level), 0, profile.white_level)
    return RawMosaic(
        data=counts.astype(np.uint16),
        black_level=profile.black_level,
        white_level=profile.white_level,
        bit_depth=profile.bit_depth,
        exposure_ev=float(ev),
    )


def bracket(scene, profile: CameraProfile, evs=DEFAULT_EVS, seed: int = 0) -> ExposureStack:
    evs = [float(e) for e in evs]
    if not evs:
        raise ValueError("bracket needs at least one EV")
    mosaics = [capture(scene, profile, ev, seed + i) for i, ev in enumerate(evs)]
    return ExposureStack(mosaics=mosaics, evs=evs)


def simulate_srgb(
    packed: np.ndarray,
    sensitivity=DEFAULT_SENSITIVITY,
    white_balance: bool = True,
    gamma: float | None = 2.2,
) -> np.ndarray:
    """Minimal camera ISP: green averaging, white balance, gamma, 8-bit quantization."""
    packed = np.asarray(packed, dtype=np.float64)
    rgb = np.stack([packed[..., R], 0.5 * (packed[..., G1] + packed[..., G2]), packed[..., B]], axis=-1)
    if white_balance:
        s_r, s_g, s_b = sensitivity
        rgb = rgb * np.array([s_g / s_r, 1.0, s_g / s_b])
    rgb = np.clip(rgb, 0.0, 1.0)
    if gamma:
        rgb = rgb ** (1.0 / gamma)
    return np.round(rgb * 255.0) / 255.0

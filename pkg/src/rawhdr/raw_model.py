"""Raw mosaic and packed-image types, plus the Bayer packing transforms.

Packed layout is fixed as channel order [R, G1, B, G2] where, for the RGGB
tile at (2i, 2j), G1 sits at (2i, 2j+1) and G2 at (2i+1, 2j).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidProfileError, ShapeError

# channel indices in the packed layout
R, G1, B, G2 = 0, 1, 2, 3
# (row, col) offset of every packed channel inside an RGGB tile
TILE_OFFSETS = {R: (0, 0), G1: (0, 1), B: (1, 1), G2: (1, 0)}


@dataclass(frozen=True, eq=False)
class RawMosaic:
    data: np.ndarray
    black_level: int = 512
    white_level: int = 16383
    bit_depth: int = 14
    exposure_ev: float = 0.0
    cfa: str = "RGGB"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ShapeError(f"mosaic must be 2-D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise TypeError(f"mosaic data must be integer counts, got {data.dtype}")
        if data.shape[0] % 2 or data.shape[1] % 2:
            raise ShapeError(f"mosaic sides must be even, got {data.shape}")
        if self.cfa != "RGGB":
            raise ValueError(f"unsupported CFA {self.cfa!r}; only RGGB is handled")
        max_count = 2**self.bit_depth - 1
        if not 0 <= self.black_level <= self.white_level <= max_count:
            raise InvalidProfileError(
                f"levels black={self.black_level} white={self.white_level} "
                f"invalid for {self.bit_depth}-bit data"
            )
        if data.size and (data.min() < 0 or data.max() > max_count):
            raise ValueError(f"counts outside [0, {max_count}]")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def metadata(self) -> dict:
        return {
            "cfa": self.cfa,
            "black_level": int(self.black_level),
            "white_level": int(self.white_level),
            "bit_depth": int(self.bit_depth),
            "exposure_ev": float(self.exposure_ev),
        }

    def __eq__(self, other):
        if not isinstance(other, RawMosaic):
            return NotImplemented
        return self.metadata() == other.metadata() and np.array_equal(self.data, other.data)


class GuidePair(NamedTuple):
    green: np.ndarray  # (h, w, 2): [G1, G2]
    redblue: np.ndarray  # (h, w, 2): [R, B]


def normalize(mosaic: RawMosaic) -> np.ndarray:
    span = mosaic.white_level - mosaic.black_level
    if span <= 0:
        raise InvalidProfileError("white_level equals black_level")
    out = (mosaic.data.astype(np.float64) - mosaic.black_level) / span
    return np.clip(out, 0.0, 1.0)


def pack(mosaic: RawMosaic) -> np.ndarray:
    """Normalize an RGGB mosaic and fold it into an (H/2, W/2, 4) array."""
    if mosaic.cfa != "RGGB":
        raise ValueError(f"unsupported CFA {mosaic.cfa!r}")
    norm = normalize(mosaic)
    return pack_array(norm)


def pack_array(plane: np.ndarray) -> np.ndarray:
    """Spatial packing of any (H, W) plane, no normalization."""
    plane = np.asarray(plane)
    if plane.ndim != 2 or plane.shape[0] % 2 or plane.shape[1] % 2:
        raise ShapeError(f"cannot pack plane of shape {plane.shape}")
    h, w = plane.shape[0] // 2, plane.shape[1] // 2
    out = np.empty((h, w, 4), dtype=plane.dtype)
    for ch, (dy, dx) in TILE_OFFSETS.items():
        out[..., ch] = plane[dy::2, dx::2]
    return out


def unpack(packed: np.ndarray) -> np.ndarray:
    packed = np.asarray(packed)
    if packed.ndim != 3 or packed.shape[-1] != 4:
        raise ShapeError(f"packed image must be (h, w, 4), got {packed.shape}")
    h, w, _ = packed.shape
    out = np.empty((2 * h, 2 * w), dtype=packed.dtype)
    for ch, (dy, dx) in TILE_OFFSETS.items():
        out[dy::2, dx::2] = packed[..., ch]
    return out


def extract_guides(packed: np.ndarray) -> GuidePair:
    packed = np.asarray(packed)
    if packed.ndim != 3 or packed.shape[-1] != 4:
        raise ShapeError(f"packed image must be (h, w, 4), got {packed.shape}")
    return GuidePair(green=packed[..., [G1, G2]], redblue=packed[..., [R, B]])


def check_packed(packed: np.ndarray) -> np.ndarray:
    packed = np.asarray(packed)
    if packed.ndim != 3 or packed.shape[-1] != 4:
        raise ShapeError(f"packed image must be (h, w, 4), got {packed.shape}")
    if packed.size and (packed.min() < 0 or packed.max() > 1):
        raise ValueError("packed values must lie in [0, 1]")
    return packed


def check_hdr(hdr: np.ndarray) -> np.ndarray:
    hdr = np.asarray(hdr)
    if hdr.ndim != 3:
        raise ShapeError(f"HDR image must be (h, w, c), got {hdr.shape}")
    if not np.all(np.isfinite(hdr)):
        raise ValueError("HDR image contains non-finite values")
    if hdr.size and hdr.min() < 0:
        raise ValueError("HDR image contains negative radiance")
    return hdr

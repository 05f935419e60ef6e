"""On-disk formats.

* Raw mosaics: binary 16-bit PGM (``P5``, maxval 65535, big-endian samples)
  plus a sibling ``.json`` with cfa / black_level / white_level / bit_depth /
  exposure_ev.
* HDR images: ``RHDR`` magic, little-endian u32 h, w, c, then float32 LE
  row-major, channel-interleaved samples.
* Network parameters: ``RHNP`` magic, u32 version, u32 count, then per array
  u16 name length, UTF-8 name, u8 rank, u32 dims, float32 LE data. The net
  config lives in a sibling ``.json``.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .raw_model import RawMosaic

RHDR_MAGIC = b"RHDR"
RHNP_MAGIC = b"RHNP"
RHNP_VERSION = 1

_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


# ------------------------------------------------------------------- raw PGM


def encode_pgm16(data: np.ndarray) -> bytes:
    data = np.asarray(data)
    h, w = data.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    return header + data.astype(">u2").tobytes()


def decode_pgm16(buf: bytes) -> np.ndarray:
    m = _PGM_HEADER.match(buf)
    if not buf.startswith(b"P5") or m is None:
        raise FormatError("not a binary PGM (magic P5 expected)")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 65535:
        raise FormatError(f"expected 16-bit PGM (maxval 65535), got maxval {maxval}")
    payload = buf[m.end():]
    if len(payload) != 2 * w * h:
        raise FormatError(f"PGM payload has {len(payload)} bytes, expected {2 * w * h}")
    return np.frombuffer(payload, dtype=">u2").reshape(h, w).astype(np.uint16)


def encode_pgm8(data: np.ndarray) -> bytes:
    """8-bit PGM, used for label/index images."""
    data = np.asarray(data)
    h, w = data.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.astype(np.uint8).tobytes()


def write_raw(path, mosaic: RawMosaic) -> None:
    path = Path(path)
    path.write_bytes(encode_pgm16(mosaic.data))
    sidecar_path(path).write_text(json.dumps(mosaic.metadata(), indent=2))


def read_raw(path) -> RawMosaic:
    path = Path(path)
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise FormatError(f"missing metadata sidecar {meta_path}")
    data = decode_pgm16(path.read_bytes())
    meta = json.loads(meta_path.read_text())
    return RawMosaic(data=data, **meta)


# ------------------------------------------------------------------ HDR RHDR


def encode_hdr(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 3:
        raise FormatError(f"HDR image must be (h, w, c), got {img.shape}")
    h, w, c = img.shape
    return RHDR_MAGIC + struct.pack("<III", h, w, c) + np.ascontiguousarray(img, dtype="<f4").tobytes()


def decode_hdr(buf: bytes) -> np.ndarray:
    if len(buf) < 16 or buf[:4] != RHDR_MAGIC:
        raise FormatError("not an RHDR file")
    h, w, c = struct.unpack_from("<III", buf, 4)
    payload = buf[16:]
    if len(payload) != 4 * h * w * c:
        raise FormatError(f"RHDR payload has {len(payload)} bytes, expected {4 * h * w * c}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)


def write_hdr(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_hdr(img))


def read_hdr(path) -> np.ndarray:
    return decode_hdr(Path(path).read_bytes())


# ---------------------------------------------------------------- params RHNP


def encode_params(params: dict) -> bytes:
    out = [RHNP_MAGIC, struct.pack("<II", RHNP_VERSION, len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr.detach().cpu() if hasattr(arr, "detach") else arr)
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def decode_params(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:4] != RHNP_MAGIC:
        raise FormatError("not an RHNP parameter file")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != RHNP_VERSION:
            raise FormatError(f"unsupported RHNP version {version}")
        pos = 12
        params = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * n > len(buf):
                raise FormatError(f"truncated data for {name!r}")
            params[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * n
    except struct.error as exc:
        raise FormatError(f"truncated RHNP file: {exc}") from exc
    if pos != len(buf):
        raise FormatError("trailing bytes after RHNP records")
    return params


def write_params(path, params: dict) -> None:
    Path(path).write_bytes(encode_params(params))


def read_params(path) -> dict[str, np.ndarray]:
    return decode_params(Path(path).read_bytes())


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))


def read_json(path):
    return json.loads(Path(path).read_text())

"""Synthetic Raw/HDR datasets on disk and channel-statistics analysis."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .camera_sim import DEFAULT_EVS, CameraProfile, bracket, render_scene
from .errors import FormatError
from .hdr_merge import coverage_report, merge
from .raw_model import B, G1, G2, R, RawMosaic, normalize, pack

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
# dominant-channel labels
LABEL_R, LABEL_G, LABEL_B = 0, 1, 2


@dataclass
class ManifestEntry:
    scene_id: str
    raw_path: str
    hdr_path: str
    bracket_paths: list[str]
    profile: dict
    evs: list[float] = field(default_factory=list)
    coverage: float | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    format_version: int = MANIFEST_VERSION
    root: Path = Path(".")

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def to_dict(self) -> dict:
        return {"format_version": self.format_version, "entries": [vars(e) for e in self.entries]}


def write_manifest(path, manifest: DatasetManifest) -> None:
    formats.write_json(path, manifest.to_dict())


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    doc = formats.read_json(path)
    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise FormatError(f"manifest format_version {version} unsupported (expected {MANIFEST_VERSION})")
    manifest = DatasetManifest([ManifestEntry(**e) for e in doc["entries"]], version, path.parent)
    for e in manifest.entries:
        for rel in [e.raw_path, e.hdr_path, *e.bracket_paths]:
            if not manifest.resolve(rel).exists():
                raise FileNotFoundError(f"manifest entry {e.scene_id}: missing {rel}")
    return manifest


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _synth_one(args) -> ManifestEntry:
    out_dir, index, size, seed, profile_dict, evs, bits = args
    profile = CameraProfile.from_dict(profile_dict)
    sid = f"scene_{index:04d}"
    s = scene_seed(seed, index)
    scene = render_scene(s, size, bits)
    stack = bracket(scene, profile, evs, seed=s)
    hdr = merge(stack)
    paths = []
    for mosaic, ev in zip(stack.mosaics, stack.evs):
        name = f"{sid}_ev{ev:+g}.pgm"
        formats.write_raw(Path(out_dir) / name, mosaic)
        paths.append(name)
    hdr_name = f"{sid}.rhdr"
    formats.write_hdr(Path(out_dir) / hdr_name, hdr)
    ref = int(np.argmin(np.abs(np.asarray(stack.evs))))
    return ManifestEntry(sid, paths[ref], hdr_name, paths, profile_dict, list(stack.evs), coverage_report(stack))


def synthesize(
    out_dir,
    n_scenes: int,
    size: tuple[int, int],
    seed: int = 0,
    profile: CameraProfile | None = None,
    evs=DEFAULT_EVS,
    dynamic_range_bits: int = 20,
    workers: int = 1,
) -> Path:
    """Render, bracket and merge ``n_scenes`` scenes; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    profile = profile or CameraProfile()
    jobs = [(str(out_dir), i, tuple(size), seed, profile.to_dict(), list(evs), dynamic_range_bits)
            for i in range(n_scenes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            entries = list(pool.map(_synth_one, jobs))
    else:
        entries = [_synth_one(j) for j in jobs]
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, DatasetManifest(entries, root=out_dir))
    log.info("wrote %d scenes to %s", n_scenes, out_dir)
    return manifest_path


def load_pairs(manifest: DatasetManifest) -> list[tuple[RawMosaic, np.ndarray]]:
    pairs = []
    for e in manifest.entries:
        raw = formats.read_raw(manifest.resolve(e.raw_path))
        hdr = formats.read_hdr(manifest.resolve(e.hdr_path))
        if hdr.shape != (raw.shape[0] // 2, raw.shape[1] // 2, 4):
            raise FormatError(f"{e.scene_id}: HDR shape {hdr.shape} does not match Raw {raw.shape}")
        pairs.append((raw, hdr))
    return pairs


def dominant_channel_map(packed: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over (R, mean(G1, G2), B); ties go to green, then red."""
    g = 0.5 * (packed[..., G1] + packed[..., G2])
    r, b = packed[..., R], packed[..., B]
    out = np.full(g.shape, LABEL_G, dtype=np.uint8)
    out[(r > g) & (r >= b)] = LABEL_R
    out[(b > g) & (b > r)] = LABEL_B
    return out


def channel_means(mosaic: RawMosaic) -> dict:
    """Per-channel means of a mosaic in raw counts and normalized units (G averages G1, G2)."""
    counts = mosaic.data.astype(np.float64)
    norm = normalize(mosaic)
    out = {}
    for name, sites in (("R", [(0, 0)]), ("G", [(0, 1), (1, 0)]), ("B", [(1, 1)])):
        out[name] = {
            "counts": float(np.mean([counts[dy::2, dx::2].mean() for dy, dx in sites])),
            "normalized": float(np.mean([norm[dy::2, dx::2].mean() for dy, dx in sites])),
        }
    return out


def analyze_channels(manifest: DatasetManifest, out_dir=None) -> dict:
    """Channel means over every 0 EV Raw plus per-scene dominant-channel maps."""
    if not manifest.entries:
        raise ValueError("manifest has no entries")
    totals = {c: {"counts": 0.0, "normalized": 0.0} for c in "RGB"}
    scenes = []
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for e in manifest.entries:
        raw = formats.read_raw(manifest.resolve(e.raw_path))
        means = channel_means(raw)
        for c in "RGB":
            for k in ("counts", "normalized"):
                totals[c][k] += means[c][k] / len(manifest.entries)
        dom = dominant_channel_map(pack(raw))
        record = {
            "scene_id": e.scene_id,
            "means": means,
            "dominant_fraction": {c: float(np.mean(dom == lbl)) for c, lbl in zip("RGB", (LABEL_R, LABEL_G, LABEL_B))},
        }
        if out_dir is not None:
            name = f"{e.scene_id}_dominant.pgm"
            (out_dir / name).write_bytes(formats.encode_pgm8(dom))
            record["dominant_map"] = name
        scenes.append(record)
    ordering = "".join(sorted("RGB", key=lambda c: -totals[c]["counts"]))
    report = {
        "channel_means": totals,
        "ordering": ">".join(ordering),
        "label_legend": {"0": "R", "1": "G", "2": "B"},
        "scenes": scenes,
    }
    if out_dir is not None:
        formats.write_json(out_dir / "channel_report.json", report)
    return report

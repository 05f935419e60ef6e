"""Single-Raw-image HDR reconstruction: camera simulation, bracket merging,
the reconstruction network, its losses, metrics and training loop."""

from .camera_sim import CameraProfile, ExposureStack, bracket, capture, render_scene
from .errors import FormatError, InvalidProfileError, NumericalError, RawHDRError, ShapeError
from .hdr_merge import merge
from .net import NetConfig, RawHDRNet, forward
from .raw_model import RawMosaic, extract_guides, normalize, pack, unpack

__version__ = "0.1.0"

__all__ = [
    "CameraProfile", "ExposureStack", "bracket", "capture", "render_scene",
    "FormatError", "InvalidProfileError", "NumericalError", "RawHDRError", "ShapeError",
    "merge", "NetConfig", "RawHDRNet", "forward",
    "RawMosaic", "extract_guides", "normalize", "pack", "unpack",
]

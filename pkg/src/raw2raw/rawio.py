"""Raw frame container I/O, normalization, packing, and preview rendering.

Frames live in a portable two-file container: ``<name>.raw16`` holds the
row-major 16-bit little-endian pixel payload, ``<name>.json`` is the metadata
sidecar (width, height, cfa_pattern, black_level, white_level, bit_depth,
camera_id, plus optional illuminant and chart_patches).

Mosaiced frames are packed into half-resolution 4-channel images in
(R, G1, G2, B) order; G1 is the green sample sharing a row with red.
Pre-demosaiced 3-channel frames use cfa_pattern NONE_3CH and pass through
packing with all three channels intact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    CorruptPayloadError,
    DegenerateRangeError,
    MetadataError,
    ShapeError,
)


class CfaPattern(Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"
    NONE_3CH = "NONE_3CH"


# (row, col) offset of each packed channel inside the 2x2 CFA tile,
# ordered (R, G1, G2, B).
_CFA_SITES = {
    CfaPattern.RGGB: ((0, 0), (0, 1), (1, 0), (1, 1)),
    CfaPattern.BGGR: ((1, 1), (1, 0), (0, 1), (0, 0)),
    CfaPattern.GRBG: ((0, 1), (0, 0), (1, 1), (1, 0)),
    CfaPattern.GBRG: ((1, 0), (1, 1), (0, 0), (0, 1)),
}

SIDECAR_REQUIRED = ("width", "height", "cfa_pattern", "black_level",
                    "white_level", "bit_depth", "camera_id")


@dataclass
class RawFrame:
    """A sensor image with CFA layout, levels, and camera identity.

    ``pixels`` is (h, w) uint16 for mosaiced patterns and (h, w, 3) for
    NONE_3CH. ``black_level`` carries one value per packed channel
    (4 for CFA patterns, 3 for NONE_3CH).
    """

    pixels: np.ndarray
    cfa_pattern: CfaPattern
    black_level: np.ndarray
    white_level: float
    camera_id: str
    bit_depth: int
    illuminant: np.ndarray | None = None
    chart_patches: list[dict] | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        n_ch = 3 if self.cfa_pattern is CfaPattern.NONE_3CH else 4
        self.black_level = np.broadcast_to(
            np.asarray(self.black_level, dtype=np.float64), (n_ch,)).copy()
        self.white_level = float(self.white_level)
        self.bit_depth = int(self.bit_depth)
        if self.illuminant is not None:
            self.illuminant = np.asarray(self.illuminant, dtype=np.float64)
        self.validate()

    def validate(self):
        if not 1 <= self.bit_depth <= 16:
            raise MetadataError(f"bit_depth {self.bit_depth} outside [1, 16]")
        if self.cfa_pattern is CfaPattern.NONE_3CH:
            if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
                raise ShapeError(
                    f"NONE_3CH frame needs (h, w, 3) pixels, got {self.pixels.shape}")
        else:
            if self.pixels.ndim != 2:
                raise ShapeError(
                    f"{self.cfa_pattern.value} frame needs (h, w) pixels, "
                    f"got {self.pixels.shape}")
            h, w = self.pixels.shape[:2]
            if h % 2 or w % 2:
                raise MetadataError(
                    f"mosaiced dimensions must be even, got {h}x{w}")
        max_count = (1 << self.bit_depth) - 1
        if self.pixels.size and int(self.pixels.max()) > max_count:
            raise CorruptPayloadError(
                f"pixel value {int(self.pixels.max())} exceeds "
                f"2^{self.bit_depth}-1 = {max_count}")
        if not np.all(np.isfinite(self.black_level)) or not np.isfinite(self.white_level):
            raise MetadataError("black/white levels must be finite")
        if np.any(self.black_level > self.white_level):
            raise MetadataError(
                f"black_level {self.black_level.tolist()} above "
                f"white_level {self.white_level}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class PackedImage:
    """Normalized image in [0, 1]: (h/2, w/2, 4) for Bayer sources
    (R, G1, G2, B) or (h, w, 3) for NONE_3CH."""

    data: np.ndarray
    camera_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] not in (3, 4):
            raise ShapeError(
                f"packed image needs (h, w, 3|4) data, got {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class PreviewImage:
    """Gamma-encoded 3-channel render for display, values in [0, 1]."""

    data: np.ndarray
    gamma: float = 1.6


def _base_path(path) -> Path:
    p = Path(path)
    if p.suffix in (".raw16", ".json"):
        p = p.with_suffix("")
    return p


def save_frame(frame: RawFrame, path) -> Path:
    """Write the two-file container; returns the payload path."""
    base = _base_path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(frame.pixels, dtype="<u2")
    payload.tofile(base.with_suffix(".raw16"))
    meta = {
        "width": frame.width,
        "height": frame.height,
        "cfa_pattern": frame.cfa_pattern.value,
        "black_level": frame.black_level.tolist(),
        "white_level": frame.white_level,
        "bit_depth": frame.bit_depth,
        "camera_id": frame.camera_id,
    }
    if frame.illuminant is not None:
        meta["illuminant"] = np.asarray(frame.illuminant).tolist()
    if frame.chart_patches is not None:
        meta["chart_patches"] = frame.chart_patches
    with open(base.with_suffix(".json"), "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
    return base.with_suffix(".raw16")


def load_frame(path) -> RawFrame:
    """Load a container; validates sidecar fields and payload consistency."""
    base = _base_path(path)
    sidecar = base.with_suffix(".json")
    payload_path = base.with_suffix(".raw16")
    if not sidecar.exists():
        raise MetadataError(f"missing sidecar {sidecar}")
    if not payload_path.exists():
        raise CorruptPayloadError(f"missing payload {payload_path}")
    with open(sidecar) as f:
        meta = json.load(f)
    missing = [k for k in SIDECAR_REQUIRED if k not in meta]
    if missing:
        raise MetadataError(f"sidecar {sidecar} lacks fields: {missing}")
    try:
        pattern = CfaPattern(meta["cfa_pattern"])
    except ValueError:
        raise MetadataError(f"unknown cfa_pattern {meta['cfa_pattern']!r}")
    h, w = int(meta["height"]), int(meta["width"])
    n_ch = 3 if pattern is CfaPattern.NONE_3CH else 1
    raw = np.fromfile(payload_path, dtype="<u2")
    if raw.size != h * w * n_ch:
        raise CorruptPayloadError(
            f"payload holds {raw.size} values, metadata implies {h * w * n_ch}")
    pixels = raw.reshape((h, w, 3) if n_ch == 3 else (h, w))
    try:
        return RawFrame(
            pixels=pixels,
            cfa_pattern=pattern,
            black_level=np.asarray(meta["black_level"], dtype=np.float64),
            white_level=float(meta["white_level"]),
            camera_id=str(meta["camera_id"]),
            bit_depth=int(meta["bit_depth"]),
            illuminant=(np.asarray(meta["illuminant"], dtype=np.float64)
                        if "illuminant" in meta else None),
            chart_patches=meta.get("chart_patches"),
        )
    except ValueError as e:
        raise MetadataError(str(e))


def normalize(frame: RawFrame) -> PackedImage:
    """Black-subtract, scale to [0, 1], and pack CFA sites into channels.

    Each site is mapped by (v - black_c) / (white_level - black_c) and
    clipped to [0, 1]. RGGB-family frames come out (h/2, w/2, 4); NONE_3CH
    passes through as (h, w, 3).
    """
    black = frame.black_level
    spans = frame.white_level - black
    if np.any(spans == 0):
        raise DegenerateRangeError(
            f"white_level equals black_level for channel(s) "
            f"{np.nonzero(spans == 0)[0].tolist()}")
    px = frame.pixels.astype(np.float64)
    if frame.cfa_pattern is CfaPattern.NONE_3CH:
        data = (px - black) / spans
    else:
        sites = _CFA_SITES[frame.cfa_pattern]
        planes = [
            (px[dy::2, dx::2] - black[c]) / spans[c]
            for c, (dy, dx) in enumerate(sites)
        ]
        data = np.stack(planes, axis=-1)
    return PackedImage(np.clip(data, 0.0, 1.0), camera_id=frame.camera_id)


def unpack(img: PackedImage, frame_meta: RawFrame) -> RawFrame:
    """Invert ``normalize`` up to integer rounding, using frame_meta's
    layout and levels. Out-of-range packed values are clipped first."""
    expected = 3 if frame_meta.cfa_pattern is CfaPattern.NONE_3CH else 4
    if img.channels != expected:
        raise ShapeError(
            f"{frame_meta.cfa_pattern.value} expects {expected} channels, "
            f"packed image has {img.channels}")
    black = frame_meta.black_level
    spans = frame_meta.white_level - black
    data = np.clip(img.data.astype(np.float64), 0.0, 1.0)
    max_count = (1 << frame_meta.bit_depth) - 1
    if frame_meta.cfa_pattern is CfaPattern.NONE_3CH:
        counts = np.rint(data * spans + black)
        pixels = np.clip(counts, 0, max_count).astype(np.uint16)
    else:
        hh, ww = data.shape[:2]
        pixels = np.zeros((hh * 2, ww * 2), dtype=np.uint16)
        for c, (dy, dx) in enumerate(_CFA_SITES[frame_meta.cfa_pattern]):
            counts = np.rint(data[:, :, c] * spans[c] + black[c])
            pixels[dy::2, dx::2] = np.clip(counts, 0, max_count).astype(np.uint16)
    return RawFrame(
        pixels=pixels,
        cfa_pattern=frame_meta.cfa_pattern,
        black_level=black.copy(),
        white_level=frame_meta.white_level,
        camera_id=frame_meta.camera_id,
        bit_depth=frame_meta.bit_depth,
    )


def packed_to_frame(img: PackedImage, bit_depth: int = 16,
                    camera_id: str | None = None,
                    illuminant=None, chart_patches=None) -> RawFrame:
    """Quantize a packed image into a storable frame (black 0, white full
    scale). 3-channel images become NONE_3CH frames; 4-channel ones are
    re-mosaiced as RGGB."""
    max_count = (1 << bit_depth) - 1
    data = np.clip(img.data.astype(np.float64), 0.0, 1.0)
    cam = img.camera_id if camera_id is None else camera_id
    if img.channels == 3:
        pixels = np.rint(data * max_count).astype(np.uint16)
        pattern = CfaPattern.NONE_3CH
    else:
        hh, ww = data.shape[:2]
        pixels = np.zeros((hh * 2, ww * 2), dtype=np.uint16)
        for c, (dy, dx) in enumerate(_CFA_SITES[CfaPattern.RGGB]):
            pixels[dy::2, dx::2] = np.rint(data[:, :, c] * max_count).astype(np.uint16)
        pattern = CfaPattern.RGGB
    return RawFrame(
        pixels=pixels, cfa_pattern=pattern, black_level=0.0,
        white_level=float(max_count), camera_id=cam, bit_depth=bit_depth,
        illuminant=illuminant, chart_patches=chart_patches)


def merge_greens(img: PackedImage) -> PackedImage:
    """Average G1/G2 of a 4-channel image into a 3-channel (R, G, B) one.
    3-channel input returns itself."""
    if img.channels == 3:
        return img
    d = img.data
    g = 0.5 * (d[:, :, 1] + d[:, :, 2])
    return PackedImage(np.stack([d[:, :, 0], g, d[:, :, 3]], axis=-1),
                       camera_id=img.camera_id)


def render_preview(img: PackedImage, gamma: float = 1.6) -> PreviewImage:
    """Average the greens and gamma-encode with 1/gamma for display."""
    rgb = merge_greens(img).data
    encoded = np.clip(rgb, 0.0, 1.0) ** (1.0 / gamma)
    return PreviewImage(encoded.astype(np.float32), gamma=gamma)

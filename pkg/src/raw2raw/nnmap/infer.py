"""Decoder-swap inference over full images of arbitrary size."""

from __future__ import annotations

from enum import Enum

import numpy as np
import torch

from ..errors import ShapeError
from ..rawio import PackedImage
from .arch import MappingModel, postprocess

TILE_SIZE = 256
TILE_OVERLAP = 32


class Direction(str, Enum):
    A2B = "A2B"
    B2A = "B2A"


def _nets(model: MappingModel, direction: Direction):
    direction = Direction(direction)
    if direction is Direction.A2B:
        return model.encoder_a, model.decoder_b
    return model.encoder_b, model.decoder_a


def _pad_multiple(arr: np.ndarray, mult: int) -> tuple[np.ndarray, int, int]:
    h, w = arr.shape[:2]
    ph = (-h) % mult
    pw = (-w) % mult
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw), (0, 0)), mode="reflect")
    return arr, h, w


def _forward(arr: np.ndarray, enc, dec) -> np.ndarray:
    x = torch.from_numpy(arr.astype(np.float32)).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        y = dec(enc(x))
    return y.squeeze(0).permute(1, 2, 0).numpy().astype(np.float64)


def _origins(size: int, tile: int, step: int) -> list[int]:
    if size <= tile:
        return [0]
    starts = list(range(0, size - tile, step))
    starts.append(size - tile)
    return starts


def _ramp(n: int, ov: int, lead: bool, trail: bool) -> np.ndarray:
    w = np.ones(n)
    ov = min(ov, n)
    edge = np.linspace(0.0, 1.0, ov + 2)[1:-1]     # strictly positive
    if lead:
        w[:ov] = edge
    if trail:
        w[-ov:] = np.minimum(w[-ov:], edge[::-1])
    return w


def map_image(img: PackedImage, model: MappingModel, direction: Direction,
              tile: int = TILE_SIZE, overlap: int = TILE_OVERLAP
              ) -> PackedImage:
    """Map a full image across cameras with the swapped decoder.

    Images at most one tile large are processed whole (padded to the
    stride multiple and cropped back); larger images are covered by
    overlapping tiles whose raw outputs are linearly cross-faded before
    post-processing.
    """
    data = np.asarray(img.data)
    if data.ndim != 3 or data.shape[-1] != model.arch.in_channels:
        raise ShapeError(
            f"image shape {data.shape} does not feed a "
            f"{model.arch.in_channels}-channel model")
    enc, dec = _nets(model, direction)
    mult = 2 ** model.arch.depth
    if tile % mult:
        raise ShapeError(f"tile {tile} not a multiple of 2^{model.arch.depth}")

    padded, h, w = _pad_multiple(data, mult)
    ph, pw = padded.shape[:2]
    camera = _target_camera(img, model, direction)
    if ph <= tile and pw <= tile:
        raw = _forward(padded, enc, dec)[:h, :w]
        return postprocess(raw, camera_id=camera)

    step = tile - overlap
    acc = np.zeros((ph, pw, data.shape[2]), dtype=np.float64)
    weight = np.zeros((ph, pw, 1), dtype=np.float64)
    ys = _origins(ph, tile, step)
    xs = _origins(pw, tile, step)
    for y0 in ys:
        for x0 in xs:
            th = min(tile, ph - y0)
            tw = min(tile, pw - x0)
            block = padded[y0:y0 + th, x0:x0 + tw]
            block, bh, bw = _pad_multiple(block, mult)
            raw = _forward(block, enc, dec)[:bh, :bw]
            wy = _ramp(bh, overlap, y0 > 0, y0 + bh < ph)
            wx = _ramp(bw, overlap, x0 > 0, x0 + bw < pw)
            wt = np.outer(wy, wx)[..., None]
            acc[y0:y0 + bh, x0:x0 + bw] += raw * wt
            weight[y0:y0 + bh, x0:x0 + bw] += wt
    out = acc / weight
    return postprocess(out[:h, :w], camera_id=camera)


def _target_camera(img: PackedImage, model: MappingModel,
                   direction: Direction) -> str:
    fp = model.training_fingerprint or {}
    key = "camera_b" if Direction(direction) is Direction.A2B else "camera_a"
    return fp.get(key, img.camera_id)

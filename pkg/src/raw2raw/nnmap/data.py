"""Mini-batch assembly mixing unpaired and paired (anchor) samples."""

from __future__ import annotations

import numpy as np
import torch

from ..calibfit import AnchorPair
from ..errors import ConfigError, ShapeError
from ..rawio import PackedImage


def batch_composition(batch_size: int, paired_fraction: float,
                      use_r: bool, use_a: bool, use_m: bool
                      ) -> tuple[int, int, int]:
    """How many (anchor, unpaired A, unpaired B) samples fill one batch."""
    needs_anchor = use_a or use_m
    needs_unpaired = use_r
    if needs_anchor and needs_unpaired:
        n_pair = int(round(batch_size * paired_fraction))
        n_pair = min(max(n_pair, 1), batch_size - 1)
    elif needs_anchor:
        n_pair = batch_size
    else:
        n_pair = 0
    n_unp = batch_size - n_pair
    n_ua = (n_unp + 1) // 2
    return n_pair, n_ua, n_unp - n_ua


def _pad_to(img: np.ndarray, patch: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h >= patch and w >= patch:
        return img
    ph, pw = max(0, patch - h), max(0, patch - w)
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect")


def _crop(img: np.ndarray, patch: int, y: int, x: int) -> np.ndarray:
    return img[y:y + patch, x:x + patch]


def _crop_origin(shape: tuple[int, int], patch: int,
                 rng: np.random.Generator) -> tuple[int, int]:
    h, w = shape
    return (int(rng.integers(0, h - patch + 1)),
            int(rng.integers(0, w - patch + 1)))


def _stack(patches: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack(patches).astype(np.float32)
    return torch.from_numpy(arr).permute(0, 3, 1, 2)


def sample_batch(unpaired_a: list[PackedImage], unpaired_b: list[PackedImage],
                 anchors: list[AnchorPair], config,
                 rng: np.random.Generator) -> dict:
    """Draw one mini-batch of random crops.

    Anchor pairs contribute pixelwise-aligned crops (one shared window per
    pair). Images smaller than the patch size are reflect-padded first.
    Returns NCHW float32 tensors under the keys anchor_a / anchor_b /
    unpaired_a / unpaired_b (None where the composition needs none).
    """
    sw = config.loss_switches
    n_pair, n_ua, n_ub = batch_composition(
        config.batch_size, config.paired_fraction,
        sw.use_r, sw.use_a, sw.use_m)
    if n_pair and not anchors:
        raise ConfigError("batch needs anchor pairs but none were provided")
    if (n_ua or n_ub) and (not unpaired_a or not unpaired_b):
        raise ConfigError("batch needs unpaired images from both cameras")

    patch = config.patch_size
    pair_a, pair_b, ua, ub = [], [], [], []
    for _ in range(n_pair):
        pick = anchors[int(rng.integers(0, len(anchors)))]
        img_a = _pad_to(np.asarray(pick.image_a.data), patch)
        img_b = _pad_to(np.asarray(pick.image_b.data), patch)
        y, x = _crop_origin(img_a.shape[:2], patch, rng)
        pair_a.append(_crop(img_a, patch, y, x))
        pair_b.append(_crop(img_b, patch, y, x))
    for count, pool, dest in ((n_ua, unpaired_a, ua), (n_ub, unpaired_b, ub)):
        for _ in range(count):
            img = _pad_to(np.asarray(
                pool[int(rng.integers(0, len(pool)))].data), patch)
            y, x = _crop_origin(img.shape[:2], patch, rng)
            dest.append(_crop(img, patch, y, x))

    batch = {
        "anchor_a": _stack(pair_a) if pair_a else None,
        "anchor_b": _stack(pair_b) if pair_b else None,
        "unpaired_a": _stack(ua) if ua else None,
        "unpaired_b": _stack(ub) if ub else None,
    }
    chans = {t.shape[1] for t in batch.values() if t is not None}
    if len(chans) > 1:
        raise ShapeError(f"mixed channel counts in batch: {sorted(chans)}")
    return batch

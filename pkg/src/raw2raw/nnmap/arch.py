"""Dual encoder-decoder architecture.

Each encoder block halves the spatial size (stride-2 conv) and then
refines (stride-1 conv), so the block output is simultaneously the
per-block latent read by the anchor loss and the tensor fed through the
skip connection. The decoder mirrors the encoder with 2x upsampling and
skip concatenation; its final convolution is linear so raw outputs can be
post-processed at inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from ..errors import ConfigError, NumericError, ShapeError
from ..rawio import PackedImage

DEFAULT_CHANNELS = (24, 48, 96, 192)


@dataclass
class ArchitectureSpec:
    in_channels: int = 4
    depth: int = 4
    channels: tuple = DEFAULT_CHANNELS
    skip_connections: bool = True

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.in_channels not in (3, 4):
            raise ConfigError(f"in_channels must be 3 or 4, got {self.in_channels}")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if len(self.channels) != self.depth:
            raise ConfigError(
                f"{len(self.channels)} widths for depth {self.depth}")
        if any(c <= 0 for c in self.channels):
            raise ConfigError(f"widths must be positive: {self.channels}")

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels, "depth": self.depth,
                "channels": list(self.channels),
                "skip_connections": self.skip_connections}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(in_channels=int(d["in_channels"]), depth=int(d["depth"]),
                   channels=tuple(d["channels"]),
                   skip_connections=bool(d["skip_connections"]))


@dataclass
class LatentStack:
    """Per-block encoder activations X^1 .. X^E, halving in spatial size."""

    blocks: list

    def __post_init__(self):
        if not self.blocks:
            raise ShapeError("latent stack must hold at least one block")
        prev = None
        for i, x in enumerate(self.blocks):
            if x.dim() != 4:
                raise ShapeError(f"block {i + 1} is not a NCHW tensor")
            if prev is not None:
                eh, ew = (prev[0] + 1) // 2, (prev[1] + 1) // 2
                if tuple(x.shape[2:]) != (eh, ew):
                    raise ShapeError(
                        f"block {i + 1} size {tuple(x.shape[2:])} does not "
                        f"halve block {i} size {prev}")
            prev = tuple(x.shape[2:])

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


class EncoderBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.down = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
        self.conv = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.act = nn.ReLU()

    def forward(self, x):
        return self.act(self.conv(self.act(self.down(x))))


class Encoder(nn.Module):
    def __init__(self, arch: ArchitectureSpec):
        super().__init__()
        self.arch = arch
        blocks = []
        c_prev = arch.in_channels
        for c in arch.channels:
            blocks.append(EncoderBlock(c_prev, c))
            c_prev = c
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x) -> LatentStack:
        h, w = x.shape[2:]
        scale = 2 ** self.arch.depth
        if h % scale or w % scale:
            raise ShapeError(
                f"input {h}x{w} not divisible by 2^{self.arch.depth}")
        outs = []
        for block in self.blocks:
            x = block(x)
            outs.append(x)
        return LatentStack(outs)


class DecoderBlock(nn.Module):
    def __init__(self, c_in: int, c_skip: int, c_out: int):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
        self.conv1 = nn.Conv2d(c_in + c_skip, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.act = nn.ReLU()

    def forward(self, x, skip=None):
        x = self.up(x)
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.act(self.conv2(self.act(self.conv1(x))))


class Decoder(nn.Module):
    def __init__(self, arch: ArchitectureSpec):
        super().__init__()
        self.arch = arch
        ch = arch.channels
        blocks = []
        # mirror: deepest latent up to block 1 resolution, consuming skips
        for e in range(arch.depth - 1, 0, -1):
            c_skip = ch[e - 1] if arch.skip_connections else 0
            blocks.append(DecoderBlock(ch[e], c_skip, ch[e - 1]))
        self.blocks = nn.ModuleList(blocks)
        self.up = nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False)
        self.head = nn.Conv2d(ch[0], ch[0], 3, padding=1)
        self.act = nn.ReLU()
        self.out = nn.Conv2d(ch[0], arch.in_channels, 3, padding=1)

    def forward(self, latents: LatentStack):
        if len(latents) != self.arch.depth:
            raise ShapeError(
                f"stack has {len(latents)} blocks, decoder expects "
                f"{self.arch.depth}")
        xs = latents.blocks
        x = xs[-1]
        for i, block in enumerate(self.blocks):
            skip_idx = self.arch.depth - 2 - i
            skip = xs[skip_idx] if self.arch.skip_connections else None
            x = block(x, skip)
        x = self.act(self.head(self.up(x)))
        return self.out(x)                      # linear output head


def _init_parameters(module: nn.Module, gen: torch.Generator) -> None:
    # He-style init drawn from an explicit generator for reproducibility
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.normal_(0.0, std, generator=gen)
                m.bias.zero_()


@dataclass
class MappingModel:
    encoder_a: Encoder
    decoder_a: Decoder
    encoder_b: Encoder
    decoder_b: Decoder
    arch: ArchitectureSpec
    training_fingerprint: dict = field(default_factory=dict)

    def modules(self) -> dict:
        return {"encoder_a": self.encoder_a, "decoder_a": self.decoder_a,
                "encoder_b": self.encoder_b, "decoder_b": self.decoder_b}

    def parameters(self):
        for mod in self.modules().values():
            yield from mod.parameters()

    def check_finite(self) -> None:
        for name, mod in self.modules().items():
            for pname, p in mod.named_parameters():
                if not torch.isfinite(p).all():
                    raise NumericError(f"{name}.{pname} has non-finite values")

    def train_mode(self, flag: bool = True) -> None:
        for mod in self.modules().values():
            mod.train(flag)


def build_model(arch: ArchitectureSpec, seed: int = 0) -> MappingModel:
    gen = torch.Generator().manual_seed(seed)
    parts = []
    for _ in range(2):
        enc = Encoder(arch)
        dec = Decoder(arch)
        _init_parameters(enc, gen)
        _init_parameters(dec, gen)
        parts.extend([enc, dec])
    return MappingModel(parts[0], parts[1], parts[2], parts[3], arch,
                        {"seed": seed})


# ---------------------------------------------------------------------------
# Public image-level ops

def _to_tensor(img: PackedImage) -> torch.Tensor:
    data = torch.from_numpy(img.data.copy()).float()
    return data.permute(2, 0, 1).unsqueeze(0)


def postprocess(raw, camera_id: str = "") -> PackedImage:
    """Clip a raw network output into a displayable [0, 1] image."""
    if isinstance(raw, torch.Tensor):
        if not torch.isfinite(raw).all():
            raise NumericError("network output contains non-finite values")
        arr = raw.detach().squeeze(0).permute(1, 2, 0).numpy()
    else:
        arr = raw
    out = arr.clip(0.0, 1.0).astype("float32")
    return PackedImage(out, camera_id=camera_id)


def encode(img: PackedImage, encoder: Encoder) -> LatentStack:
    """Run one image through an encoder; returns the per-block latents."""
    if img.data.shape[-1] != encoder.arch.in_channels:
        raise ShapeError(
            f"{img.data.shape[-1]}-channel image into "
            f"{encoder.arch.in_channels}-channel encoder")
    with torch.no_grad():
        return encoder(_to_tensor(img))


def decode(latents: LatentStack, decoder: Decoder,
           camera_id: str = "") -> PackedImage:
    """Decode a latent stack to a post-processed image."""
    with torch.no_grad():
        raw = decoder(latents)
    return postprocess(raw, camera_id=camera_id)

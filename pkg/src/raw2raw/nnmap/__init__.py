"""Semi-supervised dual encoder-decoder mapper with decoder-swap
inference."""

from .arch import (ArchitectureSpec, Decoder, Encoder, LatentStack,
                   MappingModel, build_model, decode, encode, postprocess)
from .data import sample_batch
from .infer import Direction, map_image
from .losses import LossSwitches, loss_a, loss_m, loss_r, total_loss
from .model_io import load_checkpoint, load_model, save_checkpoint, save_model
from .train import TrainConfig, train

__all__ = [
    "ArchitectureSpec", "Decoder", "Direction", "Encoder", "LatentStack",
    "LossSwitches", "MappingModel", "TrainConfig", "build_model", "decode",
    "encode", "load_checkpoint", "load_model", "loss_a", "loss_m", "loss_r",
    "map_image", "postprocess", "sample_batch", "save_checkpoint",
    "save_model", "total_loss", "train",
]

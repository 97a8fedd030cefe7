"""End-to-end training of the dual encoder-decoder mapper."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, NumericError
from .arch import ArchitectureSpec, MappingModel, build_model
from .data import sample_batch
from .losses import LossSwitches, loss_a, loss_m, loss_r, total_loss
from .model_io import load_checkpoint, save_checkpoint


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 16
    patch_size: int = 256
    epochs: int = 140
    loss_switches: LossSwitches = field(default_factory=LossSwitches)
    paired_fraction: float = 0.5
    seed: int = 0
    checkpoint_every: int = 0          # epochs between checkpoints; 0 = off
    iters_per_epoch: int | None = None  # None: derived from dataset size
    lr_schedule: str = "constant"       # "constant" | "cosine"

    def __post_init__(self):
        if isinstance(self.loss_switches, dict):
            self.loss_switches = LossSwitches.from_dict(self.loss_switches)
        if not 0.0 < self.paired_fraction < 1.0:
            raise ConfigError(
                f"paired_fraction {self.paired_fraction} outside (0, 1)")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for a mixed batch")
        if self.patch_size < 1 or self.epochs < 1:
            raise ConfigError("patch_size and epochs must be positive")
        if self.iters_per_epoch is not None and self.iters_per_epoch < 1:
            raise ConfigError("iters_per_epoch must be positive when set")
        if self.lr_schedule not in ("constant", "cosine", "warmup-cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")

    def epoch_lr(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        warm = 0
        if self.lr_schedule == "warmup-cosine":
            warm = max(1, self.epochs // 10)
            if epoch < warm:
                return self.learning_rate * (epoch + 1) / warm
        frac = (epoch - warm) / max(1, self.epochs - warm)
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * frac))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "learning_rate", "beta1", "beta2", "batch_size", "patch_size",
            "epochs", "paired_fraction", "seed", "checkpoint_every",
            "iters_per_epoch", "lr_schedule")}
        d["loss_switches"] = self.loss_switches.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: d[k] for k in (
            "learning_rate", "beta1", "beta2", "batch_size", "patch_size",
            "epochs", "paired_fraction", "seed", "checkpoint_every",
            "iters_per_epoch", "lr_schedule", "loss_switches") if k in d}
        return cls(**known)


def _pooled_recon_loss(model: MappingModel, batch: dict):
    """L_r over all unpaired samples of both cameras (pooled mean)."""
    parts = []
    for key, enc, dec in (("unpaired_a", model.encoder_a, model.decoder_a),
                          ("unpaired_b", model.encoder_b, model.decoder_b)):
        x = batch[key]
        if x is None:
            continue
        recon = dec(enc(x))
        parts.append((loss_r(x, recon), x.shape[0]))
    if not parts:
        raise ConfigError("reconstruction loss enabled but batch has no "
                          "unpaired samples")
    total_n = sum(n for _, n in parts)
    out = sum(l * (n / total_n) for l, n in parts)
    return out


def train_step(model: MappingModel, batch: dict, switches: LossSwitches):
    """Forward pass returning (total, l_r, l_a, l_m) tensors (None where
    disabled)."""
    l_r = l_a = l_m = None
    if switches.use_r:
        l_r = _pooled_recon_loss(model, batch)
    if switches.use_a or switches.use_m:
        xa, xb = batch["anchor_a"], batch["anchor_b"]
        if xa is None or xb is None:
            raise ConfigError("anchor losses enabled but batch has no pairs")
        stack_a = model.encoder_a(xa)
        stack_b = model.encoder_b(xb)
        if switches.use_a:
            l_a = loss_a(stack_a, stack_b)
        if switches.use_m:
            mapped_a = model.decoder_a(stack_b)   # I_B -> camera A space
            mapped_b = model.decoder_b(stack_a)   # I_A -> camera B space
            l_m = loss_m(mapped_a, xa, mapped_b, xb)
    return total_loss(l_r, l_a, l_m, switches), l_r, l_a, l_m


def _snapshot(model: MappingModel) -> dict:
    return {name: copy.deepcopy(mod.state_dict())
            for name, mod in model.modules().items()}


def _restore(model: MappingModel, snap: dict) -> None:
    for name, mod in model.modules().items():
        mod.load_state_dict(snap[name])


def train(datasets: dict, config: TrainConfig,
          arch: ArchitectureSpec | None = None,
          out_dir=None, resume_from=None) -> MappingModel:
    """Adam-optimize a fresh (or resumed) model on the given datasets.

    ``datasets`` holds ``unpaired_a`` / ``unpaired_b`` (lists of images)
    and ``anchors`` (list of aligned pairs); which are required depends on
    the loss switches. A per-epoch loss log is written to
    ``<out_dir>/loss_log.csv`` and kept on the returned model as
    ``loss_history``. Training aborts with the last finite state saved if
    a loss turns non-finite.
    """
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    switches = config.loss_switches
    unpaired_a = datasets.get("unpaired_a") or []
    unpaired_b = datasets.get("unpaired_b") or []
    anchors = datasets.get("anchors") or []
    if switches.use_r and (not unpaired_a or not unpaired_b):
        raise ConfigError("reconstruction loss needs unpaired images from "
                          "both cameras")
    if (switches.use_a or switches.use_m) and not anchors:
        raise ConfigError("anchor losses need anchor pairs")

    if arch is None:
        sample = (anchors[0].image_a if anchors else unpaired_a[0])
        arch = ArchitectureSpec(in_channels=sample.data.shape[-1])

    model = build_model(arch, seed=config.seed)
    params = list(model.parameters())
    optimizer = torch.optim.Adam(params, lr=config.learning_rate,
                                 betas=(config.beta1, config.beta2))
    start_epoch = 0
    if resume_from is not None:
        start_epoch = load_checkpoint(resume_from, model, optimizer)

    # Epoch length follows the full dataset in hand so ablations train the
    # same number of steps; disabled terms simply draw none of their data.
    if config.iters_per_epoch is not None:
        iters = config.iters_per_epoch
    else:
        n_items = len(anchors) + len(unpaired_a) + len(unpaired_b)
        iters = max(1, math.ceil(n_items / config.batch_size))
    rng = np.random.default_rng([config.seed, 1])

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    history = []
    log_lines = ["epoch,loss_r,loss_a,loss_m,total\n"]
    last_good = _snapshot(model)
    model.train_mode(True)

    for epoch in range(start_epoch, config.epochs):
        lr = config.epoch_lr(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        sums = np.zeros(4)
        for _ in range(iters):
            batch = sample_batch(unpaired_a, unpaired_b, anchors, config, rng)
            optimizer.zero_grad()
            total, l_r, l_a, l_m = train_step(model, batch, switches)
            if not torch.isfinite(total):
                _restore(model, last_good)
                if out is not None:
                    save_checkpoint(model, optimizer, epoch, out / "abort")
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1}; last finite "
                    f"state restored")
            total.backward()
            optimizer.step()
            sums += [float(v.detach()) if v is not None else 0.0
                     for v in (l_r, l_a, l_m, total)]
        means = sums / iters
        history.append({"epoch": epoch + 1, "loss_r": means[0],
                        "loss_a": means[1], "loss_m": means[2],
                        "total": means[3]})
        log_lines.append(f"{epoch + 1}," + ",".join(
            f"{v:.6f}" for v in means) + "\n")
        last_good = _snapshot(model)
        if (out is not None and config.checkpoint_every > 0
                and (epoch + 1) % config.checkpoint_every == 0):
            save_checkpoint(model, optimizer, epoch + 1,
                            out / f"checkpoint_ep{epoch + 1:04d}")

    model.train_mode(False)
    model.check_finite()
    model.training_fingerprint = {
        "seed": config.seed, "epochs": config.epochs,
        "loss_switches": switches.to_dict(),
    }
    model.loss_history = history
    if out is not None:
        with open(out / "loss_log.csv", "w") as f:
            f.writelines(log_lines)
    return model

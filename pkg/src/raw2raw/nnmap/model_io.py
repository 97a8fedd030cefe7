"""Model and checkpoint persistence.

A model is stored as two files sharing a stem: ``<stem>.json`` holds the
architecture descriptor plus training fingerprint, ``<stem>.npz`` holds
the flat named parameter tensors. Checkpoints reuse the same layout and
add the Adam moment vectors and step counters so training can resume.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import MetadataError
from .arch import ArchitectureSpec, MappingModel, build_model


def _named_parameters(model: MappingModel):
    for part, mod in model.modules().items():
        for name, p in mod.named_parameters():
            yield f"{part}.{name}", p


def save_model(model: MappingModel, stem) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    meta = {"arch": model.arch.to_dict(),
            "fingerprint": model.training_fingerprint}
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")
    arrays = {name: p.detach().numpy() for name, p in _named_parameters(model)}
    np.savez(stem.with_suffix(".npz"), **arrays)


def load_model(stem) -> MappingModel:
    stem = Path(stem)
    jpath = stem.with_suffix(".json")
    npath = stem.with_suffix(".npz")
    if not jpath.exists() or not npath.exists():
        raise MetadataError(f"model files {jpath} / {npath} not found")
    with open(jpath) as f:
        meta = json.load(f)
    model = build_model(ArchitectureSpec.from_dict(meta["arch"]))
    model.training_fingerprint = meta.get("fingerprint", {})
    with np.load(npath) as payload:
        for name, p in _named_parameters(model):
            if name not in payload:
                raise MetadataError(f"parameter {name} missing from {npath}")
            arr = payload[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise MetadataError(
                    f"parameter {name} shape {arr.shape} != {tuple(p.shape)}")
            with torch.no_grad():
                p.copy_(torch.from_numpy(arr))
    model.check_finite()
    return model


def save_checkpoint(model: MappingModel, optimizer: torch.optim.Adam,
                    epoch: int, stem) -> None:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    meta = {"arch": model.arch.to_dict(),
            "fingerprint": model.training_fingerprint,
            "epoch": int(epoch)}
    with open(stem.with_suffix(".json"), "w") as f:
        json.dump(meta, f, indent=1, sort_keys=True)
        f.write("\n")
    arrays = {name: p.detach().numpy() for name, p in _named_parameters(model)}
    for i, (_, p) in enumerate(_named_parameters(model)):
        state = optimizer.state.get(p)
        if state:
            arrays[f"adam.{i}.exp_avg"] = state["exp_avg"].numpy()
            arrays[f"adam.{i}.exp_avg_sq"] = state["exp_avg_sq"].numpy()
            arrays[f"adam.{i}.step"] = np.array(float(state["step"]))
    np.savez(stem.with_suffix(".npz"), **arrays)


def load_checkpoint(stem, model: MappingModel,
                    optimizer: torch.optim.Adam) -> int:
    """Restore parameters and Adam state in place; returns the epoch the
    checkpoint was written at."""
    stem = Path(stem)
    with open(stem.with_suffix(".json")) as f:
        meta = json.load(f)
    if meta["arch"] != model.arch.to_dict():
        raise MetadataError("checkpoint architecture does not match model")
    with np.load(stem.with_suffix(".npz")) as payload:
        for i, (name, p) in enumerate(_named_parameters(model)):
            with torch.no_grad():
                p.copy_(torch.from_numpy(payload[name]))
            mkey = f"adam.{i}.exp_avg"
            if mkey in payload:
                optimizer.state[p] = {
                    "step": torch.tensor(float(payload[f"adam.{i}.step"])),
                    "exp_avg": torch.from_numpy(payload[mkey].copy()),
                    "exp_avg_sq": torch.from_numpy(
                        payload[f"adam.{i}.exp_avg_sq"].copy()),
                }
    return int(meta.get("epoch", 0))

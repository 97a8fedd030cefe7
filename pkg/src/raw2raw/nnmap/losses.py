"""Training losses.

All three terms are squared-Frobenius penalties summed over every element
of a sample and averaged over the batch; the total is their unweighted
sum, with boolean switches implementing the ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigError, ShapeError
from .arch import LatentStack


@dataclass
class LossSwitches:
    use_r: bool = True
    use_a: bool = True
    use_m: bool = True

    def __post_init__(self):
        if not (self.use_r or self.use_a or self.use_m):
            raise ConfigError("at least one loss term must be enabled")

    def to_dict(self) -> dict:
        return {"use_r": self.use_r, "use_a": self.use_a, "use_m": self.use_m}

    @classmethod
    def from_dict(cls, d: dict) -> "LossSwitches":
        return cls(bool(d["use_r"]), bool(d["use_a"]), bool(d["use_m"]))


def _check_same_shape(x: torch.Tensor, y: torch.Tensor, what: str) -> None:
    if x.shape != y.shape:
        raise ShapeError(
            f"{what} shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def _frob_sq_per_sample(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    d = x - y
    return d.pow(2).flatten(1).sum(dim=1)


def loss_r(inputs: torch.Tensor, recons: torch.Tensor) -> torch.Tensor:
    """Unpaired reconstruction: mean over the batch of the squared
    Frobenius distance between each input and its reconstruction."""
    _check_same_shape(inputs, recons, "reconstruction")
    return _frob_sq_per_sample(inputs, recons).mean()


def loss_a(stack_a: LatentStack, stack_b: LatentStack) -> torch.Tensor:
    """Anchor latent alignment summed over all encoder blocks, averaged
    over the batch."""
    if len(stack_a) != len(stack_b):
        raise ShapeError(
            f"stacks have {len(stack_a)} vs {len(stack_b)} blocks")
    total = None
    n = stack_a.blocks[0].shape[0]
    for xa, xb in zip(stack_a, stack_b):
        _check_same_shape(xa, xb, "latent block")
        term = _frob_sq_per_sample(xa, xb).sum()
        total = term if total is None else total + term
    return total / n


def loss_m(mapped_a: torch.Tensor, gt_a: torch.Tensor,
           mapped_b: torch.Tensor, gt_b: torch.Tensor) -> torch.Tensor:
    """Cross-mapping fidelity on the paired anchors, averaged over both
    directions and the batch."""
    _check_same_shape(mapped_a, gt_a, "mapped A")
    _check_same_shape(mapped_b, gt_b, "mapped B")
    n = gt_a.shape[0]
    total = (_frob_sq_per_sample(mapped_a, gt_a).sum()
             + _frob_sq_per_sample(mapped_b, gt_b).sum())
    return total / (2.0 * n)


def total_loss(l_r, l_a, l_m, switches: LossSwitches) -> torch.Tensor:
    """Unweighted sum of the enabled loss terms."""
    terms = []
    for enabled, value, name in ((switches.use_r, l_r, "L_r"),
                                 (switches.use_a, l_a, "L_a"),
                                 (switches.use_m, l_m, "L_m")):
        if enabled:
            if value is None:
                raise ConfigError(f"{name} enabled but not supplied")
            terms.append(value)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out

"""Annotation records for chart and homogeneous-region correspondences.

One record per image pair: the 24 chart patch windows on each side plus
any number of extra region correspondences. Records are stored as plain
JSON so they diff and version cleanly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BoundsError, MetadataError
from .rawio import PackedImage

HOMOGENEITY_CV_THRESHOLD = 0.05


class AnnotationStatus(str, Enum):
    DRAFT = "DRAFT"
    COMMITTED = "COMMITTED"


def _check_patch(patch: dict, shape: tuple[int, int], side: str) -> dict:
    try:
        x, y, size = int(patch["x"]), int(patch["y"]), int(patch["size"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MetadataError(f"malformed patch on {side}: {patch!r}") from exc
    h, w = shape
    if size < 2:
        raise BoundsError(f"patch size {size} < 2 on {side}")
    if x < 0 or y < 0 or x + size > w or y + size > h:
        raise BoundsError(
            f"patch ({x}, {y}, size {size}) outside {w}x{h} image on {side}")
    out = {"x": x, "y": y, "size": size}
    if "label" in patch:
        out["label"] = str(patch["label"])
    return out


@dataclass
class AnnotationRecord:
    pair_id: str
    chart_a: list[dict] = field(default_factory=list)
    chart_b: list[dict] = field(default_factory=list)
    regions: list[dict] = field(default_factory=list)
    status: AnnotationStatus = AnnotationStatus.DRAFT

    def __post_init__(self):
        self.status = AnnotationStatus(self.status)

    def validate(self, shape_a: tuple[int, int],
                 shape_b: tuple[int, int]) -> None:
        """Bounds- and schema-check every patch against the image sizes."""
        if len(self.chart_a) != len(self.chart_b):
            raise MetadataError(
                f"chart patch count mismatch: {len(self.chart_a)} vs "
                f"{len(self.chart_b)}")
        self.chart_a = [_check_patch(p, shape_a, "image A") for p in self.chart_a]
        self.chart_b = [_check_patch(p, shape_b, "image B") for p in self.chart_b]
        checked = []
        for reg in self.regions:
            if "patch_a" not in reg or "patch_b" not in reg:
                raise MetadataError(f"region must reference both images: {reg!r}")
            checked.append({
                "patch_a": _check_patch(reg["patch_a"], shape_a, "image A"),
                "patch_b": _check_patch(reg["patch_b"], shape_b, "image B"),
            })
        self.regions = checked

    @property
    def n_samples(self) -> int:
        return len(self.chart_a) + len(self.regions)

    def to_dict(self) -> dict:
        return {"pair_id": self.pair_id, "chart_a": self.chart_a,
                "chart_b": self.chart_b, "regions": self.regions,
                "status": self.status.value}

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationRecord":
        try:
            return cls(pair_id=str(d["pair_id"]),
                       chart_a=list(d.get("chart_a") or []),
                       chart_b=list(d.get("chart_b") or []),
                       regions=list(d.get("regions") or []),
                       status=AnnotationStatus(d.get("status", "DRAFT")))
        except (KeyError, ValueError) as exc:
            raise MetadataError(f"malformed annotation record: {exc}") from exc


def save_record(record: AnnotationRecord, path) -> None:
    with open(path, "w") as f:
        json.dump(record.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")


def load_record(path) -> AnnotationRecord:
    with open(path) as f:
        return AnnotationRecord.from_dict(json.load(f))


def homogeneity_check(img: PackedImage, patch: dict,
                      threshold: float = HOMOGENEITY_CV_THRESHOLD) -> dict:
    """Coefficient-of-variation homogeneity test for one square patch.

    cv is the per-channel std/mean, reported as the max over channels;
    the patch passes iff that max is below the threshold. A zero-mean
    channel with any variation counts as maximally inhomogeneous.
    """
    x, y, size = int(patch["x"]), int(patch["y"]), int(patch["size"])
    h, w = img.data.shape[:2]
    if size < 2 or x < 0 or y < 0 or x + size > w or y + size > h:
        raise BoundsError(
            f"patch ({x}, {y}, size {size}) outside {w}x{h} image")
    vals = np.asarray(img.data[y:y + size, x:x + size], dtype=np.float64)
    vals = vals.reshape(-1, vals.shape[-1])
    mean = vals.mean(axis=0)
    std = vals.std(axis=0)
    cv = np.where(std == 0, 0.0, std / np.where(mean == 0, np.inf, mean))
    cv = np.where((std > 0) & (mean == 0), np.inf, cv)
    worst = float(np.max(cv))
    return {"pass": bool(worst < threshold), "cv": worst}

"""Pairwise color calibration between two cameras.

A mapping is a 3xk matrix M applied to a kernel expansion phi of each
pixel color: out = M phi(rgb). Maps are fitted by weighted least squares
from color sample pairs pooled from chart patches and annotated
homogeneous regions, then used to synthesize pixel-aligned anchor pairs
from chart-free captures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BoundsError, ShapeError, SingularFitError
from .rawio import PackedImage


class Kernel(str, Enum):
    IDENTITY = "identity"
    POLY11 = "poly11"


KERNEL_SIZE = {Kernel.IDENTITY: 3, Kernel.POLY11: 11}


class SampleOrigin(str, Enum):
    CHART = "chart"
    ANNOTATED_REGION = "annotated_region"


@dataclass
class ColorSamplePair:
    """One (source color, destination color) correspondence."""

    src: np.ndarray
    dst: np.ndarray
    origin: SampleOrigin = SampleOrigin.CHART
    weight: float = 1.0

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.float64).reshape(3)
        self.dst = np.asarray(self.dst, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.src).all() and np.isfinite(self.dst).all()):
            raise ShapeError("sample colors must be finite")
        if self.weight <= 0:
            raise ShapeError("sample weight must be positive")


@dataclass
class CalibrationMap:
    kernel: Kernel
    M: np.ndarray
    src_camera: str = ""
    dst_camera: str = ""
    fit_residual_rms: float = 0.0

    def __post_init__(self):
        self.kernel = Kernel(self.kernel)
        self.M = np.asarray(self.M, dtype=np.float64)
        k = KERNEL_SIZE[self.kernel]
        if self.M.shape != (3, k):
            raise ShapeError(
                f"matrix shape {self.M.shape} does not match kernel "
                f"{self.kernel.value} (expected (3, {k}))")
        if not np.isfinite(self.M).all():
            raise ShapeError("calibration matrix must be finite")

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.value,
            "M": self.M.tolist(),
            "src_camera": self.src_camera,
            "dst_camera": self.dst_camera,
            "fit_residual_rms": float(self.fit_residual_rms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationMap":
        return cls(kernel=Kernel(d["kernel"]), M=np.asarray(d["M"], float),
                   src_camera=d.get("src_camera", ""),
                   dst_camera=d.get("dst_camera", ""),
                   fit_residual_rms=float(d.get("fit_residual_rms", 0.0)))


def identity_map(camera: str = "") -> CalibrationMap:
    return CalibrationMap(Kernel.IDENTITY, np.eye(3), camera, camera, 0.0)


def save_map(cmap: CalibrationMap, path) -> None:
    with open(path, "w") as f:
        json.dump(cmap.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")


def load_map(path) -> CalibrationMap:
    with open(path) as f:
        return CalibrationMap.from_dict(json.load(f))


@dataclass
class AnchorPair:
    """Pixelwise aligned training pair; image_a in camera-A color space,
    image_b in camera-B space."""

    image_a: PackedImage
    image_b: PackedImage
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.image_a.data.shape[:2] != self.image_b.data.shape[:2]:
            raise ShapeError("anchor pair images must share spatial size")


# ---------------------------------------------------------------------------
# Kernel expansion

def expand_kernel(rgb: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Expand one RGB vector into the kernel feature vector."""
    return expand_kernel_array(np.asarray(rgb, float).reshape(1, 3), kernel)[0]


def expand_kernel_array(rgb: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Vectorized expansion: (..., 3) -> (..., k)."""
    kernel = Kernel(kernel)
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ShapeError("kernel expansion expects 3-channel colors")
    if kernel is Kernel.IDENTITY:
        return rgb.copy()
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return np.stack(
        [r, g, b, r * g, r * b, g * b, r * r, g * g, b * b, r * g * b,
         np.ones_like(r)], axis=-1)


# ---------------------------------------------------------------------------
# Fitting

def _canonical_order(samples: list[ColorSamplePair]) -> list[ColorSamplePair]:
    # Sort by sample content so the accumulation (and hence the solve) is
    # bitwise independent of input ordering.
    keys = np.array([(*s.src, *s.dst, s.weight) for s in samples])
    order = np.lexsort(keys.T[::-1])
    return [samples[i] for i in order]


def fit_map(samples: list[ColorSamplePair], kernel: Kernel,
            src_camera: str = "", dst_camera: str = "",
            ridge: float = 1e-8) -> CalibrationMap:
    """Weighted least-squares fit of M minimizing
    sum_i w_i ||dst_i - M phi(src_i)||^2.

    A small trace-scaled ridge keeps the normal equations stable on nearly
    collinear samples; iterative refinement against the unridged system
    removes its bias whenever the design is well conditioned.
    """
    kernel = Kernel(kernel)
    k = KERNEL_SIZE[kernel]
    if len(samples) < k:
        raise SingularFitError(
            f"need at least {k} samples for {kernel.value}, got {len(samples)}")
    samples = _canonical_order(samples)
    src = np.array([s.src for s in samples])
    dst = np.array([s.dst for s in samples])
    w = np.array([s.weight for s in samples])

    phi = expand_kernel_array(src, kernel)          # (n, k)
    sw = np.sqrt(w)[:, None]
    dsn = phi * sw                                  # weighted design
    sv = np.linalg.svd(dsn, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * max(dsn.shape) * np.finfo(float).eps))
    if rank < k:
        raise SingularFitError(
            f"design matrix rank {rank} < {k}: samples do not span the "
            f"{kernel.value} feature space")

    a = dsn.T @ dsn                                 # (k, k) normal matrix
    b = dsn.T @ (dst * sw)                          # (k, 3)
    lam = ridge * np.trace(a) / k
    a_r = a + lam * np.eye(k)
    x = np.linalg.solve(a_r, b)
    for _ in range(2):
        # refinement drives x to the unridged least-squares solution
        x = x + np.linalg.solve(a_r, b - a @ x)

    m = x.T                                         # (3, k)
    resid = dst - phi @ x
    rms = float(np.sqrt(np.sum(w[:, None] * resid ** 2) / (3.0 * np.sum(w))))
    return CalibrationMap(kernel, m, src_camera, dst_camera, rms)


# ---------------------------------------------------------------------------
# Application

def apply_map(img: PackedImage, cmap: CalibrationMap
              ) -> tuple[PackedImage, float]:
    """Apply a calibration map pixelwise.

    4-channel inputs are mapped in 3-channel space (greens averaged) and
    the mapped green is duplicated back into both green sites. Returns the
    clipped image together with the fraction of pre-clip values that fell
    outside [0, 1].
    """
    data = img.data
    if data.ndim != 3 or data.shape[2] not in (3, 4):
        raise ShapeError(f"expected 3- or 4-channel image, got {data.shape}")
    four = data.shape[2] == 4
    if four:
        rgb = np.stack([data[..., 0],
                        0.5 * (data[..., 1] + data[..., 2]),
                        data[..., 3]], axis=-1).astype(np.float64)
    else:
        rgb = data.astype(np.float64)

    phi = expand_kernel_array(rgb, cmap.kernel)
    mapped = phi @ cmap.M.T
    oog = float(np.mean((mapped < 0.0) | (mapped > 1.0)))
    mapped = np.clip(mapped, 0.0, 1.0)

    if four:
        out = np.stack([mapped[..., 0], mapped[..., 1], mapped[..., 1],
                        mapped[..., 2]], axis=-1)
    else:
        out = mapped
    return PackedImage(out.astype(np.float32), camera_id=cmap.dst_camera
                       or img.camera_id), oog


# ---------------------------------------------------------------------------
# Chart colors

def _patch_bounds(data: np.ndarray, patch: dict) -> tuple[int, int, int]:
    x, y, size = int(patch["x"]), int(patch["y"]), int(patch["size"])
    h, w = data.shape[:2]
    if size < 2:
        raise BoundsError(f"patch size {size} < 2")
    if x < 0 or y < 0 or x + size > w or y + size > h:
        raise BoundsError(
            f"patch ({x}, {y}, size {size}) outside {w}x{h} image")
    return x, y, size


def robust_patch_mean(data: np.ndarray, patch: dict) -> np.ndarray:
    """Per-channel mean after discarding pixels more than 2 MAD from the
    channel median."""
    x, y, size = _patch_bounds(data, patch)
    vals = data[y:y + size, x:x + size].reshape(-1, data.shape[2])
    vals = np.asarray(vals, dtype=np.float64)
    out = np.empty(vals.shape[1])
    for c in range(vals.shape[1]):
        v = vals[:, c]
        med = np.median(v)
        mad = np.median(np.abs(v - med))
        keep = np.abs(v - med) <= 2.0 * mad
        out[c] = v[keep].mean()
    return out


def _mean_rgb(img: PackedImage, patch: dict) -> np.ndarray:
    m = robust_patch_mean(img.data, patch)
    if m.size == 4:
        m = np.array([m[0], 0.5 * (m[1] + m[2]), m[3]])
    return m


def extract_chart_colors(frame: PackedImage,
                         patches: list[dict]) -> list[np.ndarray]:
    """Robust mean color of each chart patch, in patch-list order."""
    return [_mean_rgb(frame, p) for p in patches]


# ---------------------------------------------------------------------------
# Anchor pairs

def collect_samples(frame_a: PackedImage, frame_b: PackedImage,
                    annotations: dict, chart_weight: float = 1.0,
                    region_weight: float = 1.0) -> list[ColorSamplePair]:
    """Pool chart-patch and annotated-region correspondences into A->B
    color sample pairs."""
    chart_a = annotations.get("chart_a") or []
    chart_b = annotations.get("chart_b") or []
    if len(chart_a) != len(chart_b):
        raise ShapeError("chart patch lists must have equal length")
    samples = []
    for pa, pb in zip(chart_a, chart_b):
        samples.append(ColorSamplePair(
            _mean_rgb(frame_a, pa), _mean_rgb(frame_b, pb),
            SampleOrigin.CHART, chart_weight))
    for reg in annotations.get("regions") or []:
        samples.append(ColorSamplePair(
            _mean_rgb(frame_a, reg["patch_a"]), _mean_rgb(frame_b, reg["patch_b"]),
            SampleOrigin.ANNOTATED_REGION, region_weight))
    return samples


def _flip(samples: list[ColorSamplePair]) -> list[ColorSamplePair]:
    return [ColorSamplePair(s.dst, s.src, s.origin, s.weight) for s in samples]


def build_anchor_pair(frame_a_chart: PackedImage, frame_a_free: PackedImage,
                      frame_b_chart: PackedImage, frame_b_free: PackedImage,
                      annotations: dict, scene_id: str = "",
                      chart_weight: float = 1.0, region_weight: float = 1.0
                      ) -> tuple[AnchorPair, AnchorPair]:
    """Fit POLY11 maps in both directions from chart and region samples,
    then synthesize pixel-aligned anchor pairs from the chart-free frames.

    The first pair keeps camera A's chart-free capture and its mapped B
    rendition; the second keeps camera B's capture and its mapped A
    rendition. Both are aligned because each pair shares one capture's
    pixels.
    """
    samples = collect_samples(frame_a_chart, frame_b_chart, annotations,
                              chart_weight, region_weight)
    if len(samples) < KERNEL_SIZE[Kernel.POLY11]:
        raise SingularFitError(
            f"{len(samples)} usable samples < 11 required for poly11")
    cam_a = frame_a_chart.camera_id
    cam_b = frame_b_chart.camera_id
    map_ab = fit_map(samples, Kernel.POLY11, cam_a, cam_b)
    map_ba = fit_map(_flip(samples), Kernel.POLY11, cam_b, cam_a)

    mapped_a, _ = apply_map(frame_a_free, map_ab)
    mapped_b, _ = apply_map(frame_b_free, map_ba)
    pair_ab = AnchorPair(frame_a_free, mapped_a,
                         {"map": map_ab.to_dict(), "scene_id": scene_id})
    pair_ba = AnchorPair(mapped_b, frame_b_free,
                         {"map": map_ba.to_dict(), "scene_id": scene_id})
    return pair_ab, pair_ba

"""Comparison methods: global calibration (3x3 and polynomial) fitted from
one aligned pair at a time, and Fourier-domain amplitude swapping.

Both runners repeat their experiment once per anchor and report the spread
across anchor choices: each report row is one anchor's mean over the test
set, so mean/std aggregate over anchors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .calibfit import AnchorPair, ColorSamplePair, Kernel, apply_map, fit_map
from .errors import ConfigError, ShapeError
from .evalkit import (PSNR_CAP_DB, CameraColorProfile, MetricsReport,
                      evaluate)
from .rawio import PackedImage

GLOBAL_3X3_LABEL = "global-3x3"
GLOBAL_POLY_LABEL = "global-poly"
FDA_LABEL = "fda"


@dataclass
class FdaConfig:
    beta: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.beta <= 0.5:
            raise ConfigError(f"beta {self.beta} outside [0, 0.5]")


def _anchor_samples(anchor: AnchorPair, max_samples: int,
                    rng: np.random.Generator) -> list[ColorSamplePair]:
    # Aligned pair: every pixel is a correspondence; subsample for speed.
    a = np.asarray(anchor.image_a.data, dtype=np.float64).reshape(-1, anchor.image_a.data.shape[-1])
    b = np.asarray(anchor.image_b.data, dtype=np.float64).reshape(-1, anchor.image_b.data.shape[-1])
    if a.shape[-1] == 4:
        a = np.stack([a[:, 0], 0.5 * (a[:, 1] + a[:, 2]), a[:, 3]], axis=1)
    if b.shape[-1] == 4:
        b = np.stack([b[:, 0], 0.5 * (b[:, 1] + b[:, 2]), b[:, 3]], axis=1)
    n = a.shape[0]
    if n > max_samples:
        idx = rng.choice(n, size=max_samples, replace=False)
        a, b = a[idx], b[idx]
    return [ColorSamplePair(sa, sb) for sa, sb in zip(a, b)]


def kernel_label(kernel: Kernel) -> str:
    return GLOBAL_3X3_LABEL if Kernel(kernel) is Kernel.IDENTITY \
        else GLOBAL_POLY_LABEL


def _mean_rows(outer: MetricsReport, name: str, inner: MetricsReport) -> None:
    agg = inner.aggregates()
    outer.add_row(name, min(agg["psnr"][0], PSNR_CAP_DB), agg["ssim"][0],
                  agg["mae"][0], agg["delta_e"][0])


def global_calibration_run(anchors: list[AnchorPair],
                           tests: list[tuple[PackedImage, PackedImage]],
                           kernel: Kernel, profile: CameraColorProfile,
                           illuminant: np.ndarray | None = None,
                           max_samples: int = 4096,
                           seed: int = 0) -> MetricsReport:
    """Fit one map per anchor pair, apply it to every test image, score
    against ground truth, and aggregate across anchors."""
    if not anchors:
        raise ConfigError("need at least one anchor pair")
    kernel = Kernel(kernel)
    report = MetricsReport(method=kernel_label(kernel),
                           direction=_direction(tests))
    for i, anchor in enumerate(anchors):
        rng = np.random.default_rng([seed, i])
        samples = _anchor_samples(anchor, max_samples, rng)
        cmap = fit_map(samples, kernel,
                       anchor.image_a.camera_id, anchor.image_b.camera_id)
        mapped = [apply_map(src, cmap)[0] for src, _ in tests]
        inner = evaluate(mapped, [gt for _, gt in tests], profile, illuminant)
        _mean_rows(report, _anchor_name(anchor, i), inner)
    return report


def _anchor_name(anchor: AnchorPair, i: int) -> str:
    sid = anchor.provenance.get("scene_id") if anchor.provenance else None
    return sid or f"anchor{i:02d}"


def _direction(tests) -> str:
    if tests:
        return f"{tests[0][0].camera_id}->{tests[0][1].camera_id}"
    return ""


# ---------------------------------------------------------------------------
# Fourier domain adaptation

def _bilinear_resize(data: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = data.shape[:2]
    ho, wo = shape
    if (h, w) == (ho, wo):
        return data
    ys = (np.arange(ho) + 0.5) * h / ho - 0.5
    xs = (np.arange(wo) + 0.5) * w / wo - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    out = np.empty((ho, wo, data.shape[2]), dtype=np.float64)
    for c in range(data.shape[2]):
        out[..., c] = map_coordinates(data[..., c].astype(np.float64),
                                      [gy, gx], order=1, mode="nearest")
    return out


def _window_halfwidth(beta: float, h: int, w: int) -> int:
    r = int(np.floor(beta * min(h, w)))
    # keep the swap window symmetric under frequency negation so the
    # inverse transform stays real (Nyquist rows are excluded)
    cap_h = (h - 1) // 2 if h % 2 else h // 2 - 1
    cap_w = (w - 1) // 2 if w % 2 else w // 2 - 1
    return max(0, min(r, cap_h, cap_w))


def fda_map(src: PackedImage, target: PackedImage,
            cfg: FdaConfig | None = None) -> PackedImage:
    """Replace src's low-frequency Fourier amplitudes with target's.

    Per channel: both images are transformed, the amplitude of src inside
    the centered square window of half-width floor(beta * min(h, w)) is
    replaced by target's amplitude, src's phase is kept, and the inverse
    transform is clipped to [0, 1]. beta = 0 swaps nothing and returns src
    unchanged. Targets of a different size are bilinearly resized first.
    """
    cfg = cfg or FdaConfig()
    sdata = np.asarray(src.data, dtype=np.float64)
    tdata = np.asarray(target.data, dtype=np.float64)
    if sdata.shape[-1] != tdata.shape[-1]:
        raise ShapeError(
            f"channel mismatch: {sdata.shape[-1]} vs {tdata.shape[-1]}")
    h, w = sdata.shape[:2]
    tdata = _bilinear_resize(tdata, (h, w))

    r = _window_halfwidth(cfg.beta, h, w)
    if r == 0:
        return PackedImage(src.data.copy(), camera_id=src.camera_id)

    cy, cx = h // 2, w // 2
    ys = slice(cy - r, cy + r + 1)
    xs = slice(cx - r, cx + r + 1)
    out = np.empty_like(sdata)
    for c in range(sdata.shape[2]):
        fs = np.fft.fftshift(np.fft.fft2(sdata[..., c]))
        ft = np.fft.fftshift(np.fft.fft2(tdata[..., c]))
        amp = np.abs(fs)
        phase = np.angle(fs)
        amp[ys, xs] = np.abs(ft)[ys, xs]
        fs = amp * np.exp(1j * phase)
        out[..., c] = np.fft.ifft2(np.fft.ifftshift(fs)).real
    out = np.clip(out, 0.0, 1.0)
    return PackedImage(out.astype(np.float32), camera_id=src.camera_id)


def fda_run(anchors: list[PackedImage],
            tests: list[tuple[PackedImage, PackedImage]],
            cfg: FdaConfig | None = None,
            profile: CameraColorProfile | None = None,
            illuminant: np.ndarray | None = None) -> MetricsReport:
    """FDA every test image against each anchor in turn; aggregate across
    anchors like global_calibration_run."""
    if not anchors:
        raise ConfigError("need at least one anchor image")
    cfg = cfg or FdaConfig()
    report = MetricsReport(method=FDA_LABEL, direction=_direction(tests))
    for i, anchor in enumerate(anchors):
        mapped = [fda_map(src, anchor, cfg) for src, _ in tests]
        inner = evaluate(mapped, [gt for _, gt in tests], profile, illuminant)
        _mean_rows(report, f"anchor{i:02d}", inner)
    return report

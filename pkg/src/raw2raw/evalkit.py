"""Quantitative evaluation: PSNR, SSIM, MAE in raw space and CIEDE2000 in
CIE Lab after a camera-specific XYZ mapping.

Reports carry per-image rows plus mean/std aggregates and render as an
aligned text table or CSV. Infinite PSNR (identical images) is kept as a
sentinel in rows and capped at 99 dB for aggregation and CSV so summary
statistics stay finite.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DegenerateIlluminantError, ShapeError
from .rawio import PackedImage

PSNR_CAP_DB = 99.0
D65_WHITE = np.array([0.95047, 1.0, 1.08883])


@dataclass
class CameraColorProfile:
    """3x3 mapping from white-balanced camera raw to CIE XYZ."""

    xyz_matrix: np.ndarray
    camera_id: str = ""

    def __post_init__(self):
        self.xyz_matrix = np.asarray(self.xyz_matrix, dtype=np.float64)
        if self.xyz_matrix.shape != (3, 3):
            raise ShapeError("xyz_matrix must be 3x3")
        if not np.isfinite(self.xyz_matrix).all():
            raise ShapeError("xyz_matrix must be finite")
        if abs(np.linalg.det(self.xyz_matrix)) < 1e-12:
            raise ShapeError("xyz_matrix must be invertible")

    def to_dict(self) -> dict:
        return {"camera_id": self.camera_id,
                "xyz_matrix": self.xyz_matrix.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraColorProfile":
        return cls(np.asarray(d["xyz_matrix"], float), d.get("camera_id", ""))


def save_profile(profile: CameraColorProfile, path) -> None:
    with open(path, "w") as f:
        json.dump(profile.to_dict(), f, indent=1, sort_keys=True)
        f.write("\n")


def load_profile(path) -> CameraColorProfile:
    with open(path) as f:
        return CameraColorProfile.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Raw-space metrics

def _pair_arrays(x: PackedImage, y: PackedImage) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x.data, dtype=np.float64)
    b = np.asarray(y.data, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(x: PackedImage, y: PackedImage) -> float:
    """Peak signal-to-noise ratio in dB with peak 1; +inf for identical
    inputs."""
    a, b = _pair_arrays(x, y)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def mae(x: PackedImage, y: PackedImage) -> float:
    a, b = _pair_arrays(x, y)
    return float(np.mean(np.abs(a - b)))


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def ssim(x: PackedImage, y: PackedImage, k1: float = 0.01, k2: float = 0.03,
         win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean local SSIM with a Gaussian window, per channel then averaged.

    Local statistics use the classic formulation: Gaussian-weighted means,
    variances and covariance over the valid (fully overlapped) region.
    """
    a, b = _pair_arrays(x, y)
    h, w = a.shape[:2]
    if h < win_size or w < win_size:
        raise ShapeError(f"image {h}x{w} smaller than SSIM window {win_size}")
    c1 = k1 ** 2
    c2 = k2 ** 2
    g = _ssim_window(win_size, sigma)
    pad = (win_size - 1) // 2

    def filt(arr):
        out = correlate1d(arr, g, axis=0, mode="constant")
        out = correlate1d(out, g, axis=1, mode="constant")
        return out[pad:h - pad, pad:w - pad]

    scores = []
    for c in range(a.shape[2]):
        xa, yb = a[..., c], b[..., c]
        mu_x = filt(xa)
        mu_y = filt(yb)
        xx = filt(xa * xa) - mu_x * mu_x
        yy = filt(yb * yb) - mu_y * mu_y
        xy = filt(xa * yb) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Color transforms

def _to_rgb(img: PackedImage) -> np.ndarray:
    data = np.asarray(img.data, dtype=np.float64)
    if data.shape[-1] == 4:
        data = np.stack([data[..., 0], 0.5 * (data[..., 1] + data[..., 2]),
                         data[..., 3]], axis=-1)
    return data


def estimate_illuminant(img: PackedImage,
                        chart_patches: list[dict] | None = None) -> np.ndarray:
    """Unit-norm illuminant estimate.

    With chart patches (achromatic ones), the normalized mean of their
    robust patch colors; otherwise a gray-world estimate from the channel
    means.
    """
    from .calibfit import robust_patch_mean

    rgb = _to_rgb(img)
    if chart_patches:
        colors = np.array([robust_patch_mean(rgb, p) for p in chart_patches])
        est = colors.mean(axis=0)
    else:
        est = rgb.reshape(-1, 3).mean(axis=0)
    norm = float(np.linalg.norm(est))
    if norm < 1e-12:
        raise DegenerateIlluminantError("illuminant estimate has zero norm")
    return est / norm


_LAB_EPS = (6.0 / 29.0) ** 3
_LAB_KAPPA = 3.0 * (6.0 / 29.0) ** 2


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _LAB_EPS, np.cbrt(t), t / _LAB_KAPPA + 4.0 / 29.0)


def raw_to_lab(img: PackedImage, illum: np.ndarray,
               profile: CameraColorProfile,
               ref_white: np.ndarray = D65_WHITE) -> np.ndarray:
    """White-balance, map to XYZ, convert to CIE Lab.

    White balance divides channel c by illum_c / max(illum) so the
    brightest channel passes through unscaled.
    """
    illum = np.asarray(illum, dtype=np.float64).reshape(3)
    if np.any(illum == 0.0) or not np.isfinite(illum).all():
        raise DegenerateIlluminantError(
            f"illuminant {illum.tolist()} has a zero or non-finite component")
    rgb = _to_rgb(img)
    wb = rgb / (illum / illum.max())
    xyz = wb @ profile.xyz_matrix.T
    ratios = _lab_f(np.maximum(xyz, 0.0) / np.asarray(ref_white, float))
    fx, fy, fz = ratios[..., 0], ratios[..., 1], ratios[..., 2]
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)],
                   axis=-1)
    return lab


def ciede2000(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """Per-pixel CIEDE2000 with the full lightness/chroma/hue weighting and
    rotation terms (kL = kC = kH = 1)."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    if lab1.shape != lab2.shape:
        raise ShapeError(f"shape mismatch: {lab1.shape} vs {lab2.shape}")
    l1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    l2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c1 = np.hypot(a1, b1)
    c2 = np.hypot(a2, b2)
    cbar = 0.5 * (c1 + c2)
    c7 = cbar ** 7
    g = 0.5 * (1.0 - np.sqrt(c7 / (c7 + 25.0 ** 7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = np.hypot(a1p, b1)
    c2p = np.hypot(a2p, b2)

    h1p = np.degrees(np.arctan2(b1, a1p)) % 360.0
    h2p = np.degrees(np.arctan2(b2, a2p)) % 360.0
    h1p = np.where((b1 == 0) & (a1p == 0), 0.0, h1p)
    h2p = np.where((b2 == 0) & (a2p == 0), 0.0, h2p)

    dlp = l2 - l1
    dcp = c2p - c1p
    zero = (c1p * c2p) == 0.0
    dh = h2p - h1p
    dh = np.where(dh > 180.0, dh - 360.0, dh)
    dh = np.where(dh < -180.0, dh + 360.0, dh)
    dh = np.where(zero, 0.0, dh)
    dhp = 2.0 * np.sqrt(c1p * c2p) * np.sin(np.radians(0.5 * dh))

    lbar = 0.5 * (l1 + l2)
    cbarp = 0.5 * (c1p + c2p)
    hsum = h1p + h2p
    habs = np.abs(h1p - h2p)
    hbar = np.where(habs <= 180.0, 0.5 * hsum,
                    np.where(hsum < 360.0, 0.5 * (hsum + 360.0),
                             0.5 * (hsum - 360.0)))
    hbar = np.where(zero, hsum, hbar)

    t = (1.0 - 0.17 * np.cos(np.radians(hbar - 30.0))
         + 0.24 * np.cos(np.radians(2.0 * hbar))
         + 0.32 * np.cos(np.radians(3.0 * hbar + 6.0))
         - 0.20 * np.cos(np.radians(4.0 * hbar - 63.0)))
    dtheta = 30.0 * np.exp(-(((hbar - 275.0) / 25.0) ** 2))
    cbp7 = cbarp ** 7
    rc = 2.0 * np.sqrt(cbp7 / (cbp7 + 25.0 ** 7))
    lm50 = (lbar - 50.0) ** 2
    sl = 1.0 + 0.015 * lm50 / np.sqrt(20.0 + lm50)
    sc = 1.0 + 0.045 * cbarp
    sh = 1.0 + 0.015 * cbarp * t
    rt = -np.sin(np.radians(2.0 * dtheta)) * rc

    tl = dlp / sl
    tc = dcp / sc
    th = dhp / sh
    return np.sqrt(tl ** 2 + tc ** 2 + th ** 2 + rt * tc * th)


def delta_e_2000(lab1: np.ndarray, lab2: np.ndarray) -> float:
    """Mean CIEDE2000 over all pixels."""
    return float(np.mean(ciede2000(lab1, lab2)))


# ---------------------------------------------------------------------------
# Reports

_COLUMNS = ("psnr", "ssim", "mae", "delta_e")
_HEADERS = {"psnr": "PSNR↑", "ssim": "SSIM↑", "mae": "MAE↓",
            "delta_e": "ΔE↓"}


def _cap(v: float) -> float:
    return min(v, PSNR_CAP_DB)


@dataclass
class MetricsReport:
    method: str
    direction: str
    rows: list[dict] = field(default_factory=list)

    def add_row(self, name: str, psnr_db: float, ssim_score: float,
                mae_val: float, delta_e: float) -> None:
        if not -1.0 <= ssim_score <= 1.0:
            raise ShapeError(f"ssim {ssim_score} outside [-1, 1]")
        if mae_val < 0 or delta_e < 0:
            raise ShapeError("mae and delta_e must be nonnegative")
        self.rows.append({"name": name, "psnr": psnr_db, "ssim": ssim_score,
                          "mae": mae_val, "delta_e": delta_e})

    def column(self, key: str, capped: bool = True) -> np.ndarray:
        vals = np.array([r[key] for r in self.rows], dtype=np.float64)
        if key == "psnr" and capped:
            vals = np.minimum(vals, PSNR_CAP_DB)
        return vals

    def aggregates(self) -> dict:
        """Mean and std per metric; infinite PSNR rows enter as the cap."""
        out = {}
        for key in _COLUMNS:
            vals = self.column(key)
            out[key] = (float(vals.mean()), float(vals.std()))
        return out

    def to_table(self) -> str:
        agg = self.aggregates()
        head = f"method: {self.method}   direction: {self.direction}"
        cols = ["image"] + [_HEADERS[k] for k in _COLUMNS]
        body = []
        for r in self.rows:
            body.append([r["name"]] + [
                "inf" if math.isinf(r[k]) else f"{r[k]:.4f}" for k in _COLUMNS])
        body.append(["mean"] + [f"{agg[k][0]:.4f}" for k in _COLUMNS])
        body.append(["std"] + [f"{agg[k][1]:.4f}" for k in _COLUMNS])
        widths = [max(len(row[i]) for row in [cols] + body)
                  for i in range(len(cols))]
        lines = [head, "  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        for row in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("image,psnr_db,ssim,mae,delta_e2000\n")
        for r in self.rows:
            vals = [_cap(r["psnr"]), r["ssim"], r["mae"], r["delta_e"]]
            buf.write(r["name"] + "," + ",".join(f"{v:.6f}" for v in vals)
                      + "\n")
        agg = self.aggregates()
        for stat, idx in (("mean", 0), ("std", 1)):
            buf.write(stat + "," + ",".join(
                f"{agg[k][idx]:.6f}" for k in _COLUMNS) + "\n")
        return buf.getvalue()


def evaluate(mapped: list[PackedImage], ground_truth: list[PackedImage],
             profile: CameraColorProfile,
             illuminant: np.ndarray | None = None,
             method: str = "", direction: str = "",
             names: list[str] | None = None) -> MetricsReport:
    """Score each mapped image against its aligned ground truth.

    PSNR/SSIM/MAE run on the raw images; CIEDE2000 runs on Lab renditions
    under the given illuminant (or a per-image gray-world estimate from the
    ground truth when none is supplied).
    """
    if len(mapped) != len(ground_truth):
        raise ShapeError(
            f"{len(mapped)} mapped images vs {len(ground_truth)} references")
    report = MetricsReport(method=method, direction=direction)
    for i, (m, gt) in enumerate(zip(mapped, ground_truth)):
        illum = illuminant if illuminant is not None else estimate_illuminant(gt)
        lab_m = raw_to_lab(m, illum, profile)
        lab_g = raw_to_lab(gt, illum, profile)
        name = names[i] if names else f"img{i:03d}"
        report.add_row(name, psnr(m, gt), ssim(m, gt), mae(m, gt),
                       delta_e_2000(lab_m, lab_g))
    return report

"""Spectral image formation for virtual camera sensors.

Renders per-pixel sensor responses as the discrete sum over a wavelength
grid of illuminant power x surface reflectance x channel sensitivity, and
generates deterministic paired/unpaired/anchor datasets with known ground
truth for end-to-end verification. Scene reflectances are smooth mixtures
of Gaussian bumps in wavelength, arranged as soft spatial blobs; illuminants
follow a blackbody-like shape with randomized temperature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rawio
from .errors import ConfigError, GridError
from .rawio import PackedImage

DEFAULT_GRID_START = 400.0
DEFAULT_GRID_STOP = 700.0
DEFAULT_GRID_STEP = 10.0

# CIE 1931 2-degree observer, multi-lobe Gaussian approximation
# (Wyman/Sloan/Shirley). Tuples: (scale, center nm, sigma below, sigma above).
_CMF_LOBES = {
    "x": ((1.056, 599.8, 37.9, 31.0), (0.362, 442.0, 16.0, 26.7),
          (-0.065, 501.1, 20.4, 26.2)),
    "y": ((0.821, 568.8, 46.9, 40.5), (0.286, 530.9, 16.3, 31.1)),
    "z": ((1.217, 437.0, 11.8, 36.0), (0.681, 459.0, 26.0, 13.8)),
}

D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def default_grid() -> np.ndarray:
    return np.arange(DEFAULT_GRID_START, DEFAULT_GRID_STOP + DEFAULT_GRID_STEP / 2,
                     DEFAULT_GRID_STEP)


@dataclass
class SpectralSensor:
    """Per-channel spectral sensitivity curves on a fixed wavelength grid."""

    wavelengths: np.ndarray
    sensitivity: np.ndarray  # (3, len(wavelengths)), non-negative
    name: str

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.sensitivity = np.asarray(self.sensitivity, dtype=np.float64)
        if self.wavelengths.ndim != 1 or self.wavelengths.size < 2:
            raise ConfigError("wavelength grid needs at least 2 points")
        if np.any(np.diff(self.wavelengths) <= 0):
            raise ConfigError("wavelength grid must be strictly increasing")
        if self.sensitivity.shape != (3, self.wavelengths.size):
            raise ConfigError(
                f"sensitivity must be (3, {self.wavelengths.size}), "
                f"got {self.sensitivity.shape}")
        if np.any(self.sensitivity < 0):
            raise ConfigError("sensitivity must be non-negative")

    def to_dict(self) -> dict:
        return {"name": self.name,
                "wavelengths": self.wavelengths.tolist(),
                "sensitivity": self.sensitivity.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralSensor":
        return cls(np.asarray(d["wavelengths"]), np.asarray(d["sensitivity"]),
                   d["name"])


@dataclass
class SpectralScene:
    """Illuminant power and per-pixel reflectance on a wavelength grid."""

    wavelengths: np.ndarray
    illuminant: np.ndarray   # (len(grid),), non-negative relative power
    reflectance: np.ndarray  # (h, w, len(grid)), in [0, 1]

    def __post_init__(self):
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
        self.illuminant = np.asarray(self.illuminant, dtype=np.float64)
        self.reflectance = np.asarray(self.reflectance, dtype=np.float64)
        n = self.wavelengths.size
        if self.illuminant.shape != (n,):
            raise ConfigError(f"illuminant must be ({n},), got {self.illuminant.shape}")
        if np.any(self.illuminant < 0):
            raise ConfigError("illuminant must be non-negative")
        if self.reflectance.ndim != 3 or self.reflectance.shape[2] != n:
            raise ConfigError(
                f"reflectance must be (h, w, {n}), got {self.reflectance.shape}")
        if self.reflectance.min() < 0 or self.reflectance.max() > 1:
            raise ConfigError("reflectance must lie in [0, 1]")


def grid_weights(wavelengths: np.ndarray) -> np.ndarray:
    """Per-point integration width; equals the step on uniform grids."""
    lam = np.asarray(wavelengths, dtype=np.float64)
    w = np.empty_like(lam)
    w[1:-1] = 0.5 * (lam[2:] - lam[:-2])
    w[0] = lam[1] - lam[0]
    w[-1] = lam[-1] - lam[-2]
    return w


def raw_responses(scene: SpectralScene, sensor: SpectralSensor) -> np.ndarray:
    """Unclipped, unexposed sensor responses of shape (h, w, 3)."""
    if not np.array_equal(scene.wavelengths, sensor.wavelengths):
        raise GridError(
            f"scene grid ({scene.wavelengths.size} pts) differs from sensor "
            f"{sensor.name!r} grid ({sensor.wavelengths.size} pts)")
    dlam = grid_weights(scene.wavelengths)
    spectral = scene.illuminant * dlam                       # (n,)
    weighted = sensor.sensitivity * spectral                 # (3, n)
    return np.einsum("hwn,cn->hwc", scene.reflectance, weighted)


def auto_exposure(responses: np.ndarray) -> float:
    """Exposure constant putting the 99th-percentile response at 1."""
    p99 = np.percentile(responses, 99.0)
    return float(1.0 / p99) if p99 > 0 else 1.0


def render(scene: SpectralScene, sensor: SpectralSensor,
           exposure: float | None = None) -> tuple[PackedImage, float]:
    """Render the scene through the sensor's sensitivities.

    Returns the clipped [0, 1] 3-channel image together with the exposure
    constant that was applied. When ``exposure`` is None it is chosen so the
    99th-percentile response is 1 (and therefore no brighter value survives
    clipping except the top percentile).
    """
    responses = raw_responses(scene, sensor)
    if exposure is None:
        exposure = auto_exposure(responses)
    img = np.clip(responses * exposure, 0.0, 1.0)
    return PackedImage(img, camera_id=sensor.name), float(exposure)


# ---------------------------------------------------------------------------
# Sensor constructors

def gaussian_sensor(name: str, peaks=(600.0, 540.0, 460.0),
                    widths=(45.0, 45.0, 45.0), gains=(1.0, 1.0, 1.0),
                    wavelengths=None) -> SpectralSensor:
    """Smooth Gaussian-shaped sensitivity curves, one per channel."""
    lam = default_grid() if wavelengths is None else np.asarray(wavelengths, float)
    curves = [g * np.exp(-0.5 * ((lam - p) / w) ** 2)
              for p, w, g in zip(peaks, widths, gains)]
    return SpectralSensor(lam, np.stack(curves), name)


def mixed_sensor(base: SpectralSensor, matrix, name: str) -> SpectralSensor:
    """Sensor whose curves are a channel mixing of another sensor's.

    Renders from the result relate to the base sensor's by exactly that 3x3
    matrix (before exposure scaling and clipping), which makes the true
    cross-sensor map linear by construction.
    """
    t = np.asarray(matrix, dtype=np.float64)
    if t.shape != (3, 3):
        raise ConfigError(f"mixing matrix must be 3x3, got {t.shape}")
    mixed = t @ base.sensitivity
    if np.any(mixed < 0):
        raise ConfigError("mixing produced negative sensitivities")
    return SpectralSensor(base.wavelengths.copy(), mixed, name)


def cmf_curves(wavelengths: np.ndarray) -> np.ndarray:
    """Color matching functions (3, n) from the analytic lobe fit."""
    lam = np.asarray(wavelengths, dtype=np.float64)
    out = np.zeros((3, lam.size))
    for row, key in enumerate("xyz"):
        for scale, center, s_lo, s_hi in _CMF_LOBES[key]:
            sigma = np.where(lam < center, s_lo, s_hi)
            out[row] += scale * np.exp(-0.5 * ((lam - center) / sigma) ** 2)
    return np.clip(out, 0.0, None)


def blackbody_illuminant(wavelengths: np.ndarray, temperature: float) -> np.ndarray:
    """Relative blackbody power spectrum, normalized to peak 1 on the grid."""
    lam_m = np.asarray(wavelengths, dtype=np.float64) * 1e-9
    c2 = 1.4388e-2  # second radiation constant, m*K
    power = lam_m ** -5 / np.expm1(c2 / (lam_m * temperature))
    return power / power.max()


def rendered_illuminant(sensor: SpectralSensor, illuminant: np.ndarray) -> np.ndarray:
    """Unit-norm raw color of a perfect white reflector under the illuminant."""
    dlam = grid_weights(sensor.wavelengths)
    raw = sensor.sensitivity @ (np.asarray(illuminant) * dlam)
    n = np.linalg.norm(raw)
    return raw / n if n > 0 else raw


def fit_color_profile(sensor: SpectralSensor, n_spectra: int = 400,
                      seed: int = 7) -> np.ndarray:
    """Fit the 3x3 raw-to-XYZ matrix for a virtual sensor.

    Plays the role of a manufacturer calibration: least squares over random
    smooth reflectances under an equal-energy illuminant, constrained so a
    white-balanced white (1, 1, 1) maps exactly to the D65 white point.
    """
    lam = sensor.wavelengths
    rng = np.random.default_rng(seed)
    spectra = _random_spectra(lam, n_spectra, rng)        # (m, n) in [0, 1]
    dlam = grid_weights(lam)
    raw = spectra @ (sensor.sensitivity * dlam).T          # (m, 3)
    raw_white = sensor.sensitivity @ dlam
    raw_wb = raw / raw_white                               # white-balanced
    cmf = cmf_curves(lam)
    xyz = spectra @ (cmf * dlam).T                         # (m, 3)
    xyz_white = cmf @ dlam
    xyz = xyz / xyz_white * D65_WHITE                      # white -> D65 white
    # Per-row equality-constrained least squares: row . (1,1,1) = white_j.
    # Eliminate the third coefficient and solve the reduced 2-var problem.
    mat = np.zeros((3, 3))
    a12 = raw_wb[:, :2] - raw_wb[:, 2:3]
    for j in range(3):
        rhs = xyz[:, j] - D65_WHITE[j] * raw_wb[:, 2]
        sol, *_ = np.linalg.lstsq(a12, rhs, rcond=None)
        mat[j, :2] = sol
        mat[j, 2] = D65_WHITE[j] - sol.sum()
    return mat


def _random_spectra(lam: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth random reflectance spectra in [0.02, 0.98]: Gaussian bump mixes."""
    spectra = np.empty((count, lam.size))
    span = lam[-1] - lam[0]
    for i in range(count):
        n_bumps = rng.integers(1, 4)
        base = rng.uniform(0.05, 0.35)
        s = np.full(lam.size, base)
        for _ in range(n_bumps):
            center = rng.uniform(lam[0] - 0.1 * span, lam[-1] + 0.1 * span)
            width = rng.uniform(0.05 * span, 0.35 * span)
            amp = rng.uniform(-0.5, 0.9)
            s += amp * np.exp(-0.5 * ((lam - center) / width) ** 2)
        spectra[i] = np.clip(s, 0.02, 0.98)
    return spectra


# ---------------------------------------------------------------------------
# Scene generation

def random_scene(wavelengths: np.ndarray, height: int, width: int,
                 rng: np.random.Generator,
                 temperature_range=(2800.0, 7500.0)) -> SpectralScene:
    """Smooth random scene: soft spatial blobs, each with its own spectrum."""
    lam = np.asarray(wavelengths, dtype=np.float64)
    n_blobs = int(rng.integers(4, 9))
    spectra = _random_spectra(lam, n_blobs + 1, rng)  # last one is background
    ys, xs = np.mgrid[0:height, 0:width]
    weights = np.full((height, width, 1), 0.35)       # background weight
    profiles = [spectra[-1]]
    for b in range(n_blobs):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        sigma = rng.uniform(0.08, 0.35) * max(height, width)
        mask = np.exp(-0.5 * (((ys - cy) ** 2 + (xs - cx) ** 2) / sigma ** 2))
        weights = np.concatenate([weights, mask[:, :, None]], axis=2)
        profiles.append(spectra[b])
    weights /= weights.sum(axis=2, keepdims=True)
    reflectance = np.einsum("hwb,bn->hwn", weights, np.stack(profiles))
    temperature = rng.uniform(*temperature_range)
    illum = blackbody_illuminant(lam, temperature)
    return SpectralScene(lam, illum, np.clip(reflectance, 0.0, 1.0))


# 24-patch chart: 18 chromatic Gaussian-bump reflectances + 6 achromatic
# levels, laid out 4 rows x 6 columns. Tuples: (center nm, width nm, amp, base).
_CHART_CHROMA = (
    (450, 30, 0.75, 0.06), (470, 45, 0.70, 0.08), (500, 35, 0.72, 0.06),
    (520, 30, 0.78, 0.08), (540, 40, 0.75, 0.06), (560, 35, 0.80, 0.08),
    (580, 30, 0.78, 0.08), (600, 40, 0.80, 0.06), (620, 35, 0.82, 0.08),
    (640, 45, 0.80, 0.06), (660, 40, 0.78, 0.08), (680, 50, 0.75, 0.06),
    (430, 60, 0.60, 0.15), (490, 70, 0.55, 0.20), (550, 80, 0.60, 0.15),
    (610, 70, 0.62, 0.18), (460, 25, 0.85, 0.25), (630, 25, 0.85, 0.25),
)
_CHART_NEUTRALS = (0.90, 0.70, 0.50, 0.35, 0.20, 0.09)


def chart_reflectances(wavelengths: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """The 24 chart patch spectra and their labels (N* rows are achromatic)."""
    lam = np.asarray(wavelengths, dtype=np.float64)
    spectra = []
    labels = []
    for i, (center, width, amp, base) in enumerate(_CHART_CHROMA):
        s = base + amp * np.exp(-0.5 * ((lam - center) / width) ** 2)
        spectra.append(np.clip(s, 0.0, 1.0))
        labels.append(f"C{i + 1:02d}")
    for i, level in enumerate(_CHART_NEUTRALS):
        spectra.append(np.full(lam.size, level))
        labels.append(f"N{i + 1}")
    return np.stack(spectra), labels


def chart_scene(wavelengths: np.ndarray, illuminant: np.ndarray,
                patch_px: int = 12, margin_px: int = 4
                ) -> tuple[SpectralScene, list[dict]]:
    """Synthetic 24-patch chart (4x6 grid) plus per-patch coordinates.

    Coordinate entries are {x, y, size, label} with (x, y) the top-left of
    the square sample window, matching the sidecar chart_patches schema.
    """
    lam = np.asarray(wavelengths, dtype=np.float64)
    spectra, labels = chart_reflectances(lam)
    rows, cols = 4, 6
    pitch = patch_px + margin_px
    height = rows * pitch + margin_px
    width = cols * pitch + margin_px
    reflectance = np.full((height, width, lam.size), 0.25)
    patches = []
    for r in range(rows):
        for c in range(cols):
            idx = r * cols + c
            y0 = margin_px + r * pitch
            x0 = margin_px + c * pitch
            reflectance[y0:y0 + patch_px, x0:x0 + patch_px, :] = spectra[idx]
            inset = patch_px // 4
            patches.append({"x": x0 + inset, "y": y0 + inset,
                            "size": patch_px - 2 * inset, "label": labels[idx]})
    return SpectralScene(lam, np.asarray(illuminant, float), reflectance), patches


# ---------------------------------------------------------------------------
# Dataset generation

CHART_TEMPERATURE = 5000.0


def make_paired_dataset(n_scenes: int, sensor_a: SpectralSensor,
                        sensor_b: SpectralSensor, seed: int,
                        out_dir, image_size=(64, 64),
                        n_anchor: int = 2, n_test: int = 2,
                        exposure_percentile: float = 99.0,
                        temperature_range=(2800.0, 7500.0)) -> dict:
    """Generate a deterministic synthetic dataset and write it to disk.

    ``n_scenes`` scenes go to each camera's unpaired split (distinct scenes
    per camera); ``n_anchor``/``n_test`` scenes are rendered by both sensors
    with a shared per-scene exposure constant. Every split also receives a
    24-patch chart scene. Returns the manifest (also written as
    ``manifest.json`` under ``out_dir``).
    """
    if n_scenes < 1:
        raise ConfigError("n_scenes must be >= 1")
    if not np.array_equal(sensor_a.wavelengths, sensor_b.wavelengths):
        raise GridError("sensors must share a wavelength grid")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = image_size
    lam = sensor_a.wavelengths
    entries = []

    def emit(img: PackedImage, sensor: SpectralSensor, split: str,
             scene_id: str, exposure: float, scene: SpectralScene,
             chart: list[dict] | None) -> None:
        name = f"{scene_id}_{sensor.name}"
        rel = f"{split}/{name}"
        illum_color = rendered_illuminant(sensor, scene.illuminant)
        frame = rawio.packed_to_frame(img, bit_depth=16, camera_id=sensor.name,
                                      illuminant=illum_color,
                                      chart_patches=chart)
        rawio.save_frame(frame, out / rel)
        entries.append({
            "path": rel, "camera_id": sensor.name, "split": split,
            "scene_id": scene_id, "exposure": float(exposure),
            "is_chart": chart is not None,
        })

    def emit_pair(scene: SpectralScene, split: str, scene_id: str,
                  chart: list[dict] | None) -> None:
        # Shared exposure from unclipped responses so neither side saturates.
        ref = max(np.percentile(raw_responses(scene, sensor_a),
                                exposure_percentile),
                  np.percentile(raw_responses(scene, sensor_b),
                                exposure_percentile))
        exposure = float(1.0 / ref) if ref > 0 else 1.0
        img_a, _ = render(scene, sensor_a, exposure=exposure)
        img_b, _ = render(scene, sensor_b, exposure=exposure)
        emit(img_a, sensor_a, split, scene_id, exposure, scene, chart)
        emit(img_b, sensor_b, split, scene_id, exposure, scene, chart)

    scene_counter = 0

    def next_scene(split_tag: str) -> tuple[SpectralScene, str]:
        nonlocal scene_counter
        rng = np.random.default_rng([seed, scene_counter])
        sid = f"scene{scene_counter:04d}"
        scene_counter += 1
        return random_scene(lam, h, w, rng,
                            temperature_range=temperature_range), sid

    chart_illum = blackbody_illuminant(lam, CHART_TEMPERATURE)
    cscene, cpatches = chart_scene(lam, chart_illum)

    for split, sensor in (("unpaired_A", sensor_a), ("unpaired_B", sensor_b)):
        for _ in range(n_scenes):
            scene, sid = next_scene(split)
            img, exposure = render(scene, sensor)
            emit(img, sensor, split, sid, exposure, scene, None)
        img, exposure = render(cscene, sensor)
        emit(img, sensor, split, "chart", exposure, cscene, cpatches)

    for split, count in (("anchor", n_anchor), ("test", n_test)):
        for _ in range(count):
            scene, sid = next_scene(split)
            emit_pair(scene, split, sid, None)
        emit_pair(cscene, split, "chart", cpatches)

    manifest = {
        "seed": seed,
        "image_size": [h, w],
        "exposure_percentile": exposure_percentile,
        "temperature_range": [float(t) for t in temperature_range],
        "wavelengths": lam.tolist(),
        "sensor_a": sensor_a.to_dict(),
        "sensor_b": sensor_b.to_dict(),
        "profiles": {
            sensor_a.name: fit_color_profile(sensor_a).tolist(),
            sensor_b.name: fit_color_profile(sensor_b).tolist(),
        },
        "entries": entries,
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def load_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    with open(p) as f:
        return json.load(f)


def manifest_frames(manifest: dict, root, split: str | None = None,
                    camera_id: str | None = None,
                    include_chart: bool = True) -> list[dict]:
    """Filter manifest entries; each result gains a loaded 'image' field."""
    root = Path(root)
    picked = []
    for e in manifest["entries"]:
        if split is not None and e["split"] != split:
            continue
        if camera_id is not None and e["camera_id"] != camera_id:
            continue
        if not include_chart and e["is_chart"]:
            continue
        frame = rawio.load_frame(root / e["path"])
        picked.append({**e, "frame": frame, "image": rawio.normalize(frame)})
    return picked

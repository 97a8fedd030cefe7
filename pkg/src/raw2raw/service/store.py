"""Dataset pairing and annotation persistence behind the HTTP service.

A "pair" is one scene captured by both cameras. Its annotation surface is
the chart capture pair of the same split (chart grid and region patches
both live in chart-frame pixel coordinates); the scene's chart-free frames
are what a fitted map gets applied to.
"""

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .. import rawio
from ..annotations import (AnnotationRecord, AnnotationStatus,
                           homogeneity_check, load_record, save_record)
from ..calibfit import KERNEL_SIZE, Kernel, apply_map, collect_samples, fit_map
from ..errors import MetadataError, Raw2RawError, SingularFitError
from ..synthcam import load_manifest

ANNOTATION_DIR = "annotations"


@dataclass(frozen=True)
class ImageRef:
    image_id: str
    path: str
    camera_id: str
    split: str
    scene_id: str
    is_chart: bool


@dataclass
class PairEntry:
    pair_id: str
    split: str
    free_a: ImageRef | None = None
    free_b: ImageRef | None = None
    chart_a: ImageRef | None = None
    chart_b: ImageRef | None = None

    @property
    def surface_a(self) -> ImageRef:
        """Frame that annotations for camera A are drawn on."""
        ref = self.chart_a or self.free_a
        if ref is None:
            raise MetadataError(f"pair {self.pair_id} has no camera-A frame")
        return ref

    @property
    def surface_b(self) -> ImageRef:
        ref = self.chart_b or self.free_b
        if ref is None:
            raise MetadataError(f"pair {self.pair_id} has no camera-B frame")
        return ref


@dataclass
class FitResult:
    residual_rms: float
    out_of_gamut_fraction: float
    n_samples: int
    kernel: str = Kernel.POLY11.value
    record_hash: str = ""
    committed: bool = False

    def to_dict(self) -> dict:
        return {"residual_rms": self.residual_rms,
                "out_of_gamut_fraction": self.out_of_gamut_fraction,
                "n_samples": self.n_samples, "kernel": self.kernel,
                "record_hash": self.record_hash, "committed": self.committed}

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(residual_rms=float(d["residual_rms"]),
                   out_of_gamut_fraction=float(d["out_of_gamut_fraction"]),
                   n_samples=int(d["n_samples"]),
                   kernel=str(d.get("kernel", Kernel.POLY11.value)),
                   record_hash=str(d.get("record_hash", "")),
                   committed=bool(d.get("committed", False)))


def record_hash(record: AnnotationRecord) -> str:
    blob = json.dumps(record.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


class DatasetStore:
    """Manifest-backed pair index plus per-pair annotation state.

    Mutations to one pair are serialized by a per-pair lock; reads hand out
    snapshots without locking.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.manifest = load_manifest(self.root)
        self._pairs: dict[str, PairEntry] = {}
        self._images: dict[str, ImageRef] = {}
        self._camera_a = self.manifest["sensor_a"]["name"]
        self._camera_b = self.manifest["sensor_b"]["name"]
        self._build_index()
        self._cache: dict[str, rawio.RawFrame] = {}
        self._cache_lock = threading.Lock()
        self._pair_locks: dict[str, threading.Lock] = {}
        self._locks_lock = threading.Lock()
        (self.root / ANNOTATION_DIR).mkdir(exist_ok=True)

    # -- index ------------------------------------------------------------

    def _build_index(self) -> None:
        charts: dict[tuple[str, str], ImageRef] = {}
        for e in self.manifest["entries"]:
            ref = ImageRef(
                image_id=f"{e['split']}__{e['scene_id']}__{e['camera_id']}",
                path=e["path"], camera_id=e["camera_id"], split=e["split"],
                scene_id=e["scene_id"], is_chart=bool(e["is_chart"]))
            self._images[ref.image_id] = ref
            if ref.is_chart:
                charts[(ref.split, ref.camera_id)] = ref
                continue
            if ref.split not in ("anchor", "test"):
                continue
            pair = self._pairs.setdefault(
                ref.scene_id, PairEntry(pair_id=ref.scene_id, split=ref.split))
            if ref.camera_id == self._camera_a:
                pair.free_a = ref
            elif ref.camera_id == self._camera_b:
                pair.free_b = ref
        for pair in self._pairs.values():
            pair.chart_a = charts.get((pair.split, self._camera_a))
            pair.chart_b = charts.get((pair.split, self._camera_b))

    @property
    def camera_a(self) -> str:
        return self._camera_a

    @property
    def camera_b(self) -> str:
        return self._camera_b

    def pairs(self) -> list[PairEntry]:
        return [self._pairs[k] for k in sorted(self._pairs)]

    def pair(self, pair_id: str) -> PairEntry | None:
        return self._pairs.get(pair_id)

    def image_ref(self, image_id: str) -> ImageRef | None:
        return self._images.get(image_id)

    def frame(self, image_id: str) -> rawio.RawFrame:
        ref = self._images[image_id]
        with self._cache_lock:
            if image_id not in self._cache:
                self._cache[image_id] = rawio.load_frame(self.root / ref.path)
            return self._cache[image_id]

    def image(self, image_id: str) -> rawio.PackedImage:
        return rawio.normalize(self.frame(image_id))

    # -- annotation state ---------------------------------------------------

    def lock(self, pair_id: str) -> threading.Lock:
        with self._locks_lock:
            return self._pair_locks.setdefault(pair_id, threading.Lock())

    def record_path(self, pair_id: str) -> Path:
        return self.root / ANNOTATION_DIR / f"{pair_id}.json"

    def fit_path(self, pair_id: str) -> Path:
        return self.root / ANNOTATION_DIR / f"{pair_id}.fit.json"

    def load_record(self, pair_id: str) -> AnnotationRecord:
        path = self.record_path(pair_id)
        if path.exists():
            return load_record(path)
        return AnnotationRecord(pair_id=pair_id)

    def save_record(self, record: AnnotationRecord) -> None:
        save_record(record, self.record_path(record.pair_id))

    def load_fit(self, pair_id: str) -> FitResult | None:
        path = self.fit_path(pair_id)
        if not path.exists():
            return None
        with open(path) as f:
            return FitResult.from_dict(json.load(f))

    def save_fit(self, pair_id: str, fit: FitResult) -> None:
        with open(self.fit_path(pair_id), "w") as f:
            json.dump(fit.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")

    # -- validation and fitting ---------------------------------------------

    def validate_record(self, pair: PairEntry,
                        record: AnnotationRecord) -> None:
        img_a = self.image(pair.surface_a.image_id)
        img_b = self.image(pair.surface_b.image_id)
        record.validate(img_a.data.shape[:2], img_b.data.shape[:2])

    def failed_homogeneity(self, pair: PairEntry,
                           record: AnnotationRecord) -> list[dict]:
        """Region patches whose pixels are not homogeneous enough to act
        as color correspondences. Chart patches come from the fixed grid
        and are exempt."""
        img_a = self.image(pair.surface_a.image_id)
        img_b = self.image(pair.surface_b.image_id)
        failures = []
        for idx, region in enumerate(record.regions):
            for side, img in (("patch_a", img_a), ("patch_b", img_b)):
                check = homogeneity_check(img, region[side])
                if not check["pass"]:
                    failures.append({"region": idx, "side": side,
                                     "cv": check["cv"]})
        return failures

    def fit_record(self, pair: PairEntry, record: AnnotationRecord,
                   committed: bool = False) -> FitResult:
        """POLY11 draft fit over the record's samples; raises
        SingularFitError when fewer than 11 usable samples exist."""
        samples = collect_samples(
            self.image(pair.surface_a.image_id),
            self.image(pair.surface_b.image_id),
            {"chart_a": record.chart_a, "chart_b": record.chart_b,
             "regions": record.regions})
        if len(samples) < KERNEL_SIZE[Kernel.POLY11]:
            raise SingularFitError(
                f"{len(samples)} usable samples < "
                f"{KERNEL_SIZE[Kernel.POLY11]} required for poly11")
        cmap = fit_map(samples, Kernel.POLY11, self._camera_a, self._camera_b)
        target = pair.free_a or pair.surface_a
        _, oog = apply_map(self.image(target.image_id), cmap)
        return FitResult(residual_rms=cmap.fit_residual_rms,
                         out_of_gamut_fraction=oog,
                         n_samples=len(samples),
                         record_hash=record_hash(record),
                         committed=committed)

    def commit(self, pair: PairEntry,
               record: AnnotationRecord) -> tuple[AnnotationRecord, FitResult]:
        """Validate + fit + persist. Committing an identical record twice
        returns the stored result unchanged."""
        record.status = AnnotationStatus.COMMITTED
        digest = record_hash(record)
        stored = self.load_fit(pair.pair_id)
        if stored is not None and stored.committed \
                and stored.record_hash == digest:
            return record, stored
        fit = self.fit_record(pair, record, committed=True)
        self.save_record(record)
        self.save_fit(pair.pair_id, fit)
        return record, fit

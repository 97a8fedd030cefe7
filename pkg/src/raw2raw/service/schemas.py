"""Request and response bodies for the annotation service."""

from pydantic import BaseModel, Field

from ..annotations import AnnotationRecord
from .store import FitResult, ImageRef, PairEntry


class PatchIn(BaseModel):
    x: int
    y: int
    size: int = Field(ge=2)
    label: str | None = None

    def to_record(self) -> dict:
        d = {"x": self.x, "y": self.y, "size": self.size}
        if self.label is not None:
            d["label"] = self.label
        return d


class ChartBody(BaseModel):
    chart_a: list[PatchIn]
    chart_b: list[PatchIn]


class RegionBody(BaseModel):
    patch_a: PatchIn
    patch_b: PatchIn


class ImageOut(BaseModel):
    image_id: str
    camera_id: str
    split: str
    scene_id: str
    is_chart: bool

    @classmethod
    def from_ref(cls, ref: ImageRef) -> "ImageOut":
        return cls(image_id=ref.image_id, camera_id=ref.camera_id,
                   split=ref.split, scene_id=ref.scene_id,
                   is_chart=ref.is_chart)


class RecordOut(BaseModel):
    pair_id: str
    chart_a: list[dict]
    chart_b: list[dict]
    regions: list[dict]
    status: str
    n_samples: int

    @classmethod
    def from_record(cls, record: AnnotationRecord) -> "RecordOut":
        return cls(pair_id=record.pair_id, chart_a=record.chart_a,
                   chart_b=record.chart_b, regions=record.regions,
                   status=record.status.value, n_samples=record.n_samples)


class FitOut(BaseModel):
    residual_rms: float
    out_of_gamut_fraction: float
    n_samples: int

    @classmethod
    def from_fit(cls, fit: FitResult) -> "FitOut":
        return cls(residual_rms=fit.residual_rms,
                   out_of_gamut_fraction=fit.out_of_gamut_fraction,
                   n_samples=fit.n_samples)


class PairSummary(BaseModel):
    pair_id: str
    split: str
    camera_a: str
    camera_b: str
    n_samples: int
    status: str

    @classmethod
    def build(cls, pair: PairEntry, record: AnnotationRecord,
              camera_a: str, camera_b: str) -> "PairSummary":
        return cls(pair_id=pair.pair_id, split=pair.split,
                   camera_a=camera_a, camera_b=camera_b,
                   n_samples=record.n_samples, status=record.status.value)


class PairDetail(BaseModel):
    pair_id: str
    split: str
    images: list[ImageOut]
    annotate_a: str
    annotate_b: str
    record: RecordOut
    fit: FitOut | None = None


class MutationOut(BaseModel):
    """Response to every annotation mutation: the updated record plus the
    live draft-fit residual (null while fewer than 11 samples exist)."""

    record: RecordOut
    fit: FitOut | None = None
    fit_error: str | None = None

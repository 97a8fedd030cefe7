"""HTTP annotation service: browse image pairs, place chart grids and
region patches, and commit records that are fitted server-side."""

import io
import os

import numpy as np
from fastapi import FastAPI, HTTPException, Response

from .. import rawio
from ..annotations import AnnotationStatus
from ..errors import Raw2RawError, SingularFitError
from .schemas import (ChartBody, FitOut, ImageOut, MutationOut, PairDetail,
                      PairSummary, RecordOut, RegionBody)
from .store import DatasetStore, PairEntry

DATA_ROOT_ENV = "RAW2RAW_DATA_ROOT"


def _resolve_root(root) -> str:
    if root is not None:
        return str(root)
    env = os.environ.get(DATA_ROOT_ENV)
    if not env:
        raise Raw2RawError(
            f"no dataset root: pass one or set {DATA_ROOT_ENV}")
    return env


def create_app(root=None) -> FastAPI:
    store = DatasetStore(_resolve_root(root))
    app = FastAPI(title="raw2raw annotation service")
    app.state.store = store

    def get_pair(pair_id: str) -> PairEntry:
        pair = store.pair(pair_id)
        if pair is None:
            raise HTTPException(404, f"unknown pair {pair_id!r}")
        return pair

    def try_fit(pair: PairEntry, record) -> tuple[FitOut | None, str | None]:
        try:
            return FitOut.from_fit(store.fit_record(pair, record)), None
        except SingularFitError as err:
            return None, str(err)

    def check_bounds(pair: PairEntry, record) -> None:
        try:
            store.validate_record(pair, record)
        except Raw2RawError as err:
            raise HTTPException(400, str(err))

    @app.get("/pairs", response_model=list[PairSummary])
    def list_pairs():
        return [PairSummary.build(p, store.load_record(p.pair_id),
                                  store.camera_a, store.camera_b)
                for p in store.pairs()]

    @app.get("/pairs/{pair_id}", response_model=PairDetail)
    def pair_detail(pair_id: str):
        pair = get_pair(pair_id)
        record = store.load_record(pair_id)
        refs = [pair.chart_a, pair.chart_b, pair.free_a, pair.free_b]
        fit = store.load_fit(pair_id)
        return PairDetail(
            pair_id=pair_id, split=pair.split,
            images=[ImageOut.from_ref(r) for r in refs if r is not None],
            annotate_a=pair.surface_a.image_id,
            annotate_b=pair.surface_b.image_id,
            record=RecordOut.from_record(record),
            fit=FitOut.from_fit(fit) if fit is not None else None)

    @app.get("/images/{image_id}/preview")
    def image_preview(image_id: str):
        if store.image_ref(image_id) is None:
            raise HTTPException(404, f"unknown image {image_id!r}")
        from PIL import Image

        preview = rawio.render_preview(store.image(image_id))
        data = np.clip(preview.data * 255.0 + 0.5, 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(data).save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.post("/pairs/{pair_id}/chart", response_model=MutationOut)
    def set_chart(pair_id: str, body: ChartBody):
        pair = get_pair(pair_id)
        with store.lock(pair_id):
            record = store.load_record(pair_id)
            record.chart_a = [p.to_record() for p in body.chart_a]
            record.chart_b = [p.to_record() for p in body.chart_b]
            record.status = AnnotationStatus.DRAFT
            check_bounds(pair, record)
            store.save_record(record)
            fit, fit_error = try_fit(pair, record)
        return MutationOut(record=RecordOut.from_record(record), fit=fit,
                           fit_error=fit_error)

    @app.post("/pairs/{pair_id}/regions", response_model=MutationOut)
    def add_region(pair_id: str, body: RegionBody):
        pair = get_pair(pair_id)
        with store.lock(pair_id):
            record = store.load_record(pair_id)
            record.regions.append({"patch_a": body.patch_a.to_record(),
                                   "patch_b": body.patch_b.to_record()})
            record.status = AnnotationStatus.DRAFT
            check_bounds(pair, record)
            failures = store.failed_homogeneity(pair, record)
            if any(f["region"] == len(record.regions) - 1 for f in failures):
                raise HTTPException(
                    400, {"message": "region patch not homogeneous",
                          "failures": failures})
            store.save_record(record)
            fit, fit_error = try_fit(pair, record)
        return MutationOut(record=RecordOut.from_record(record), fit=fit,
                           fit_error=fit_error)

    @app.delete("/pairs/{pair_id}/regions/{index}", response_model=MutationOut)
    def delete_region(pair_id: str, index: int):
        pair = get_pair(pair_id)
        with store.lock(pair_id):
            record = store.load_record(pair_id)
            if not 0 <= index < len(record.regions):
                raise HTTPException(404, f"no region at index {index}")
            del record.regions[index]
            record.status = AnnotationStatus.DRAFT
            store.save_record(record)
            fit, fit_error = try_fit(pair, record)
        return MutationOut(record=RecordOut.from_record(record), fit=fit,
                           fit_error=fit_error)

    @app.post("/pairs/{pair_id}/commit", response_model=MutationOut)
    def commit(pair_id: str):
        pair = get_pair(pair_id)
        with store.lock(pair_id):
            record = store.load_record(pair_id)
            check_bounds(pair, record)
            failures = store.failed_homogeneity(pair, record)
            if failures:
                raise HTTPException(
                    400, {"message": "inhomogeneous region patches",
                          "failures": failures})
            try:
                record, fit = store.commit(pair, record)
            except SingularFitError as err:
                raise HTTPException(422, str(err))
        return MutationOut(record=RecordOut.from_record(record),
                           fit=FitOut.from_fit(fit))

    @app.get("/pairs/{pair_id}/fit", response_model=FitOut)
    def pair_fit(pair_id: str):
        pair = get_pair(pair_id)
        stored = store.load_fit(pair_id)
        if stored is not None:
            return FitOut.from_fit(stored)
        record = store.load_record(pair_id)
        try:
            return FitOut.from_fit(store.fit_record(pair, record))
        except SingularFitError as err:
            raise HTTPException(404, f"no fit available: {err}")

    return app

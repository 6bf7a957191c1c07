"""HTTP facade for interactive sessions.

Thin JSON layer over the session engine: create a session, submit gallery
selections, export records, list the population. All optimization state
lives in the engine; per-session mutations are strictly serialized (a busy
or stale submit gets 409) and reads never block selections. Thumbnails are
data-URI PNGs embedded in the plane payload, one round trip per iteration.
"""

import base64
import io
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel

from .acquisition import DecaySchedule, MaximizerOptions
from .errors import ConfigurationError, InvalidInputError, InvalidStateError, StoreError
from .imaging import PARAM_COUNT, downscale, render, thumbnail_grid
from .preference import FitOptions
from .session import (
    AWAITING,
    EngineOptions,
    METHODS,
    SessionConfig,
    export_session,
    is_meta,
    start_session,
    submit_selection,
)
from .store import load_gallery, session_record_bytes

SCHEMA_VERSION = 1

# Deployment decay setting; interactive sessions hand off to the personal
# model from iteration d1+1 on.
DEFAULT_DECAY = DecaySchedule(3, 8.0)
DEFAULT_MAX_ITERATIONS = 15

# Later selections refit on hundreds of points; keep the interactive loop
# inside its latency budget with trimmed warm-refit and maximizer rounds.
SERVICE_OPTIONS = EngineOptions(
    maximizer=MaximizerOptions(starts=40, iters=50, cull=((4, 8), (10, 2))),
    refit=FitOptions(restarts=1, maxiter=4, inner_tol=1e-7),
    lookahead_fit=FitOptions(restarts=1, maxiter=2, inner_tol=1e-7),
)


class CreateSessionRequest(BaseModel):
    method: str
    theme: str = ""
    image_id: str
    seed: int = 0
    gallery_filter: str = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS


class SelectRequest(BaseModel):
    grid_index: int
    satisfied: bool = False
    request_token: str = None


@dataclass
class _Session:
    id: str
    state: object
    image: np.ndarray
    theme: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_token: str = None
    last_response: dict = None


def _png_data_uri(raster):
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(raster).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(images_dir, gallery_dir=None, config=None):
    """FastAPI app bound to an image directory and optional model gallery."""
    config = config or {}
    app = FastAPI(title="prefopt session service")
    images_dir = Path(images_dir)
    sessions = {}

    decay = DecaySchedule(
        int(config.get("decay", {}).get("d1", DEFAULT_DECAY.d1)),
        float(config.get("decay", {}).get("d2", DEFAULT_DECAY.d2)),
    )
    max_cfg = config.get("maximizer", {})
    options = EngineOptions(
        maximizer=MaximizerOptions(
            starts=int(max_cfg.get("starts", SERVICE_OPTIONS.maximizer.starts)),
            iters=int(max_cfg.get("iters", SERVICE_OPTIONS.maximizer.iters)),
            cull=SERVICE_OPTIONS.maximizer.cull,
        ),
        refit=SERVICE_OPTIONS.refit,
        lookahead_fit=SERVICE_OPTIONS.lookahead_fit,
        two_step_mode=config.get("acquisition", {}).get("two_step", {}).get("mode", "augment"),
        mc_samples=int(config.get("acquisition", {}).get("two_step", {}).get("mc_samples", 10)),
    )

    def _image_ids():
        return sorted(p.stem for p in images_dir.glob("*.png"))

    def _load_image(image_id):
        path = images_dir / f"{image_id}.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        from PIL import Image

        return np.asarray(Image.open(path).convert("RGB"))

    def _load_gallery_for(request):
        if not is_meta(request.method):
            return None
        if gallery_dir is None:
            raise HTTPException(status_code=409, detail="no population gallery configured for meta methods")
        try:
            gallery = load_gallery(gallery_dir, expected_dimension=PARAM_COUNT)
        except StoreError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        if request.gallery_filter:
            keep = [i for i, t in enumerate(gallery.tags) if request.gallery_filter in t["theme"]]
            if not keep:
                raise HTTPException(status_code=409, detail=f"gallery filter {request.gallery_filter!r} matches no models")
            from .acquisition import PopulationGallery

            sub = PopulationGallery(
                models=tuple(gallery.models[i] for i in keep),
                weights=np.ones(len(keep)),
                source_labels=tuple(gallery.source_labels[i] for i in keep),
            )
            sub.tags = tuple(gallery.tags[i] for i in keep)
            gallery = sub
        return gallery

    def _plane_payload(session, plane):
        thumbs = thumbnail_grid(session.image, plane)
        return {
            "candidates": [
                {
                    "grid_index": i,
                    "params": [float(v) for v in plane.grid[i]],
                    "thumbnail": _png_data_uri(thumbs[i]),
                }
                for i in range(len(plane.grid))
            ],
            "center_index": 12,
        }

    def _resource(session, plane):
        state = session.state
        payload = {
            "schema_version": SCHEMA_VERSION,
            "id": session.id,
            "method": state.config.method,
            "theme": session.theme,
            "status": state.status,
            "iteration": state.iteration,
            "max_iterations": state.config.max_iterations,
            "least_iteration": state.least_iteration,
        }
        if plane is not None:
            payload["plane"] = _plane_payload(session, plane)
        return payload

    @app.get("/api/images")
    def list_images():
        return {"images": _image_ids()}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        raster = downscale(_load_image(image_id))
        return {"id": image_id, "preview": _png_data_uri(raster)}

    @app.get("/api/population")
    def population():
        if gallery_dir is None:
            return {"models": []}
        try:
            gallery = load_gallery(gallery_dir, expected_dimension=PARAM_COUNT)
        except StoreError:
            return {"models": []}
        return {
            "models": [
                {
                    "id": t["id"],
                    "theme": t["theme"],
                    "method": t["method"],
                    "plane_strategy": t["plane_strategy"],
                    "dimension": t["dimension"],
                }
                for t in gallery.tags
            ]
        }

    @app.post("/api/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        if request.method not in METHODS:
            raise HTTPException(status_code=400, detail=f"unknown method {request.method!r}")
        image = _load_image(request.image_id)
        gallery = _load_gallery_for(request)
        try:
            session_config = SessionConfig(
                dimension=PARAM_COUNT,
                method=request.method,
                max_iterations=request.max_iterations,
                decay=decay,
                seed=request.seed,
                gallery_ref=str(gallery_dir) if gallery is not None else None,
                theme=request.theme,
            )
            state, plane = start_session(session_config, gallery=gallery, options=options)
        except ConfigurationError as exc:
            code = 409 if "gallery" in str(exc) else 400
            raise HTTPException(status_code=code, detail=str(exc))
        session_id = secrets.token_hex(8)
        session = _Session(id=session_id, state=state, image=downscale(image), theme=request.theme)
        sessions[session_id] = session
        return _resource(session, plane)

    def _get_session(session_id):
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    @app.post("/api/sessions/{session_id}/select")
    def select(session_id: str, request: SelectRequest):
        session = _get_session(session_id)
        if not 0 <= request.grid_index < 25:
            raise HTTPException(status_code=422, detail="grid_index must be in [0, 24]")
        if not session.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a selection for this session is already in flight")
        try:
            if request.request_token is not None and request.request_token == session.last_token:
                return session.last_response
            try:
                _, plane = submit_selection(session.state, request.grid_index, request.satisfied)
            except InvalidStateError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except InvalidInputError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            response = _resource(session, plane)
            session.last_token = request.request_token
            session.last_response = response
            return response
        finally:
            session.lock.release()

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        session = _get_session(session_id)
        plane = session.state.plane if session.state.status == AWAITING else None
        return _resource(session, plane)

    @app.get("/api/sessions/{session_id}/export")
    def export(session_id: str):
        session = _get_session(session_id)
        record = export_session(session.state)
        data = session_record_bytes(record)
        return Response(
            content=data,
            media_type="application/json",
            headers={"Content-Disposition": f'attachment; filename="session-{session_id}.json"'},
        )

    @app.get("/api/sessions/{session_id}/result")
    def result(session_id: str):
        session = _get_session(session_id)
        state = session.state
        if state.best_so_far is None:
            raise HTTPException(status_code=409, detail="no selection recorded yet")
        raster = render(session.image, state.best_so_far)
        return {
            "id": session_id,
            "status": state.status,
            "least_iteration": state.least_iteration,
            "params": [float(v) for v in state.best_so_far],
            "image": _png_data_uri(raster),
        }

    app.state.sessions = sessions
    return app

"""HTTP service for the review loop.

Exposes matches, uploads, detection runs, events, and warning resolution.
Field names in responses match the module export formats, so everything the
API returns can be fed back through the corresponding readers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field
from starlette.datastructures import UploadFile as FormUploadFile

from . import forest
from .detector import Thresholds, detect, warning_to_doc
from .errors import ConflictError, FormatError, NotFoundError
from .features import extract_features, make_windows
from .ingest import DeviceConfig, parse_sensor_file, synchronize
from .mining import build_entries
from .store import (
    AnnotationStore,
    activity_row_to_doc,
    episode_to_doc,
    match_from_doc,
    match_to_doc,
    parse_episode_file,
    Episode,
)


@dataclass
class ServiceConfig:
    """Pipeline parameters the service applies to uploads and detection."""

    model_path: str | None = None
    window_duration_s: float = 5.0
    window_overlap: float = 0.0
    entry_window_s: float = 10.0
    entry_step_s: float = 5.0
    entry_scope: str = "per-player"
    ui_dir: str | None = None


class ThresholdsBody(BaseModel):
    min_support: float | None = Field(None, ge=0.0, le=1.0)
    min_confidence: float | None = Field(None, ge=0.0, le=1.0)
    min_conviction: float | None = Field(None, ge=0.0)

    def to_thresholds(self) -> Thresholds:
        return Thresholds(
            min_support=self.min_support,
            min_confidence=self.min_confidence,
            min_conviction=self.min_conviction,
        )


class DetectBody(BaseModel):
    thresholds: ThresholdsBody = Field(default_factory=ThresholdsBody)
    window_s: float | None = Field(None, gt=0.0)
    step_s: float | None = Field(None, gt=0.0)
    scope: str | None = None


class ResolutionBody(BaseModel):
    action: str
    corrected_description: str | None = None


class DeviceUploadConfig(BaseModel):
    device_slot: str
    column_map: dict[str, str]
    sample_rate_hz: float = Field(gt=0.0)
    power_on_wall_time: float
    time_column: str = "time"
    time_mode: str = "seconds"
    file: str


class SensorUploadConfig(BaseModel):
    player: str
    devices: list[DeviceUploadConfig]


def create_app(store: AnnotationStore, config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="footlab", docs_url=None, redoc_url=None)
    model = None
    if config.model_path:
        model = forest.deserialize(Path(config.model_path).read_bytes())

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        fields = []
        for err in exc.errors():
            if err.get("type") == "json_invalid":
                return JSONResponse(status_code=400, content={"detail": "malformed body"})
            loc = [str(p) for p in err.get("loc", []) if p not in ("body",)]
            fields.append({"field": ".".join(loc), "message": err.get("msg", "invalid")})
        return JSONResponse(status_code=422, content={"detail": fields})

    @app.exception_handler(NotFoundError)
    async def not_found_handler(request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(ConflictError)
    async def conflict_handler(request: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(FormatError)
    async def format_handler(request: Request, exc: FormatError):
        return JSONResponse(
            status_code=422,
            content={"detail": [{"field": "file", "message": str(exc)}]},
        )

    @app.exception_handler(ValueError)
    async def value_handler(request: Request, exc: ValueError):
        return JSONResponse(
            status_code=422, content={"detail": [{"field": "", "message": str(exc)}]}
        )

    # -- matches ---------------------------------------------------------

    @app.get("/api/matches")
    def list_matches():
        return [match_to_doc(m) for m in store.list_matches()]

    @app.post("/api/matches")
    async def create_match(request: Request):
        try:
            doc = json.loads(await request.body())
        except ValueError:
            return JSONResponse(status_code=400, content={"detail": "malformed body"})
        meta = match_from_doc(doc)
        store.upsert_match(meta)
        return match_to_doc(store.get_match(meta.match_id))

    @app.get("/api/matches/{match_id}")
    def get_match(match_id: str):
        return match_to_doc(store.get_match(match_id))

    # -- uploads ----------------------------------------------------------

    @app.post("/api/matches/{match_id}/annotations")
    async def upload_annotations(match_id: str, file: UploadFile):
        store.get_match(match_id)
        episodes = parse_episode_file(await file.read())
        count = store.add_episodes(match_id, episodes)
        return {"episodes_added": count}

    @app.post("/api/matches/{match_id}/sensor-data")
    async def upload_sensor_data(match_id: str, request: Request):
        """Device files + a `config` part; runs HAR and aggregates labels."""
        meta = store.get_match(match_id)
        if model is None:
            raise ValueError("service started without a model file; sensor uploads disabled")
        if not meta.periods:
            raise ValueError("match has no periods; upload match metadata first")
        form = await request.form()
        raw_config = form.get("config")
        if raw_config is None:
            raise ValueError("missing config part")
        upload = SensorUploadConfig.model_validate_json(
            raw_config if isinstance(raw_config, str) else await raw_config.read()
        )
        files = {f.filename: f for f in form.getlist("files") if isinstance(f, FormUploadFile)}

        readings = []
        diagnostics = {"dropped": 0}
        for dev in upload.devices:
            if dev.file not in files:
                raise ValueError(f"device file {dev.file!r} not among uploads")
            cfg = DeviceConfig(
                device_slot=dev.device_slot,
                column_map=dev.column_map,
                sample_rate_hz=dev.sample_rate_hz,
                power_on_wall_time=dev.power_on_wall_time,
                time_column=dev.time_column,
                time_mode=dev.time_mode,
            )
            raw = parse_sensor_file(await files[dev.file].read(), cfg)
            synced, diag = synchronize(raw, cfg, meta.periods, player_id=upload.player)
            readings.extend(synced)
            diagnostics["dropped"] += diag.dropped

        devices = [d.device_slot for d in upload.devices]
        windows = make_windows(
            readings,
            duration_s=config.window_duration_s,
            overlap_fraction=config.window_overlap,
            devices=devices,
        )
        rows_added = 0
        by_period: dict[int, list] = {}
        for window in windows:
            vec = extract_features(window)
            pred = forest.predict(model, vec)
            by_period.setdefault(window.period_id, []).append(pred)
        for period_id, preds in sorted(by_period.items()):
            rows = store.aggregate_labels(match_id, upload.player, period_id, preds)
            rows_added += len(rows)
        return {
            "windows": len(windows),
            "activity_rows": rows_added,
            "dropped_readings": diagnostics["dropped"],
        }

    # -- detection ----------------------------------------------------------

    @app.post("/api/matches/{match_id}/detect")
    def run_detect(match_id: str, body: DetectBody):
        store.get_match(match_id)
        rows = [*store.list_episodes(match_id), *store.list_activity_rows(match_id)]
        entries = build_entries(
            rows,
            window_s=body.window_s or config.entry_window_s,
            step_s=body.step_s or config.entry_step_s,
            scope=body.scope or config.entry_scope,
        ) if rows else []
        rules = store.list_rules()
        warnings = detect(entries, rules, body.thresholds.to_thresholds())
        store.store_warnings(match_id, warnings)
        return [warning_to_doc(w) for w in store.list_warnings(match_id, state="open")]

    @app.get("/api/matches/{match_id}/warnings")
    def list_warnings(match_id: str, state: str | None = None):
        return [warning_to_doc(w) for w in store.list_warnings(match_id, state=state)]

    @app.get("/api/matches/{match_id}/events")
    def list_events(match_id: str, player: str | None = None, period: int | None = None):
        events = store.query_events(match_id, period_id=period, player=player)
        return [
            episode_to_doc(e) if isinstance(e, Episode) else activity_row_to_doc(e)
            for e in events
        ]

    @app.post("/api/warnings/{warning_id}/resolution")
    def resolve(warning_id: int, body: ResolutionBody):
        warning = store.resolve_warning(
            warning_id, body.action, corrected_description=body.corrected_description
        )
        return warning_to_doc(warning)

    ui_dir = config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app

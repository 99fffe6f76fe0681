"""HTTP audit API backing the manual validation workflow.

Endpoints (JSON bodies, errors as {"code": int, "message": str}):
    GET  /tasks                 task list with completion flags
    GET  /tasks/{id}            one task (predictions withheld)
    GET  /tasks/{id}/image      the matched street-view image
    POST /annotations           submit floors/function/age_bin/severity
    GET  /stats                 live agreement statistics

Annotations append to a JSONL log (never rewritten); statistics recompute
on demand from the latest annotation per (task, auditor):
    height_r2            annotated floors x floor height vs predicted (R^2)
    function_accuracy    share of annotations matching the predicted class
    age_agreement        share with matching age bin
    quality_severity_r2  squared Pearson correlation, severity vs q_total
"""
from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse

from ..indicative import AGE_BINS, FUNCTION_NAMES, age_bin, load_svi_csv
from .config import PipelineConfig
from .matching import AuditTask, match_svi_to_buildings
from .vectorio import load_vector


@dataclass(eq=False)
class AuditState:
    cfg: PipelineConfig
    tasks: list[AuditTask]
    predictions: dict  # building_id -> {height, func, age, age_bin, q_total}
    outlines: dict     # building_id -> exterior ring [[x, y], ...] local meters
    image_dir: str
    log_path: str
    lock: threading.Lock = field(default_factory=threading.Lock)
    annotations: list[dict] = field(default_factory=list)

    def task_by_id(self, task_id: int) -> Optional[AuditTask]:
        if 0 <= task_id < len(self.tasks):
            return self.tasks[task_id]
        return None

    def append_annotation(self, record: dict) -> int:
        with self.lock:
            record = dict(record)
            record["annotation_id"] = len(self.annotations)
            record["timestamp"] = time.time()
            line = json.dumps(record, sort_keys=True)
            with open(self.log_path, "a") as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
            self.annotations.append(record)
            return record["annotation_id"]

    def completed_task_ids(self) -> set:
        return {a["task_id"] for a in self.annotations}

    def latest_annotations(self) -> list[dict]:
        latest: dict[tuple, dict] = {}
        for a in self.annotations:
            latest[(a["task_id"], a["auditor_id"])] = a
        return [latest[k] for k in sorted(latest)]


def build_audit_state(cfg: PipelineConfig) -> AuditState:
    """Load predictions and street views, match tasks, reopen the log."""
    pred_path = os.path.join(cfg.workdir, "predict", "buildings_attributed.geojson")
    if not os.path.exists(pred_path):
        raise FileNotFoundError(
            f"missing {pred_path!r}: run the pipeline through 'evaluate' first")
    feats = load_vector(pred_path, cfg.origin_lon, cfg.origin_lat)
    buildings = [(fid, geom) for fid, geom, _ in feats]
    predictions = {}
    outlines = {}
    for fid, geom, props in feats:
        predictions[fid] = {
            "height": props.get("height"),
            "func": props.get("func"),
            "age": props.get("age"),
            "age_bin": props.get("age_bin"),
            "q_total": props.get("q_total"),
        }
        outlines[fid] = [[round(float(x), 3), round(float(y), 3)]
                         for x, y in geom.exterior]
    observations = load_svi_csv(os.path.join(cfg.workdir, "synth", "svi.csv"))
    tasks = match_svi_to_buildings(buildings, observations, cfg.svi_match_radius)
    log_path = os.path.join(cfg.workdir, "audit", "annotations.jsonl")
    os.makedirs(os.path.dirname(log_path), exist_ok=True)
    state = AuditState(
        cfg=cfg, tasks=tasks, predictions=predictions, outlines=outlines,
        image_dir=os.path.join(cfg.workdir, "synth", "svi_images"),
        log_path=log_path,
    )
    if os.path.exists(log_path):
        with open(log_path) as f:
            for line in f:
                line = line.strip()
                if line:
                    state.annotations.append(json.loads(line))
    return state


def compute_stats(state: AuditState) -> dict:
    """The four agreement statistics from the annotation log; values are
    null (with low_n flagged) until enough data exists."""
    latest = state.latest_annotations()
    n = len(latest)
    cfg = state.cfg
    out = {
        "n_annotations": n,
        "n_tasks": len(state.tasks),
        "n_tasks_completed": len(state.completed_task_ids()),
        "low_n": n < cfg.low_n_threshold,
        "height_r2": None,
        "function_accuracy": None,
        "age_agreement": None,
        "quality_severity_r2": None,
    }
    if n == 0:
        return out
    heights_true, heights_pred = [], []
    fn_hits, fn_total = 0, 0
    age_hits, age_total = 0, 0
    sev, q_pred = [], []
    for a in latest:
        task = state.task_by_id(a["task_id"])
        if task is None:
            continue
        pred = state.predictions.get(task.building_id, {})
        if pred.get("height") is not None:
            heights_true.append(a["floors"] * cfg.floor_height)
            heights_pred.append(pred["height"])
        if pred.get("func") is not None:
            fn_total += 1
            fn_hits += int(a["function"] == pred["func"])
        if pred.get("age") is not None:
            age_total += 1
            age_hits += int(a["age_bin"] == age_bin(pred["age"]))
        if pred.get("q_total") is not None:
            sev.append(float(a["severity"]))
            q_pred.append(float(pred["q_total"]))
    if len(heights_true) >= 2:
        yt = np.asarray(heights_true)
        yp = np.asarray(heights_pred)
        ss_tot = float(np.sum((yt - yt.mean()) ** 2))
        if ss_tot > 0:
            out["height_r2"] = 1.0 - float(np.sum((yt - yp) ** 2)) / ss_tot
    if fn_total:
        out["function_accuracy"] = fn_hits / fn_total
    if age_total:
        out["age_agreement"] = age_hits / age_total
    if len(sev) >= 2 and np.std(sev) > 0 and np.std(q_pred) > 0:
        r = float(np.corrcoef(sev, q_pred)[0, 1])
        out["quality_severity_r2"] = r * r
    return out


def create_app(state: AuditState, ui_dir: Optional[str] = None):
    """FastAPI application over an AuditState."""
    app = FastAPI(title="geoattrib audit", version="1")

    @app.middleware("http")
    async def cors(request: Request, call_next):
        if request.method == "OPTIONS":
            response = JSONResponse({})
        else:
            response = await call_next(request)
        response.headers["Access-Control-Allow-Origin"] = "*"
        response.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS"
        response.headers["Access-Control-Allow-Headers"] = "Content-Type"
        return response

    def error(code: int, message: str) -> JSONResponse:
        return JSONResponse({"code": code, "message": message}, status_code=code)

    @app.get("/tasks")
    def list_tasks():
        done = state.completed_task_ids()
        return [{
            "id": t.task_id,
            "building_id": t.building_id,
            "side": t.side,
            "completed": t.task_id in done,
        } for t in state.tasks]

    @app.get("/tasks/{task_id}")
    def get_task(task_id: int):
        t = state.task_by_id(task_id)
        if t is None:
            return error(404, f"unknown task id {task_id}")
        return {
            "id": t.task_id,
            "building_id": t.building_id,
            "side": t.side,
            "heading_deg": t.heading_deg,
            "svi_point": [t.svi_point.x, t.svi_point.y],
            "observation_point": [t.observation_point.x, t.observation_point.y],
            "outline": state.outlines.get(t.building_id, []),
            "image_url": f"/tasks/{t.task_id}/image",
            "image_year": t.image_year,
        }

    @app.get("/tasks/{task_id}/image")
    def get_image(task_id: int):
        t = state.task_by_id(task_id)
        if t is None:
            return error(404, f"unknown task id {task_id}")
        path = os.path.join(state.image_dir, f"{t.point_id}.png")
        if not os.path.exists(path):
            return error(404, f"no image for task {task_id}")
        return FileResponse(path, media_type="image/png")

    @app.post("/annotations")
    async def submit(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error(400, "body must be JSON")
        problems = _validate_annotation(state, body)
        if problems:
            code = 404 if problems.startswith("unknown task") else 422
            return error(code, problems)
        record = {
            "task_id": int(body["task_id"]),
            "auditor_id": str(body["auditor_id"]),
            "floors": int(body["floors"]),
            "function": body["function"],
            "age_bin": body["age_bin"],
            "severity": int(body["severity"]),
        }
        annotation_id = state.append_annotation(record)
        task = state.task_by_id(record["task_id"])
        return {
            "ok": True,
            "annotation_id": annotation_id,
            "predictions": state.predictions.get(task.building_id, {}),
        }

    @app.get("/stats")
    def stats():
        return compute_stats(state)

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _validate_annotation(state: AuditState, body) -> str:
    if not isinstance(body, dict):
        return "body must be a JSON object"
    for key in ("task_id", "auditor_id", "floors", "function", "age_bin", "severity"):
        if key not in body:
            return f"missing field {key!r}"
    try:
        task_id = int(body["task_id"])
    except (TypeError, ValueError):
        return "task_id must be an integer"
    if state.task_by_id(task_id) is None:
        return f"unknown task id {task_id}"
    if not str(body["auditor_id"]).strip():
        return "auditor_id must be non-empty"
    try:
        floors = int(body["floors"])
    except (TypeError, ValueError):
        return "floors must be an integer"
    if floors < 1:
        return "floors must be >= 1"
    if body["function"] not in FUNCTION_NAMES:
        return f"function must be one of {FUNCTION_NAMES}"
    if body["age_bin"] not in AGE_BINS:
        return f"age_bin must be one of {AGE_BINS}"
    try:
        severity = int(body["severity"])
    except (TypeError, ValueError):
        return "severity must be an integer"
    if not 0 <= severity <= 6:
        return "severity must be in [0, 6]"
    return ""


def serve(cfg: PipelineConfig, host: Optional[str] = None, port: Optional[int] = None,
          ui_dir: Optional[str] = None) -> None:
    import uvicorn

    state = build_audit_state(cfg)
    app = create_app(state, ui_dir=ui_dir)
    uvicorn.run(app, host=host or cfg.audit_host, port=port or cfg.audit_port,
                log_level="warning")

"""HTTP job service for generation, editing, and region fill.

Jobs are validated synchronously, persisted as one JSON file each, and
executed FIFO on a bounded thread pool over a shared immutable
checkpoint. Outputs are PNG blobs on disk; a restart re-queues anything
that was in flight, and re-execution overwrites outputs idempotently
because sampling is deterministic per (seed, payload, checkpoint).
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .checkpoint import Checkpoint, load_checkpoint
from .data import extract_sketch_stroke
from .guidance import GuidanceScales
from .images import ImageFormatError, decode_png, encode_png
from .realism import RealismConfig
from .sampler import (
    EditRequest,
    default_refine_cutoff,
    local_edit,
    region_fill,
    sample,
)
from .schedule import NoiseSchedule, make_linear_schedule

VALID_KINDS = ("generate", "edit", "fill")
DEFAULT_QUEUE_LIMIT = 64
WHITE_BYTE_TOLERANCE = 2


class ValidationError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass
class JobRecord:
    id: str
    kind: str
    payload: dict
    status: str = "queued"
    created: float = 0.0
    finished: float | None = None
    output_ref: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "JobRecord":
        return cls(**data)


class JobStore:
    """One JSON file per job plus a PNG blob directory.

    Records are written atomically (temp file + rename) and writes to any
    one record are serialized by a per-id lock.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        (self.root / "images").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, job_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(job_id, threading.Lock())

    def _job_path(self, job_id: str) -> Path:
        return self.root / "jobs" / f"{job_id}.json"

    def write(self, record: JobRecord) -> None:
        with self._lock_for(record.id):
            path = self._job_path(record.id)
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(record.to_dict(), indent=2))
            tmp.replace(path)

    def read(self, job_id: str) -> JobRecord | None:
        path = self._job_path(job_id)
        if not path.exists():
            return None
        return JobRecord.from_dict(json.loads(path.read_text()))

    def all_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "jobs").glob("*.json"))

    def save_image(self, ref: str, data: bytes) -> None:
        path = self.root / "images" / f"{ref}.png"
        tmp = path.with_suffix(".png.tmp")
        tmp.write_bytes(data)
        tmp.replace(path)

    def read_image(self, ref: str) -> bytes | None:
        path = self.root / "images" / f"{ref}.png"
        if not path.exists():
            return None
        return path.read_bytes()


def _decode_b64_png(field_name: str, value, expected_size: int | None) -> torch.Tensor:
    if not isinstance(value, str) or not value:
        raise ValidationError(field_name, "must be a base64 PNG string")
    try:
        raw = base64.b64decode(value, validate=True)
    except Exception:
        raise ValidationError(field_name, "invalid base64") from None
    try:
        img = decode_png(raw)
    except ImageFormatError as exc:
        raise ValidationError(field_name, str(exc)) from None
    if img.shape[0] == 1:
        img = img.expand(3, -1, -1).clone()
    if expected_size is not None and img.shape[1:] != (expected_size, expected_size):
        raise ValidationError(
            field_name,
            f"image size {img.shape[2]}x{img.shape[1]} does not match model size "
            f"{expected_size}x{expected_size}",
        )
    return img


def _overlay_drawing(original: torch.Tensor, drawing: torch.Tensor) -> torch.Tensor:
    """Paste the non-white pixels of the drawing layer onto the original."""
    file_vals = (drawing.clamp(-1, 1) + 1.0) * 127.5
    drawn = (file_vals < 255 - WHITE_BYTE_TOLERANCE).any(dim=0, keepdim=True)
    return torch.where(drawn, drawing, original)


@dataclass
class ServiceConfig:
    data_dir: Path
    checkpoint_path: Path | None = None
    workers: int = max(1, (os.cpu_count() or 2) - 1)
    queue_limit: int = DEFAULT_QUEUE_LIMIT
    static_dir: Path | None = None


@dataclass
class ServiceState:
    config: ServiceConfig
    store: JobStore
    checkpoint: Checkpoint | None = None
    net: object = None
    sched: NoiseSchedule | None = None
    checkpoint_hash: str | None = None
    executor: ThreadPoolExecutor | None = None
    queue_depth: int = 0
    submitted_total: int = 0
    completed_total: int = 0
    counters_lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def model_size(self) -> int | None:
        return self.checkpoint.config.image_size if self.checkpoint else None


def build_state(config: ServiceConfig) -> ServiceState:
    store = JobStore(config.data_dir)
    state = ServiceState(config=config, store=store)
    if config.checkpoint_path is not None:
        ckpt = load_checkpoint(config.checkpoint_path)
        state.checkpoint = ckpt
        state.net = ckpt.build_network().eval()
        meta = ckpt.metadata.get("schedule", {})
        state.sched = make_linear_schedule(
            int(meta.get("steps", 1000)),
            float(meta.get("beta_start", 1e-4)),
            float(meta.get("beta_end", 0.02)),
        )
        state.checkpoint_hash = hashlib.sha256(
            Path(config.checkpoint_path).read_bytes()
        ).hexdigest()
    state.executor = ThreadPoolExecutor(max_workers=config.workers)
    return state


def validate_payload(payload: dict, state: ServiceState) -> dict:
    """Check every field, returning a normalized payload; raises
    ValidationError naming the offending field."""
    kind = payload.get("kind")
    if kind not in VALID_KINDS:
        raise ValidationError("kind", f"must be one of {list(VALID_KINDS)}")
    size = state.model_size
    _decode_b64_png("comb_png_b64", payload.get("comb_png_b64"), size)
    original_b64 = payload.get("original_png_b64")
    if original_b64 is not None:
        _decode_b64_png("original_png_b64", original_b64, size)
    elif kind == "edit":
        raise ValidationError("original_png_b64", "required for edit jobs")

    def _check_scale(name: str, lo: float, hi: float | None, default: float) -> float:
        value = payload.get(name, default)
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ValidationError(name, "must be a number") from None
        if value < lo or (hi is not None and value > hi) or value != value:
            bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            raise ValidationError(name, f"must be in {bound}, got {value}")
        return value

    normalized = {
        "kind": kind,
        "comb_png_b64": payload["comb_png_b64"],
        "s_sketch": _check_scale("s_sketch", 0.0, None, 2.0),
        "s_stroke": _check_scale("s_stroke", 0.0, None, 2.0),
        "s_realism": _check_scale("s_realism", 0.0, 1.0, 1.0),
    }
    if original_b64 is not None:
        normalized["original_png_b64"] = original_b64
    seed = payload.get("seed", 0)
    if not isinstance(seed, int) or not -(2**63) <= seed < 2**63:
        raise ValidationError("seed", "must be a 64-bit integer")
    normalized["seed"] = seed
    steps = state.sched.steps if state.sched else 1000
    cutoff = payload.get("refine_cutoff_R", default_refine_cutoff(steps))
    if not isinstance(cutoff, int) or not 0 <= cutoff <= steps:
        raise ValidationError("refine_cutoff_R", f"must be an integer in [0, {steps}]")
    normalized["refine_cutoff_R"] = cutoff
    return normalized


def run_job(state: ServiceState, job_id: str) -> None:
    record = state.store.read(job_id)
    if record is None:
        return
    record.status = "running"
    state.store.write(record)
    try:
        output = execute_payload(state, record.payload)
        ref = record.id
        state.store.save_image(ref, encode_png(output))
        record.status = "done"
        record.output_ref = ref
    except Exception as exc:  # failures land in the record, not the worker
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
    finally:
        record.finished = time.time()
        state.store.write(record)
        with state.counters_lock:
            state.queue_depth -= 1
            state.completed_total += 1


def execute_payload(state: ServiceState, payload: dict) -> torch.Tensor:
    if state.net is None or state.sched is None:
        raise RuntimeError("no checkpoint loaded")
    size = state.model_size
    comb = _decode_b64_png("comb_png_b64", payload["comb_png_b64"], size)
    if payload.get("original_png_b64"):
        original = _decode_b64_png("original_png_b64", payload["original_png_b64"], size)
        comb = _overlay_drawing(original, comb)
    sketch, stroke = extract_sketch_stroke(comb)
    scales = GuidanceScales(payload["s_sketch"], payload["s_stroke"])
    realism = RealismConfig(payload["s_realism"])
    kind = payload["kind"]
    if kind == "generate":
        req = EditRequest(
            c_sketch=sketch, c_stroke=stroke, c_comb=comb, scales=scales,
            realism=realism, seed=payload["seed"],
        )
        return sample(req, state.net, state.sched)
    req = EditRequest(
        c_sketch=sketch, c_stroke=stroke, c_comb=comb, scales=scales,
        realism=realism, seed=payload["seed"], refine_cutoff=payload["refine_cutoff_R"],
    )
    if kind == "edit":
        return local_edit(req, state.net, state.sched)
    return region_fill(req, state.net, state.sched)


def recover_interrupted_jobs(state: ServiceState) -> int:
    """Re-queue jobs found queued or running on startup (at-least-once)."""
    recovered = 0
    for job_id in state.store.all_ids():
        record = state.store.read(job_id)
        if record is None or record.status not in ("queued", "running"):
            continue
        record.status = "queued"
        record.error = None
        state.store.write(record)
        with state.counters_lock:
            state.queue_depth += 1
        state.executor.submit(run_job, state, job_id)
        recovered += 1
    return recovered


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI()
    app.state.service = state
    recover_interrupted_jobs(state)

    @app.post("/api/jobs")
    async def submit_job(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        if state.net is None:
            return JSONResponse({"error": "no checkpoint loaded"}, status_code=503)
        try:
            normalized = validate_payload(payload, state)
        except ValidationError as exc:
            return JSONResponse(
                {"error": str(exc), "field": exc.field_name}, status_code=400
            )
        with state.counters_lock:
            if state.queue_depth >= state.config.queue_limit:
                return JSONResponse({"error": "service at capacity"}, status_code=503)
            state.queue_depth += 1
            state.submitted_total += 1
        record = JobRecord(
            id=uuid.uuid4().hex,
            kind=normalized["kind"],
            payload=normalized,
            status="queued",
            created=time.time(),
        )
        state.store.write(record)
        state.executor.submit(run_job, state, record.id)
        return JSONResponse({"id": record.id, "status": record.status}, status_code=202)

    @app.get("/api/jobs/{job_id}")
    async def get_status(job_id: str):
        record = state.store.read(job_id)
        if record is None:
            return JSONResponse({"error": "job not found"}, status_code=404)
        body = record.to_dict()
        body["payload"] = {
            k: v for k, v in body["payload"].items() if not k.endswith("_png_b64")
        }
        return JSONResponse(body)

    @app.get("/api/images/{ref}")
    async def get_image(ref: str):
        data = state.store.read_image(ref)
        if data is None:
            return JSONResponse({"error": "image not found"}, status_code=404)
        return Response(content=data, media_type="image/png")

    @app.get("/api/health")
    async def health():
        degraded = state.net is None
        return JSONResponse(
            {
                "status": "degraded" if degraded else "ok",
                "checkpoint_hash": state.checkpoint_hash,
                "model_size": state.model_size,
                "queue_depth": state.queue_depth,
                "worker_count": state.config.workers,
                "submitted_total": state.submitted_total,
                "completed_total": state.completed_total,
            }
        )

    static_dir = state.config.static_dir
    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app

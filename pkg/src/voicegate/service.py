"""Local streaming service exposing the pipeline to a browser demo.

One WebSocket endpoint (``/stream``) carries the whole session: the client
opens with a JSON frame declaring its sample rate, then sends binary frames
of 16-bit little-endian PCM and JSON control frames (set_threshold,
reset_enrollment, get_status). The server answers every control frame with a
status or error frame and pushes one event frame per processed window, in
pipeline order. Only one audio-producing session may exist at a time — the
demo mirrors a device with a single microphone.

Enrollment state persists to disk after every mutation so a restarted
service remembers its speaker; ``/enrollment/export`` and
``/enrollment/import`` move that state in the binary enrollment format.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .asv import EnrollmentSet, load_enrollment, save_enrollment
from .dsp import BufferOverrunError, SampleStream
from .nn import load_bundle
from .pipeline import Pipeline, PipelineConfig

MAX_CHUNK_BYTES = 65536

logger = logging.getLogger(__name__)


class ServiceState:
    """Pipeline plus the stream buffer and the single-producer latch."""

    def __init__(self, config: PipelineConfig, pipeline: Pipeline):
        self.config = config
        self.pipeline = pipeline
        self.stream = SampleStream(config.stream)
        self.producer_active = False

    @classmethod
    def from_config(cls, config: PipelineConfig) -> "ServiceState":
        ks_bundle = load_bundle(config.ks_bundle_path)
        dv_bundle = load_bundle(config.dvector_bundle_path)
        enrollment = None
        path = Path(config.enrollment_path)
        if path.exists():
            enrollment = load_enrollment(path)
            logger.info("restored enrollment state from %s (%d vectors)", path, len(enrollment))
        pipeline = Pipeline.from_bundles(
            config.stream,
            ks_bundle,
            dv_bundle,
            enrollment_capacity=config.enrollment_capacity,
            threshold=config.threshold,
            memory_limit=config.memory_limit_bytes,
            refractory_hops=config.refractory_hops,
            enrollment=enrollment,
        )
        return cls(config, pipeline)

    def persist(self):
        path = Path(self.config.enrollment_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_enrollment(self.pipeline.enrollment, path)

    def status_message(self) -> dict:
        return {"kind": "status", **self.pipeline.status()}


def _error(message: str) -> dict:
    return {"kind": "error", "message": message}


async def _handle_control(state: ServiceState, ws: WebSocket, frame: str) -> bool:
    """Apply one JSON control frame; returns False when the session must end."""
    try:
        msg = json.loads(frame)
        kind = msg["kind"]
    except (json.JSONDecodeError, TypeError, KeyError):
        await ws.send_json(_error("malformed control frame"))
        return True

    if kind == "open":
        rate = msg.get("sample_rate")
        if rate != state.config.stream.sample_rate_hz:
            await ws.send_json(
                _error(
                    f"sample rate {rate} not supported; this pipeline runs at "
                    f"{state.config.stream.sample_rate_hz} Hz"
                )
            )
            return False
        if state.producer_active:
            await ws.send_json(_error("another audio session is already active"))
            return False
        state.producer_active = True
        ws.scope["voicegate_producer"] = True
        await ws.send_json(state.status_message())
        return True

    if kind == "set_threshold":
        try:
            state.pipeline.set_threshold(float(msg["value"]))
        except (KeyError, TypeError, ValueError) as err:
            await ws.send_json(_error(f"bad threshold: {err}"))
            return True
        state.persist()
        await ws.send_json(state.status_message())
        return True

    if kind == "reset_enrollment":
        state.pipeline.reset_enrollment()
        state.stream.reset()
        state.persist()
        await ws.send_json(state.status_message())
        return True

    if kind == "get_status":
        await ws.send_json(state.status_message())
        return True

    await ws.send_json(_error(f"unknown message kind {kind!r}"))
    return True


async def _handle_audio(state: ServiceState, ws: WebSocket, chunk: bytes):
    if not ws.scope.get("voicegate_producer"):
        await ws.send_json(_error("send an open frame before audio"))
        return
    if len(chunk) > MAX_CHUNK_BYTES:
        await ws.send_json(_error(f"audio chunk over {MAX_CHUNK_BYTES} bytes"))
        return
    if len(chunk) % 2:
        await ws.send_json(_error("audio chunk must contain whole 16-bit samples"))
        return
    samples = np.frombuffer(chunk, dtype="<i2")
    try:
        windows = state.stream.push(samples)
    except BufferOverrunError as err:
        await ws.send_json(_error(str(err)))
        return
    for window in windows:
        was_enrolling = state.pipeline.mode.value == "enrolling"
        event = state.pipeline.process_window(window)
        if "enrollment" in event.detail or (
            was_enrolling != (state.pipeline.mode.value == "enrolling")
        ):
            state.persist()
        await ws.send_json(
            {"kind": "event", "x": event.x, "t": event.timestamp, "detail": event.detail}
        )


def create_app(state: ServiceState, static_dir=None) -> FastAPI:
    app = FastAPI(title="voicegate demo service")
    app.state.service = state

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                received = await ws.receive()
                if received["type"] == "websocket.disconnect":
                    break
                if received.get("bytes") is not None:
                    await _handle_audio(state, ws, received["bytes"])
                elif received.get("text") is not None:
                    if not await _handle_control(state, ws, received["text"]):
                        await ws.close()
                        break
        except WebSocketDisconnect:
            pass
        finally:
            if ws.scope.get("voicegate_producer"):
                state.producer_active = False

    @app.get("/status")
    async def status():
        return state.status_message()

    @app.get("/enrollment/export")
    async def export_enrollment():
        state.persist()
        data = Path(state.config.enrollment_path).read_bytes()
        return Response(
            content=data,
            media_type="application/octet-stream",
            headers={"Content-Disposition": "attachment; filename=enrollment.bin"},
        )

    @app.post("/enrollment/import")
    async def import_enrollment(request: Request):
        body = await request.body()
        path = Path(state.config.enrollment_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(body)
        try:
            enrollment = load_enrollment(tmp)
            budget = state.pipeline.budget
            if budget and enrollment.dim is not None:
                expected = budget.components["dvector"] // 4
                if enrollment.dim != expected:
                    raise ValueError(
                        f"enrollment dimension {enrollment.dim} does not match the "
                        f"extractor output {expected}"
                    )
        except Exception as err:
            tmp.unlink(missing_ok=True)
            return Response(
                content=json.dumps(_error(f"invalid enrollment file: {err}")),
                media_type="application/json",
                status_code=400,
            )
        tmp.replace(path)
        state.pipeline.enrollment = enrollment
        return state.status_message()

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(config: PipelineConfig, static_dir=None, host: str = "127.0.0.1"):
    import uvicorn

    state = ServiceState.from_config(config)
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host=host, port=config.port)

"""HTTP control plane around a running stream host.

Sensors stream wire frames over raw TCP to the ingest server; the HTTP
side accepts single frames, exposes the latest merged frame (JSON or PLY),
and runs calibration and scenario jobs against the core package.
"""

from __future__ import annotations

import io
import threading
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse

from .. import wire
from ..calibration import InsufficientOverlap
from ..host import IngestServer, SplatPolicy, StreamHost, export_ply, metrics_line, pace, write_ply
from ..runs import calibrate_recordings, run_scenario
from ..scenario import TaskTimeout, load_config
from ..sensors import Layout, default_layout
from .schemas import (CalibrateRequest, CalibrateResponse, EventModel, FrameAck, FrameSize, Health, LayoutModel,
                      MergedSummary, ScenarioRequest, ScenarioResponse, Status, TaskResultModel)


class HostRuntime:
    """A stream host with its TCP ingest server and pacer thread."""

    def __init__(self, layout: Layout | None = None, fps: float = 30.0, listen: tuple[str, int] | None = None,
                 export_dir: str | Path | None = None, export_every: int = 30, policy: SplatPolicy = SplatPolicy(),
                 expiry: float = 0.5, normals: bool = False, max_ticks: int | None = None, metrics=None):
        if not fps > 0:
            raise ValueError("fps must be positive")
        self.layout = layout or default_layout()
        self.fps = fps
        self.listen = listen
        self.export_dir = Path(export_dir) if export_dir else None
        self.export_every = max(1, export_every)
        self.max_ticks = max_ticks
        self.metrics = metrics
        self.host = StreamHost(self.layout.poses, policy, expiry, normals)
        self.ticks = 0
        self.server: IngestServer | None = None
        self._stop = threading.Event()
        self._pacer: threading.Thread | None = None

    @property
    def address(self) -> str | None:
        if self.server is None:
            return None
        h, p = self.server.server_address[:2]
        return f"{h}:{p}"

    def set_layout(self, layout: Layout) -> None:
        self.layout = layout
        self.host.set_poses(layout.poses)

    def start(self) -> None:
        if self.listen is not None:
            self.server = IngestServer(self.listen, self.host)
            self.server.start()
        if self.export_dir:
            self.export_dir.mkdir(parents=True, exist_ok=True)
        self._stop.clear()
        self._pacer = threading.Thread(target=self.run, name="pacer", daemon=True)
        self._pacer.start()

    def run(self) -> None:
        """Pacing loop; returns when stopped or after ``max_ticks``."""
        for frame in pace(self.host, self.fps, max_ticks=self.max_ticks, stop=self._stop):
            self.ticks += 1
            if self.metrics:
                self.metrics(metrics_line(frame, self.host.last_tick_ms))
            if self.export_dir and frame.frame_index % self.export_every == 0:
                export_ply(frame, self.export_dir / f"frame_{frame.frame_index:06d}.ply")

    def wait(self, timeout: float | None = None) -> None:
        if self._pacer is not None:
            self._pacer.join(timeout)

    def stop(self) -> None:
        self._stop.set()
        self.wait(5.0)
        if self.server is not None:
            self.server.shutdown()
            self.server.server_close()
            self.server = None


def create_app(runtime: HostRuntime | None = None) -> FastAPI:
    runtime = runtime or HostRuntime()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        runtime.start()
        try:
            yield
        finally:
            runtime.stop()

    app = FastAPI(title="pcavatar host", lifespan=lifespan)
    app.state.runtime = runtime

    @app.get("/health", response_model=Health)
    def health():
        return Health()

    @app.get("/status", response_model=Status)
    def status():
        last = runtime.host.last_frame
        return Status(fps=runtime.fps, ticks=runtime.ticks, listen=runtime.address,
                      sensors=sorted(runtime.host.poses), connected=runtime.host.connected(),
                      stale=sorted(last.stale) if last else [], bytes_in=runtime.host.bytes_in,
                      events=len(runtime.host.events))

    @app.post("/frames", response_model=FrameAck)
    async def post_frame(request: Request):
        data = await request.body()
        try:
            frame = wire.decode(data)
        except wire.WireError as exc:
            raise HTTPException(400, f"{type(exc).__name__}: {exc}")
        if not runtime.host.submit(frame):
            raise HTTPException(404, f"unknown sensor {frame.sensor_id}")
        runtime.host.bytes_in += len(data)
        return FrameAck(sensor_id=frame.sensor_id, timestamp_us=frame.timestamp_us,
                        points=len(frame.cloud), skeletons=len(frame.skeletons))

    def latest():
        frame = runtime.host.last_frame
        if frame is None:
            raise HTTPException(404, "no merged frame yet")
        return frame

    @app.get("/merged/latest", response_model=MergedSummary, response_model_exclude_none=True)
    def merged_latest(splats: bool = False):
        return MergedSummary.from_frame(latest(), include_splats=splats)

    @app.get("/merged/latest.ply", response_class=PlainTextResponse)
    def merged_latest_ply():
        buf = io.StringIO()
        write_ply(latest().splats, buf)
        return PlainTextResponse(buf.getvalue(), media_type="text/plain")

    @app.get("/events", response_model=list[EventModel])
    def events(limit: int = Query(100, ge=1, le=1000)):
        return [EventModel(time=e.time, sensor_id=e.sensor_id, kind=e.kind, detail=e.detail)
                for e in list(runtime.host.events)[-limit:]]

    @app.get("/layout", response_model=LayoutModel)
    def get_layout():
        return LayoutModel.from_layout(runtime.layout)

    @app.put("/layout", response_model=LayoutModel)
    def put_layout(body: LayoutModel):
        try:
            layout = body.to_layout()
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        runtime.set_layout(layout)
        return LayoutModel.from_layout(layout)

    @app.get("/wire/frame-size", response_model=FrameSize)
    def frame_size(joints: int = Query(25, ge=0, le=25), points: int = Query(0, ge=0, le=wire.MAX_POINTS)):
        return FrameSize(joints=joints, points=points, bytes=wire.frame_size(joints, points))

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate(body: CalibrateRequest):
        try:
            layout, rmse = calibrate_recordings(body.recordings, body.reference, runtime.layout, body.window_us)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except (InsufficientOverlap, KeyError, wire.WireError) as exc:
            raise HTTPException(422, str(exc))
        if body.apply:
            runtime.set_layout(layout)
        return CalibrateResponse(layout=LayoutModel.from_layout(layout), rmse=rmse)

    @app.post("/scenario", response_model=ScenarioResponse)
    def scenario(body: ScenarioRequest):
        try:
            cfg = load_config(body.config)
            tasks = [1, 2, 3, 4] if body.task == "all" else [body.task]
            results, task_log = run_scenario(tasks, body.walker, cfg, body.seed)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        except (TaskTimeout, KeyError, ValueError) as exc:
            raise HTTPException(422, str(exc))
        return ScenarioResponse(
            results=[TaskResultModel(task_id=r.task_id, elapsed=r.elapsed, collisions=r.collisions,
                                     balls_caught=r.balls_caught, hits=r.hits, balls=r.balls) for r in results],
            log=task_log.text())

    return app

"""Codec and host-pipeline benchmarks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import wire
from .decimation import DecimationParams, high_quality_mask
from .frames import PointCloud, SensorFrame
from .host import SplatPolicy, StreamHost, pace
from .sensors import BodyModel, Layout, default_layout, synth_body_cloud
from .walker import walker


def synthetic_frames(layout: Layout, n_points: int, n_frames: int = 30, seed: int = 0,
                     params: DecimationParams = DecimationParams()) -> list[dict[int, SensorFrame]]:
    """``n_frames`` ticks of per-sensor frames with exactly ``n_points`` each.

    Points are drawn from a dense body surface of a subject walking through
    the area centre, expressed in each sensor's local frame.
    """
    rng = np.random.default_rng(seed)
    path = [[-1.0, 0.0, -0.5], [1.0, 0.0, 0.5]]
    out = []
    for k in range(n_frames):
        ts = int(k * 1e6 / 30)
        sk = walker(k / 30, path, 1.0).replace(timestamp_us=ts)
        body = synth_body_cloud(sk, BodyModel(density=2000), seed=seed + k)
        frames = {}
        for cfg in layout:
            idx = rng.choice(len(body), size=n_points, replace=n_points > len(body))
            to_local = cfg.pose.inverse()
            local_sk = sk.transformed(to_local)
            pts = to_local.apply(body.positions[idx])
            q = high_quality_mask(pts, local_sk, params)
            cloud = PointCloud(pts, body.colors[idx], q)
            frames[cfg.sensor_id] = SensorFrame(cfg.sensor_id, ts, cloud, [local_sk])
        out.append(frames)
    return out


@dataclass
class CodecResult:
    points: int
    iters: int
    frame_bytes: int
    encode_s: float
    decode_s: float

    @property
    def encode_mb_s(self) -> float:
        return self.frame_bytes * self.iters / self.encode_s / 1e6

    @property
    def decode_mb_s(self) -> float:
        return self.frame_bytes * self.iters / self.decode_s / 1e6

    @property
    def encode_points_s(self) -> float:
        return self.points * self.iters / self.encode_s

    @property
    def decode_points_s(self) -> float:
        return self.points * self.iters / self.decode_s

    def lines(self) -> list[str]:
        return [
            f"frame: {self.points} points, {self.frame_bytes} bytes",
            f"encode: {self.encode_mb_s:.1f} MB/s, {self.encode_points_s:.3e} points/s",
            f"decode: {self.decode_mb_s:.1f} MB/s, {self.decode_points_s:.3e} points/s",
        ]


def bench_codec(n_points: int = 10_000, iters: int = 100, seed: int = 0) -> CodecResult:
    layout = default_layout(1)
    frame = synthetic_frames(layout, n_points, 1, seed)[0][0]
    data = wire.encode(frame)
    t0 = time.perf_counter()
    for _ in range(iters):
        wire.encode(frame)
    t1 = time.perf_counter()
    for _ in range(iters):
        wire.decode(data)
    t2 = time.perf_counter()
    return CodecResult(n_points, iters, len(data), t1 - t0, t2 - t1)


@dataclass
class PipelineResult:
    sensors: int
    points: int
    seconds: float
    ticks: int
    tick_ms: np.ndarray
    intervals_ms: np.ndarray
    bytes_total: int
    splats_per_tick: list[int]

    @property
    def fps(self) -> float:
        return self.ticks / self.seconds

    @property
    def mean_tick_ms(self) -> float:
        return float(np.mean(self.tick_ms))

    @property
    def p99_tick_ms(self) -> float:
        return float(np.percentile(self.tick_ms, 99))

    @property
    def mb_s(self) -> float:
        return self.bytes_total / self.seconds / 1e6

    def lines(self) -> list[str]:
        return [
            f"sensors={self.sensors} points/sensor={self.points} ticks={self.ticks} seconds={self.seconds:.2f}",
            f"achieved fps: {self.fps:.2f}",
            f"tick latency ms: mean {self.mean_tick_ms:.2f}, p99 {self.p99_tick_ms:.2f}, max {self.tick_ms.max():.2f}",
            f"throughput: {self.mb_s:.2f} MB/s",
        ]


class _MeteredHost(StreamHost):
    """Host whose every tick first ingests one wire frame per sensor, timed end to end."""

    def __init__(self, frames: list[dict[int, SensorFrame]], layout: Layout, clock):
        super().__init__(layout.poses, SplatPolicy(), expiry=1.0, clock=clock)
        self.frames = frames
        self.tick_ms: list[float] = []
        self.starts: list[float] = []
        self.splats: list[int] = []
        self.bytes_total = 0

    def tick(self, now=None, frame_index=0, deadline=None):
        t0 = self.clock()
        for frame in self.frames[len(self.tick_ms) % len(self.frames)].values():
            data = wire.encode(frame)
            self.bytes_total += len(data)
            self.submit_bytes(data)
        merged = super().tick(now, frame_index, deadline)
        self.tick_ms.append((self.clock() - t0) * 1000.0)
        self.starts.append(t0)
        self.splats.append(len(merged.splats))
        return merged


def bench_pipeline(n_sensors: int = 5, n_points: int = 10_000, seconds: float = 10.0, fps: float = 30.0,
                   seed: int = 0, clock=time.perf_counter, sleep=time.sleep) -> PipelineResult:
    """Paced host loop; each tick covers encode -> decode -> transform -> merge -> splat."""
    layout = default_layout(n_sensors)
    host = _MeteredHost(synthetic_frames(layout, n_points, 30, seed), layout, clock)
    start = clock()
    for _ in pace(host, fps, clock=clock, sleep=sleep, max_ticks=int(round(seconds * fps))):
        pass
    elapsed = clock() - start
    return PipelineResult(n_sensors, n_points, elapsed, len(host.tick_ms), np.array(host.tick_ms),
                          np.diff(np.array(host.starts)) * 1000.0, host.bytes_total, host.splats)

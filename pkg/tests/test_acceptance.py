"""Acceptance criteria, one test each.

Every test reports a ``PASS criterion N`` or ``FAIL criterion N`` line; the
lines are collected and repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import random_frame, random_pose
from pcavatar import wire
from pcavatar.avatar import BONES, N_JOINTS, Cylinder, JointId, RigidPose, Sphere, abstract_avatar, body_height
from pcavatar.bench import bench_pipeline
from pcavatar.calibration import estimate_pose
from pcavatar.cli import main
from pcavatar.decimation import DecimationParams, decimate, high_quality_mask
from pcavatar.frames import PointCloud, SensorFrame
from pcavatar.host import StreamHost
from pcavatar.pipeline import SyntheticCapture
from pcavatar.scenario import aim_cannon, ball_position, bar_height
from pcavatar.sensors import SensorConfig, default_layout, sensor_capture
from pcavatar.walker import builtin_script_path, load_scripts, walker

J = JointId
REPORT: list[str] = []


class report:
    """Context manager that records one pass/fail line for a criterion."""

    def __init__(self, n: int, what: str):
        self.n, self.what, self.detail = n, what, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"{status} criterion {self.n}: {self.what}"
        if self.detail:
            line += f" [{self.detail}]"
        if exc is not None:
            line += f" ({exc_type.__name__}: {exc})".replace("\n", " ")[:300]
        REPORT.append(line)
        print(line)
        return False


def test_c01_wire_round_trip():
    with report(1, "wire round trip of 10,000 random frames, exact length formula, under 10 s") as r:
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        bad_eq = bad_len = 0
        for _ in range(10_000):
            f = random_frame(rng)
            data = wire.encode(f)
            j = N_JOINTS * len(f.skeletons)
            bad_len += len(data) != 20 + 30 * j + 16 * len(f.cloud)
            bad_eq += wire.decode(data) != f
        elapsed = time.perf_counter() - start
        r.detail = f"{elapsed:.2f} s"
        assert bad_eq == 0 and bad_len == 0, (bad_eq, bad_len)
        assert elapsed < 10.0


def test_c02_pipeline_budget():
    with report(2, "five sensors x 10k points paced at 30 fps: mean tick <= 33.3 ms, p99 <= 66 ms") as r:
        res = bench_pipeline(5, 10_000, 10.0, 30.0, seed=0)
        r.detail = f"mean {res.mean_tick_ms:.2f} ms, p99 {res.p99_tick_ms:.2f} ms, {res.fps:.2f} fps"
        assert res.ticks == 300
        assert all(n > 0 for n in res.splats_per_tick)
        assert res.mean_tick_ms <= 33.3 and res.p99_tick_ms <= 66.0
        # the pacer held the grid: intervals average one period
        assert abs(np.mean(res.intervals_ms) - 1000 / 30) < 1.0


def test_c03_decimation_laws():
    with report(3, "decimation on 1,000 random frames: High totality, Low = ceil(L/k), oracle agreement") as r:
        rng = np.random.default_rng(3)
        violations = mismatches = low_errors = 0
        for _ in range(1000):
            sk = walker(rng.uniform(0, 4), [[-1, 0, 0], [1, 0, 1], [0, 0, -1]], 1.0, height=rng.uniform(1.4, 2.0))
            k = int(rng.integers(1, 11))
            params = DecimationParams(threshold_fraction=rng.uniform(0.05, 0.3), low_stride=k)
            t = params.resolve_threshold(sk)
            n = int(rng.integers(0, 300))
            pts = sk.positions[J.SPINE_MID] + rng.uniform(-1.2, 1.2, (n, 3))
            out = decimate(PointCloud(pts, np.zeros((n, 3))), sk, params)
            # independent oracle: per point, per joint, plain Python
            oracle = np.array([min(math.dist(p, sk.positions[j]) for j in params.relevant_joints) < t
                               for p in pts], dtype=bool)
            mismatches += int((high_quality_mask(pts, sk, params) != oracle).sum())
            kept_high = {tuple(p) for p in out.positions[out.quality]}
            violations += sum(tuple(p) not in kept_high for p in pts[oracle])
            low_errors += int((~out.quality).sum() != math.ceil(int((~oracle).sum()) / k))
        r.detail = f"violations={violations} low_count_errors={low_errors} mismatches={mismatches}"
        assert violations == 0 and low_errors == 0 and mismatches == 0


def test_c04_calibration():
    with report(4, "noise-free recovery < 1e-9 over 100 poses; sigma 0.01 median rmse in [0.005, 0.015]") as r:
        rng = np.random.default_rng(4)
        worst_rot = worst_t = 0.0
        for _ in range(100):
            truth = random_pose(rng)
            src = rng.uniform(-2, 2, (100, 3))
            est, _ = estimate_pose(src, truth.apply(src))
            # rotation angle from the chord ||R_a - R_b||_F = 2 sqrt(2) sin(theta / 2),
            # well conditioned near zero unlike arccos of the trace
            chord = np.linalg.norm(est.rotation - truth.rotation)
            worst_rot = max(worst_rot, float(2 * np.arcsin(min(1.0, chord / (2 * np.sqrt(2))))))
            worst_t = max(worst_t, float(np.linalg.norm(est.translation - truth.translation)))
        rmses = []
        for seed in range(50):
            g = np.random.default_rng(seed)
            truth = random_pose(g)
            src = g.uniform(-1, 1, (100, 3))
            rmses.append(estimate_pose(src, truth.apply(src) + g.normal(0, 0.01, (100, 3)))[1])
        med = float(np.median(rmses))
        r.detail = f"rot {worst_rot:.1e} rad, trans {worst_t:.1e} m, median rmse {med:.4f} m"
        assert worst_rot < 1e-9 and worst_t < 1e-9
        assert 0.005 <= med <= 0.015


def test_c05_sensor_ranges(standing):
    with report(5, "ranges 0.3/1.0/2.6/4.6 m give excluded/skeleton/no skeleton/excluded") as r:
        cfg = SensorConfig(0, RigidPose.identity())
        got = []
        for rng_m in (0.3, 1.0, 2.6, 4.6):
            point = PointCloud([[0.0, 0.0, rng_m]], [[255, 0, 0]])
            offset = np.array([0.0, 0.0, rng_m]) - standing.positions[J.SPINE_BASE]
            sk = standing.replace(positions=standing.positions + offset)
            frame = sensor_capture(point, [sk], cfg, 0)
            if len(frame.cloud) == 0:
                got.append("excluded")
            else:
                got.append("included+skeleton" if frame.skeletons else "included+no-skeleton")
        r.detail = ", ".join(got)
        assert got == ["excluded", "included+skeleton", "included+no-skeleton", "excluded"]


def test_c06_bar_height():
    with report(6, "bar height equals height - 0.12 exactly for 100 random heights") as r:
        rng = np.random.default_rng(6)
        heights = rng.uniform(1.2, 2.2, 100)
        bad = [h for h in heights if bar_height(float(h)) != h - 0.12]
        r.detail = f"{len(bad)} mismatches"
        assert not bad


def test_c07_ball_speed(standing):
    with report(7, "all balls share one speed within 1e-9; trajectories pass aim points within 1e-6 m") as r:
        rng = np.random.default_rng(7)
        speeds, misses = [], []
        for _ in range(25):
            sk = standing.replace(positions=standing.positions + (rng.uniform(-0.3, 0.3), 0, rng.uniform(-0.3, 0.3)))
            for i in (1, 2, 3, 4):
                ball = aim_cannon(i, sk, 6.0, (3.6, 2.2, 0.0), launch_time=float(rng.uniform(0, 5)))
                speeds.append(float(np.linalg.norm(ball.launch_velocity)))
                misses.append(float(np.linalg.norm(ball_position(ball, ball.arrival_time) - ball.aim)))
        spread = max(speeds) - min(speeds)
        r.detail = f"speed spread {spread:.1e}, worst miss {max(misses):.1e} m"
        assert spread < 1e-9 and max(misses) < 1e-6


class ManualClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


def test_c08_merge_law():
    with report(8, "merged splats = sum of per-sensor retained counts every tick of a 10 s run; duplicates kept") as r:
        layout = default_layout()
        script = load_scripts(builtin_script_path("calibration"))[1]
        capture = SyntheticCapture(layout, script, seed=8, background=300)
        clock = ManualClock()
        host = StreamHost(layout.poses, clock=clock)
        bad = 0
        for k in range(300):
            clock.t = k / 30
            frames = capture.frames(k)
            for f in frames.values():
                host.submit_bytes(wire.encode(f))
            merged = host.tick()
            bad += len(merged.splats) != sum(len(f.cloud) for f in frames.values())

        dup = PointCloud([[0.1, 0.2, 0.3]], [[1, 2, 3]], [True])
        ident = StreamHost({0: RigidPose.identity(), 1: RigidPose.identity()}, clock=clock)
        ident.submit(SensorFrame(0, 0, dup))
        ident.submit(SensorFrame(1, 0, dup))
        twice = ident.tick().splats.centers
        r.detail = f"{bad} bad ticks of 300"
        assert bad == 0
        assert len(twice) == 2 and np.array_equal(twice[0], twice[1])


def scenario_results(log_text: str) -> dict[int, dict[str, str]]:
    out = {}
    for line in log_text.splitlines():
        cols = line.split("\t")
        if len(cols) == 6 and cols[3] == "result":
            out[int(cols[0])] = dict(kv.split("=", 1) for kv in cols[5].split(";"))
    return out


def test_c09_scenario_determinism(tmp_path, capsys):
    with report(9, "scenario run --task all --seed 7 is byte-identical; perfect 0/0/0 and 4 balls; naive 2 on task 1") as r:
        logs = []
        for name in ("a.log", "b.log"):
            assert main(["scenario", "run", "--task", "all", "--seed", "7", "--log", str(tmp_path / name)]) == 0
            logs.append((tmp_path / name).read_bytes())
        assert main(["scenario", "run", "--task", "1", "--seed", "7", "--walker", "naive",
                     "--log", str(tmp_path / "naive.log")]) == 0
        capsys.readouterr()
        perfect = scenario_results(logs[0].decode())
        naive = scenario_results((tmp_path / "naive.log").read_text())
        r.detail = (f"perfect collisions {[perfect[t]['collisions'] for t in (1, 2, 3)]}, "
                    f"caught {perfect[4]['balls_caught']}; naive task 1 collisions {naive[1]['collisions']}")
        assert logs[0] == logs[1]
        assert [perfect[t]["collisions"] for t in (1, 2, 3)] == ["0", "0", "0"]
        assert perfect[4]["balls_caught"] == "4"
        assert naive[1]["collisions"] == "2"


def test_c10_abstract_avatar(standing):
    with report(10, "25 spheres + 24 cylinders for a full skeleton; body_height rigid invariance within 1e-9") as r:
        prims = abstract_avatar(standing)
        spheres = sum(isinstance(p, Sphere) for p in prims)
        cylinders = sum(isinstance(p, Cylinder) for p in prims)
        assert len(BONES) == 24
        rng = np.random.default_rng(10)
        h0 = body_height(standing)
        worst = 0.0
        for _ in range(100):
            sk = walker(rng.uniform(0, 3), [[0, 0, 0], [2, 0, 1]], 1.0, height=rng.uniform(1.4, 2.0))
            pose = random_pose(rng)
            worst = max(worst, abs(body_height(sk.transformed(pose)) - body_height(sk)))
        r.detail = f"{spheres} spheres, {cylinders} cylinders, drift {worst:.1e} m, standing {h0:.3f} m"
        assert spheres == 25 and cylinders == 24
        assert worst < 1e-9

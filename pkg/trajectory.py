# -*- coding: utf-8 -*-
"""
平面提升轨道生成
反射点坐标、格点位移部分和 Sₙ、自由飞行时间、障碍物编号与时间变换 nₜ
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from billiard import (BilliardTable, PhasePoint, boundary_angles, boundary_vectors,
                      first_hit_from_free, sample_free_arrays, step_vectors)
from errors import TimeBeyondTrajectory
from geometry import Segment, Vec2

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["k", "x", "y", "vx", "vy", "tau", "Sx", "Sy", "obstacle"]


@dataclass(frozen=True)
class ReflectionRecord:
    """第 k 次反射的记录"""
    position: Vec2
    velocity: Vec2
    flight_to_next: float
    cumulative_time: float
    cell: Tuple[int, int]
    obstacle: int


class Trajectory:
    """
    一条轨道的 n+1 条反射记录（下标 0..n），以数组形式保存

    obstacle = -1 表示该记录是自由区域内的起点而不是反射点。
    最后一条记录的 flight_to_next 未知，记为 NaN。
    """

    def __init__(self, disk, theta, phi, cells, flights, positions, velocities,
                 table_ref="", seed="", time_offset=0.0, end_state=None):
        self.disk = np.asarray(disk, dtype=np.int64)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.phi = np.asarray(phi, dtype=np.float64)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.flights = np.asarray(flights, dtype=np.float64)
        self.positions = np.asarray(positions, dtype=np.float64)
        self.velocities = np.asarray(velocities, dtype=np.float64)
        self.cumtime = time_offset + np.concatenate([[0.0], np.cumsum(self.flights)])
        self.table_ref = table_ref
        self.seed = seed
        # 最后一条记录的 (位移, 出射速度)，续接时不经过角度换算
        self.end_state = end_state

    @property
    def n(self):
        return int(self.flights.shape[0])

    @property
    def duration(self):
        return float(self.cumtime[-1])

    @property
    def start_time(self):
        return float(self.cumtime[0])

    def __len__(self):
        return self.n + 1

    def record(self, k) -> ReflectionRecord:
        flight = float(self.flights[k]) if k < self.n else math.nan
        return ReflectionRecord(
            position=Vec2(*self.positions[k]),
            velocity=Vec2(*self.velocities[k]),
            flight_to_next=flight,
            cumulative_time=float(self.cumtime[k]),
            cell=(int(self.cells[k, 0]), int(self.cells[k, 1])),
            obstacle=int(self.disk[k]),
        )

    @property
    def records(self) -> List[ReflectionRecord]:
        return [self.record(k) for k in range(self.n + 1)]

    def cell_shifts(self):
        """Sₖ - S₀"""
        return self.cells - self.cells[0]

    def segments(self) -> np.ndarray:
        """全部 n 条弦，(n,4) 数组"""
        return np.hstack([self.positions[:-1], self.positions[1:]])

    def reflections_before(self, t) -> int:
        """nₜ = max{m ≥ 0 : 前 m 段飞行时间之和 ≤ t}"""
        t = float(t)
        if t < self.start_time:
            raise ValueError(f"时间必须 ≥ {self.start_time}: {t}")
        if t > self.duration:
            raise TimeBeyondTrajectory(t, self.duration)
        return int(np.searchsorted(self.cumtime, t, side="right") - 1)

    def segment_array_up_to(self, t) -> np.ndarray:
        """截至时间 t 的弦：nₜ 条完整弦加上长度非零的末段"""
        m = self.reflections_before(t)
        full = self.segments()[:m]
        rest = float(t) - float(self.cumtime[m])
        if m < self.n and rest > 0.0:
            a = self.positions[m]
            b = a + rest * self.velocities[m]
            full = np.vstack([full, np.concatenate([a, b])[None, :]])
        return full

    def final_phase(self) -> PhasePoint:
        return PhasePoint(int(self.disk[-1]), float(self.theta[-1]), float(self.phi[-1]),
                          (int(self.cells[-1, 0]), int(self.cells[-1, 1])))

    def to_dataframe(self) -> pd.DataFrame:
        tau = np.append(self.flights, np.nan)
        return pd.DataFrame({
            "k": np.arange(self.n + 1),
            "x": self.positions[:, 0],
            "y": self.positions[:, 1],
            "vx": self.velocities[:, 0],
            "vy": self.velocities[:, 1],
            "tau": tau,
            "Sx": self.cells[:, 0],
            "Sy": self.cells[:, 1],
            "obstacle": self.disk,
        }, columns=CSV_COLUMNS)

    def to_csv(self, path):
        self.to_dataframe().to_csv(path, index=False)
        logger.info(f"轨道已导出到 {path}（{self.n + 1} 条记录）")

    def extended(self, table: BilliardTable, extra: int):
        """从最后一个相点继续生成 extra 步，返回拼接后的新轨道"""
        tail = _continue(table, self, extra)
        return Trajectory(
            disk=np.concatenate([self.disk, tail.disk[1:]]),
            theta=np.concatenate([self.theta, tail.theta[1:]]),
            phi=np.concatenate([self.phi, tail.phi[1:]]),
            cells=np.vstack([self.cells, tail.cells[1:]]),
            flights=np.concatenate([self.flights, tail.flights]),
            positions=np.vstack([self.positions, tail.positions[1:]]),
            velocities=np.vstack([self.velocities, tail.velocities[1:]]),
            table_ref=self.table_ref,
            seed=self.seed,
            time_offset=self.start_time,
            end_state=tail.end_state,
        )


def generate_batch(table: BilliardTable, disk, theta, phi, cells, n, seeds=None,
                   time_offset=0.0, start_vectors=None) -> List[Trajectory]:
    """
    对 R 个起点同时迭代 n 步

    迭代在笛卡尔形式下进行，θ、φ 只在写入记录时换算

    Args:
        disk, theta, phi: 长度 R 的起点数组
        cells: (R,2) 起点所在格点 ℓ
        n: 步数（≥ 1）
        seeds: 每条轨道的随机流标识
        start_vectors: 可选的起点 (位移, 出射速度)，给出时代替由角度换算的值
    """
    if n < 1:
        raise ValueError(f"步数必须 ≥ 1: {n}")
    disk = np.asarray(disk, dtype=np.int64).reshape(-1)
    reps = disk.shape[0]
    D = np.empty((reps, n + 1), dtype=np.int64)
    TH = np.empty((reps, n + 1))
    PH = np.empty((reps, n + 1))
    FL = np.empty((reps, n))
    C = np.empty((reps, n + 1, 2), dtype=np.int64)
    P = np.empty((reps, n + 1, 2))
    V = np.empty((reps, n + 1, 2))
    D[:, 0] = disk
    TH[:, 0] = np.asarray(theta, dtype=np.float64).reshape(-1)
    PH[:, 0] = np.asarray(phi, dtype=np.float64).reshape(-1)
    C[:, 0] = np.asarray(cells, dtype=np.int64).reshape(reps, 2)
    if start_vectors is None:
        offset, velocity = boundary_vectors(table, disk, TH[:, 0], PH[:, 0])
    else:
        offset, velocity = (np.asarray(a, dtype=np.float64).reshape(reps, 2) for a in start_vectors)
    P[:, 0] = table.centers[disk] + C[:, 0] + offset
    V[:, 0] = velocity

    for k in range(n):
        disk, offset, _, velocity, flight, shift = step_vectors(table, disk, offset, velocity)
        D[:, k + 1] = disk
        TH[:, k + 1], PH[:, k + 1] = boundary_angles(offset, velocity)
        FL[:, k] = flight
        C[:, k + 1] = C[:, k] + shift
        P[:, k + 1] = table.centers[disk] + C[:, k + 1] + offset
        V[:, k + 1] = velocity

    seeds = seeds if seeds is not None else [""] * reps
    return [
        Trajectory(D[r], TH[r], PH[r], C[r], FL[r], P[r], V[r],
                   table_ref=table.fingerprint, seed=seeds[r], time_offset=time_offset,
                   end_state=(offset[r].copy(), velocity[r].copy()))
        for r in range(reps)
    ]


def cell_walk(table: BilliardTable, disk, theta, phi, n, snapshots=()):
    """
    只跟踪格点位移与飞行时间的轻量迭代（不保存坐标）

    Returns:
        (S (R,2) 第 n 步的 Sₙ, 每个副本的飞行时间之和, {k: Sₖ} 快照)
    """
    disk = np.asarray(disk, dtype=np.int64).reshape(-1)
    offset, velocity = boundary_vectors(table, disk, theta, phi)
    S = np.zeros((disk.shape[0], 2), dtype=np.int64)
    flight_sum = np.zeros(disk.shape[0])
    wanted = set(int(k) for k in snapshots)
    taken = {}
    for k in range(1, n + 1):
        disk, offset, _, velocity, flight, shift = step_vectors(table, disk, offset, velocity)
        S += shift
        flight_sum += flight
        if k in wanted:
            taken[k] = S.copy()
    return S, flight_sum, taken


def generate(table: BilliardTable, start: PhasePoint, n: int, seed="") -> Trajectory:
    """
    从边界相点 start 生成 n 步提升轨道

    记录 0 位于起点；Sₖ 为逐步位移 Ψ 的部分和（加上起点格点 ℓ）。
    """
    return generate_batch(table, [start.disk_index], [start.theta], [start.phi],
                          [start.cell], n, seeds=[seed])[0]


def generate_blocks(table: BilliardTable, start: PhasePoint, n: int, block: int, seed=""):
    """
    分块生成长轨道，每块的记录 0 与上一块的最后一条记录相同

    Yields:
        Trajectory 片段
    """
    piece = generate(table, start, min(block, n), seed=seed)
    yield piece
    done = piece.n
    while done < n:
        piece = _continue(table, piece, min(block, n - done), time_offset=piece.duration)
        yield piece
        done += piece.n


def _continue(table: BilliardTable, trajectory: Trajectory, n: int, time_offset=0.0) -> Trajectory:
    """从轨道最后一条记录继续迭代 n 步"""
    phase = trajectory.final_phase()
    vectors = None
    if trajectory.end_state is not None:
        vectors = tuple(a[None, :] for a in trajectory.end_state)
    return generate_batch(table, [phase.disk_index], [phase.theta], [phase.phi], [phase.cell], n,
                          seeds=[trajectory.seed], time_offset=time_offset,
                          start_vectors=vectors)[0]


def generate_free_batch(table: BilliardTable, points, angles, n, seeds=None) -> List[Trajectory]:
    """
    从自由区域内的点出发：记录 0 为起点（obstacle=-1），随后是 n 次反射
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    disk, theta, phi, flight0, shift0 = first_hit_from_free(table, points, angles)
    tails = generate_batch(table, disk, theta, phi, shift0, n, seeds=seeds)
    out = []
    for r, tail in enumerate(tails):
        v0 = np.array([math.cos(angles[r]), math.sin(angles[r])])
        out.append(Trajectory(
            disk=np.concatenate([[-1], tail.disk]),
            theta=np.concatenate([[np.nan], tail.theta]),
            phi=np.concatenate([[np.nan], tail.phi]),
            cells=np.vstack([[0, 0], tail.cells]),
            flights=np.concatenate([[flight0[r]], tail.flights]),
            positions=np.vstack([points[r], tail.positions]),
            velocities=np.vstack([v0, tail.velocities]),
            table_ref=tail.table_ref,
            seed=tail.seed,
            end_state=tail.end_state,
        ))
    return out


def sample_free_start(table: BilliardTable, rng):
    """(Q ∩ [0,1]²) × S¹ 上均匀分布的一个起点 (q, v)"""
    points, angles = sample_free_arrays(table, rng, 1)
    return Vec2(*points[0]), Vec2(math.cos(angles[0]), math.sin(angles[0]))


def generate_from_free(table: BilliardTable, q: Vec2, v: Vec2, n: int, seed="") -> Trajectory:
    angle = math.atan2(v.y, v.x)
    return generate_free_batch(table, [q.as_tuple()], [angle], n, seeds=[seed])[0]


def reflections_before(trajectory: Trajectory, t) -> int:
    return trajectory.reflections_before(t)


def segments_up_to(trajectory: Trajectory, t) -> List[Segment]:
    rows = trajectory.segment_array_up_to(t)
    return [Segment(Vec2(r[0], r[1]), Vec2(r[2], r[3])) for r in rows]


def ensure_duration(table: BilliardTable, trajectory: Trajectory, t: float,
                    step_hint: Optional[int] = None) -> Trajectory:
    """必要时延长轨道使其总时长 ≥ t"""
    while trajectory.duration < t:
        missing = t - trajectory.duration
        extra = step_hint or max(16, int(1.25 * missing / table.mean_free_path) + 16)
        trajectory = trajectory.extended(table, extra)
    return trajectory

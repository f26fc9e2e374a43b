# -*- coding: utf-8 -*-
"""
周期 Sinai 台球
基本单元圆盘表的校验（不相交、有限视界）、环面台球映射与不变测度采样
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from config import (HORIZON_MAX_DENOMINATOR, HORIZON_PROBES, HORIZON_PROBE_WINDOW,
                    REVERSAL_STEPS, TAU_MAX_SAFETY)
from errors import (HorizonBoundExceeded, InfiniteHorizon, LorentzLabError,
                    NoHitWithinHorizon, OverlappingObstacles)
from geometry import Disk, Vec2, ray_disks_first_hit
from rng_streams import PURPOSE_HORIZON, make_rng

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
PROBE_BATCH = 20_000


@dataclass(frozen=True)
class HorizonReport:
    """有限视界校验结果"""
    finite: bool
    max_denominator: int
    directions_checked: int
    probes: int
    tau_max_observed: float
    tau_max_bound: float
    witness: Optional[Tuple[int, int]] = None
    corridor_width: float = 0.0

    def to_dict(self):
        return {
            "finite": self.finite,
            "max_denominator": self.max_denominator,
            "directions_checked": self.directions_checked,
            "probes": self.probes,
            "tau_max_observed": self.tau_max_observed,
            "tau_max_bound": self.tau_max_bound,
            "witness": list(self.witness) if self.witness else None,
            "corridor_width": self.corridor_width,
        }


@dataclass(frozen=True)
class BilliardTable:
    """基本单元内的圆盘障碍物表，校验后不可变"""
    disks: Tuple[Disk, ...]
    min_gap: float
    total_perimeter: float
    free_area: float
    tau_max_bound: Optional[float] = None
    horizon: Optional[HorizonReport] = field(default=None, compare=False)

    @property
    def n_disks(self):
        return len(self.disks)

    @cached_property
    def centers(self):
        return np.array([d.center.as_tuple() for d in self.disks], dtype=np.float64)

    @cached_property
    def radii(self):
        return np.array([d.radius for d in self.disks], dtype=np.float64)

    @cached_property
    def fingerprint(self):
        payload = json.dumps([[d.center.x, d.center.y, d.radius] for d in self.disks])
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:12]

    @property
    def search_half_width(self):
        return int(math.ceil(self.tau_max_bound)) + 1

    @property
    def mean_free_path(self):
        """平面台球平均自由程 π·面积/周长"""
        return math.pi * self.free_area / self.total_perimeter

    def with_horizon(self, report: HorizonReport):
        return replace(self, tau_max_bound=report.tau_max_bound, horizon=report)

    @cached_property
    def step_candidates(self):
        if self.tau_max_bound is None:
            raise LorentzLabError("台球表尚未通过视界校验")
        return _source_candidates(self, self.tau_max_bound)

    @cached_property
    def cell_candidates(self):
        if self.tau_max_bound is None:
            raise LorentzLabError("台球表尚未通过视界校验")
        return _cell_candidates(self, self.search_half_width)

    def to_dict(self):
        return {
            "disks": [{"center": [d.center.x, d.center.y], "radius": d.radius} for d in self.disks],
            "min_gap": self.min_gap,
            "total_perimeter": self.total_perimeter,
            "free_area": self.free_area,
            "tau_max_bound": self.tau_max_bound,
            "fingerprint": self.fingerprint,
        }


@dataclass(frozen=True)
class PhasePoint:
    """边界相点 (i, ℓ, θ, φ)：圆盘编号、圆周角位置、出射角、所在格点"""
    disk_index: int
    theta: float
    phi: float
    cell: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not (0.0 <= self.theta < TWO_PI):
            raise ValueError(f"theta 超出 [0, 2π): {self.theta}")
        if not (-HALF_PI <= self.phi <= HALF_PI):
            raise ValueError(f"phi 超出 [-π/2, π/2]: {self.phi}")

    def position(self, table: BilliardTable) -> Vec2:
        """平面提升坐标"""
        d = table.disks[self.disk_index]
        return Vec2(d.center.x + self.cell[0] + d.radius * math.cos(self.theta),
                    d.center.y + self.cell[1] + d.radius * math.sin(self.theta))

    def velocity(self) -> Vec2:
        ang = self.theta + self.phi
        return Vec2(math.cos(ang), math.sin(ang))

    def reversed(self):
        """时间反演：出射角取反"""
        return PhasePoint(self.disk_index, self.theta, -self.phi, self.cell)

    @classmethod
    def from_boundary(cls, table, disk_index, point: Vec2, velocity: Vec2, cell=(0, 0)):
        """由边界点（相对所在格点）与出射速度构造相点"""
        d = table.disks[disk_index]
        offset = np.array([[point.x - cell[0] - d.center.x, point.y - cell[1] - d.center.y]])
        theta, phi = boundary_angles(offset, np.array([[velocity.x, velocity.y]]))
        return cls(disk_index, float(theta[0]), float(phi[0]), tuple(cell))


@dataclass(frozen=True)
class StepResult:
    """一次反射的结果"""
    next: PhasePoint
    flight: float
    shift: Tuple[int, int]


def validate_table(disks) -> BilliardTable:
    """
    校验圆盘表：所有格点平移后的闭圆盘两两不相交

    Raises:
        OverlappingObstacles: 给出冲突的障碍物对与平移量
    """
    disks = tuple(disks)
    if not disks:
        raise ValueError("圆盘列表不能为空")

    min_gap = math.inf
    for i, di in enumerate(disks):
        for j in range(i, len(disks)):
            dj = disks[j]
            for lx in (-1, 0, 1):
                for ly in (-1, 0, 1):
                    if i == j and lx == 0 and ly == 0:
                        continue
                    dist = math.hypot(dj.center.x + lx - di.center.x, dj.center.y + ly - di.center.y)
                    gap = dist - di.radius - dj.radius
                    if gap <= 0.0:
                        raise OverlappingObstacles(i, j, (lx, ly))
                    min_gap = min(min_gap, gap)

    free_area = 1.0 - sum(d.area for d in disks)
    if free_area <= 0.0:
        raise ValueError(f"自由区域面积必须为正: {free_area}")

    table = BilliardTable(
        disks=disks,
        min_gap=min_gap,
        total_perimeter=sum(d.perimeter for d in disks),
        free_area=free_area,
    )
    logger.info(f"台球表校验通过：{len(disks)} 个圆盘，最小间隙 {min_gap:.6f}")
    return table


def table_from_spec(spec) -> BilliardTable:
    """由 JSON 配置中的 disks 列表构造并校验台球表"""
    disks = [Disk(Vec2(float(d["center"][0]), float(d["center"][1])), float(d["radius"]))
             for d in spec["disks"]]
    return validate_table(disks)


def prepare_table(spec, seed, max_denominator=HORIZON_MAX_DENOMINATOR, mc_probes=HORIZON_PROBES,
                  probe_window=HORIZON_PROBE_WINDOW) -> BilliardTable:
    """校验圆盘表与视界，返回带 τ_max 上界的可用台球表"""
    table = table_from_spec(spec)
    report = validate_horizon(table, max_denominator, mc_probes,
                              rng=make_rng(seed, PURPOSE_HORIZON, 0), probe_window=probe_window)
    return table.with_horizon(report)


def rational_directions(max_denominator):
    """枚举 |p|,|q| ≤ max_denominator 的本原方向（每条直线取一个代表）"""
    dirs = []
    for p in range(0, max_denominator + 1):
        for q in range(-max_denominator, max_denominator + 1):
            if p == 0 and q <= 0:
                continue
            if math.gcd(p, q) != 1:
                continue
            dirs.append((p, q))
    dirs.sort(key=lambda d: (max(abs(d[0]), abs(d[1])), d[0] ** 2 + d[1] ** 2, -d[0], -d[1]))
    return dirs


def corridor_width(table: BilliardTable, direction) -> float:
    """
    方向 (p,q) 上未被覆盖的最大走廊宽度，0 表示该方向被完全阻挡

    圆心沿法向投影以 1/√(p²+q²) 为周期，检查半径区间是否覆盖整个周期。
    """
    p, q = direction
    norm = math.hypot(p, q)
    period = 1.0 / norm
    nx, ny = -q / norm, p / norm
    intervals = []
    for d in table.disks:
        if 2.0 * d.radius >= period:
            return 0.0
        proj = (d.center.x * nx + d.center.y * ny) % period
        start = (proj - d.radius) % period
        intervals.append((start, start + 2.0 * d.radius))
    intervals.sort()

    widest = 0.0
    reach = intervals[0][1]
    for start, end in intervals[1:]:
        if start > reach:
            widest = max(widest, start - reach)
        reach = max(reach, end)
    widest = max(widest, intervals[0][0] + period - reach)
    return widest if widest > 1e-12 else 0.0


def validate_horizon(table: BilliardTable, max_denominator=HORIZON_MAX_DENOMINATOR,
                     mc_probes=HORIZON_PROBES, rng=None,
                     probe_window=HORIZON_PROBE_WINDOW) -> HorizonReport:
    """
    两级有限视界校验：有理方向走廊覆盖 + 蒙特卡洛最大自由飞行探测

    Raises:
        ValueError: max_denominator < 1 或 mc_probes < 1
        InfiniteHorizon: 存在未被阻挡的方向
    """
    if max_denominator < 1:
        raise ValueError("max_denominator 必须 ≥ 1")
    if mc_probes < 1:
        raise ValueError("mc_probes 必须 ≥ 1")

    directions = rational_directions(max_denominator)
    for direction in directions:
        width = corridor_width(table, direction)
        if width > 0.0:
            logger.warning(f"方向 {direction} 存在宽度 {width:.6g} 的走廊")
            raise InfiniteHorizon(direction, width)

    if rng is None:
        rng = np.random.default_rng()
    candidates = _source_candidates(table, float(probe_window))
    tau_max = 0.0
    done = 0
    while done < mc_probes:
        size = min(PROBE_BATCH, mc_probes - done)
        disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
        try:
            _, _, _, _, flight, _ = _step_with(table, disk, theta, phi, candidates, bound=None)
        except NoHitWithinHorizon:
            raise NoHitWithinHorizon(
                f"探测射线在 {probe_window} 个单元内没有命中障碍物，请增大 horizon_probe_window"
            )
        tau_max = max(tau_max, float(flight.max()))
        done += size

    bound = TAU_MAX_SAFETY * tau_max
    logger.info(f"视界有限：检查 {len(directions)} 个方向，{mc_probes} 次探测，"
                f"最大自由飞行 {tau_max:.6f}，上界 {bound:.6f}")
    return HorizonReport(
        finite=True,
        max_denominator=max_denominator,
        directions_checked=len(directions),
        probes=mc_probes,
        tau_max_observed=tau_max,
        tau_max_bound=bound,
    )


def _source_candidates(table: BilliardTable, reach: float):
    """
    每个出发圆盘的候选目标（圆盘编号 + 格点平移），按最大飞行距离剪枝，
    不足的位置用半径 0 的占位圆盘补齐。圆心坐标相对出发圆盘的圆心
    """
    w = int(math.ceil(reach)) + 1
    per_source = []
    for i, di in enumerate(table.disks):
        rows = []
        for k, dk in enumerate(table.disks):
            for lx in range(-w, w + 1):
                for ly in range(-w, w + 1):
                    if k == i and lx == 0 and ly == 0:
                        continue
                    cx, cy = dk.center.x + lx, dk.center.y + ly
                    if math.hypot(cx - di.center.x, cy - di.center.y) - di.radius - dk.radius <= reach:
                        rows.append((cx - di.center.x, cy - di.center.y, dk.radius, k, lx, ly))
        per_source.append(rows)
    return _pad_candidates(per_source)


def _cell_candidates(table: BilliardTable, half_width: int):
    """从基本单元内任意自由点出发的候选目标（单一来源）"""
    rows = []
    for k, dk in enumerate(table.disks):
        for lx in range(-half_width, half_width + 1):
            for ly in range(-half_width, half_width + 1):
                rows.append((dk.center.x + lx, dk.center.y + ly, dk.radius, k, lx, ly))
    return _pad_candidates([rows])


def _pad_candidates(per_source):
    kmax = max(len(rows) for rows in per_source)
    n = len(per_source)
    centers = np.zeros((n, kmax, 2))
    radii = np.zeros((n, kmax))
    disk = np.zeros((n, kmax), dtype=np.int64)
    shift = np.zeros((n, kmax, 2), dtype=np.int64)
    for i, rows in enumerate(per_source):
        if not rows:
            continue
        arr = np.array(rows)
        m = len(rows)
        centers[i, :m] = arr[:, 0:2]
        radii[i, :m] = arr[:, 2]
        disk[i, :m] = arr[:, 3].astype(np.int64)
        shift[i, :m] = arr[:, 4:6].astype(np.int64)
    return centers, radii, disk, shift


def _real(x):
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(np.float64)


def boundary_vectors(table: BilliardTable, disk, theta, phi):
    """
    (θ, φ) → 碰撞点相对圆心的位移与出射速度

    保持输入的浮点类型，传入 np.longdouble 时整条链路都以扩展精度计算
    """
    disk = np.asarray(disk, dtype=np.int64).reshape(-1)
    theta = _real(theta).reshape(-1)
    phi = _real(phi).reshape(-1)
    offset = table.radii[disk][:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    ang = theta + phi
    return offset, np.stack([np.cos(ang), np.sin(ang)], axis=1)


def boundary_angles(offset, velocity):
    """位移与出射速度 → (θ, φ)，只在输出时调用"""
    theta = np.mod(np.arctan2(offset[:, 1], offset[:, 0]), TWO_PI)
    theta = np.where(theta >= TWO_PI, 0.0, theta)
    phi = np.arctan2(offset[:, 0] * velocity[:, 1] - offset[:, 1] * velocity[:, 0],
                     offset[:, 0] * velocity[:, 0] + offset[:, 1] * velocity[:, 1])
    return theta, np.clip(phi, -HALF_PI, HALF_PI)


def _hit_and_reflect(table, origins, directions, source, candidates, bound):
    """
    origins 与候选圆心处于同一坐标系（步进时相对出发圆心，自由出发时为单元坐标）

    Returns:
        (disk, offset, incoming, outgoing, flight, shift)
    """
    centers, radii, cand_disk, cand_shift = candidates
    t, k = ray_disks_first_hit(origins, directions, centers[source], radii[source])
    if not np.all(np.isfinite(t)):
        raise NoHitWithinHorizon(f"{int(np.sum(~np.isfinite(t)))} 条射线在搜索窗口内没有命中")
    if bound is not None and np.any(t > bound):
        raise HorizonBoundExceeded(float(t.max()), bound)

    new_disk = cand_disk[source, k]
    shift = cand_shift[source, k]
    radius = radii[source, k]
    offset = (origins - centers[source, k]) + t[:, None] * directions
    # 投影回圆周
    offset = offset * (radius / np.hypot(offset[:, 0], offset[:, 1]))[:, None]
    normal = offset / radius[:, None]
    vn = np.sum(directions * normal, axis=1)
    out = directions - 2.0 * vn[:, None] * normal
    out = out / np.hypot(out[:, 0], out[:, 1])[:, None]
    return new_disk, offset, directions, out, t, shift


def _step_with(table, disk, theta, phi, candidates, bound):
    disk = np.asarray(disk, dtype=np.int64).reshape(-1)
    offset, velocity = boundary_vectors(table, disk, theta, phi)
    return _hit_and_reflect(table, offset, velocity, disk, candidates, bound)


def step_vectors(table: BilliardTable, disk, offset, velocity):
    """
    笛卡尔形式的批量环面台球映射

    状态为 (圆盘编号, 碰撞点相对圆心的位移, 出射速度)，多步迭代时不经过角度，
    时间反演即对 incoming 取负

    Returns:
        (disk, offset, incoming, outgoing, flight, shift)，incoming 为到达碰撞点时的飞行方向
    """
    disk = np.asarray(disk, dtype=np.int64).reshape(-1)
    return _hit_and_reflect(table, offset, velocity, disk, table.step_candidates,
                            table.tau_max_bound)


def reversal_errors(table: BilliardTable, disk, theta, phi, steps=REVERSAL_STEPS,
                    dtype=np.longdouble):
    """
    时间反演误差：前进 steps 步，对到达速度取负，再前进 steps 步并再次取负，
    与起点比较位移与速度

    默认以 np.longdouble 迭代同一套映射，64 位浮点在掠射轨道上的 15 步误差可达 1e-5

    Returns:
        每个起点的误差（float64），回不到原圆盘或格点时为 inf
    """
    if steps < 1:
        raise ValueError(f"步数必须 ≥ 1: {steps}")
    disk0 = np.asarray(disk, dtype=np.int64).reshape(-1)
    offset0, velocity0 = boundary_vectors(table, disk0, np.asarray(theta, dtype=dtype),
                                          np.asarray(phi, dtype=dtype))
    d, offset, velocity = disk0, offset0, velocity0
    shift = np.zeros((disk0.shape[0], 2), dtype=np.int64)
    for _ in range(2):
        for _ in range(steps):
            d, offset, incoming, velocity, _, s = step_vectors(table, d, offset, velocity)
            shift += s
        velocity = -incoming
    error = np.maximum(np.hypot(*(offset - offset0).T), np.hypot(*(velocity - velocity0).T))
    error = error.astype(np.float64)
    error[(d != disk0) | np.any(shift != 0, axis=1)] = np.inf
    return error


def step_arrays(table: BilliardTable, disk, theta, phi):
    """
    批量环面台球映射 T̄（角度进出）

    Returns:
        (disk, theta, phi, flight, shift)，shift 为 (R,2) 整数格点位移 Ψ
    """
    disk, offset, _, out, flight, shift = _step_with(table, disk, theta, phi,
                                                     table.step_candidates, table.tau_max_bound)
    theta, phi = boundary_angles(offset, out)
    return disk, theta, phi, flight, shift


def billiard_step(table: BilliardTable, p: PhasePoint) -> StepResult:
    """单个相点的一步台球映射，返回的相点已约化到基本单元"""
    if table.tau_max_bound is None:
        raise ValueError("台球表尚未通过视界校验")
    disk, offset, _, out, flight, shift = _step_with(table, [p.disk_index], [p.theta], [p.phi],
                                                     table.step_candidates, table.tau_max_bound)
    k = int(disk[0])
    center = table.disks[k].center
    point = Vec2(center.x + float(offset[0, 0]), center.y + float(offset[0, 1]))
    nxt = PhasePoint.from_boundary(table, k, point, Vec2(float(out[0, 0]), float(out[0, 1])))
    return StepResult(nxt, float(flight[0]), (int(shift[0, 0]), int(shift[0, 1])))


def phi_from_uniform(u):
    """cos φ 密度的逆分布函数：φ = arcsin(2u-1)"""
    return np.arcsin(np.clip(2.0 * np.asarray(u, dtype=np.float64) - 1.0, -1.0, 1.0))


def sample_mu_bar_arrays(table: BilliardTable, rng, size):
    """
    从不变测度 μ̄ 批量采样：圆盘按周长加权，θ 均匀，φ 服从 cos 密度
    """
    weights = table.radii / table.radii.sum()
    disk = rng.choice(table.n_disks, size=size, p=weights)
    theta = rng.uniform(0.0, TWO_PI, size=size)
    phi = phi_from_uniform(rng.uniform(0.0, 1.0, size=size))
    return disk.astype(np.int64), theta, phi


def sample_mu_bar(table: BilliardTable, rng) -> PhasePoint:
    disk, theta, phi = sample_mu_bar_arrays(table, rng, 1)
    return PhasePoint(int(disk[0]), float(theta[0]), float(phi[0]), (0, 0))


def inside_obstacle(table: BilliardTable, points):
    """判断基本单元内的点是否落在某个障碍物（含相邻平移）内部"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    inside = np.zeros(points.shape[0], dtype=bool)
    for d in table.disks:
        for lx in (-1, 0, 1):
            for ly in (-1, 0, 1):
                dx = points[:, 0] - d.center.x - lx
                dy = points[:, 1] - d.center.y - ly
                inside |= dx * dx + dy * dy < d.radius ** 2
    return inside


def sample_free_arrays(table: BilliardTable, rng, size):
    """
    (Q ∩ [0,1]²) × S¹ 上的均匀分布：格点单元内拒绝采样，速度方向均匀

    Returns:
        (points (size,2), angles (size,))
    """
    accepted = []
    count = 0
    while count < size:
        batch = max(64, int(1.5 * (size - count) / max(table.free_area, 1e-3)))
        pts = rng.uniform(0.0, 1.0, size=(batch, 2))
        pts = pts[~inside_obstacle(table, pts)]
        accepted.append(pts)
        count += pts.shape[0]
    points = np.concatenate(accepted)[:size]
    angles = rng.uniform(0.0, TWO_PI, size=size)
    return points, angles


def first_hit_from_free(table: BilliardTable, points, angles):
    """
    从基本单元内自由点出发飞到第一次反射

    Returns:
        (disk, theta, phi, flight, shift)
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    source = np.zeros(points.shape[0], dtype=np.int64)
    disk, offset, _, out, flight, shift = _hit_and_reflect(
        table, points, directions, source, table.cell_candidates, table.tau_max_bound)
    theta, phi = boundary_angles(offset, out)
    return disk, theta, phi, flight, shift

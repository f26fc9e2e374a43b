# -*- coding: utf-8 -*-
"""
二维几何基本运算
向量、线段、圆盘、射线与圆盘求交、线段相交判定
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config import EPS_GEOM, EPS_TANGENT, T_MIN


@dataclass(frozen=True)
class Vec2:
    """平面向量（单位：格点单元）"""
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Vec2 分量必须有限: ({self.x}, {self.y})")

    def __add__(self, other):
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, k):
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def dot(self, other):
        return self.x * other.x + self.y * other.y

    def cross(self, other):
        return self.x * other.y - self.y * other.x

    def norm(self):
        return math.hypot(self.x, self.y)

    def as_tuple(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class Segment:
    """闭线段 [a, b]"""
    a: Vec2
    b: Vec2

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("线段端点不能重合")

    @property
    def length(self):
        return (self.b - self.a).norm()

    def as_row(self):
        return (self.a.x, self.a.y, self.b.x, self.b.y)


@dataclass(frozen=True)
class Disk:
    """圆盘障碍物，圆心位于基本单元 [0,1)² 内"""
    center: Vec2
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"半径必须为正: {self.radius}")
        if not (0.0 <= self.center.x < 1.0 and 0.0 <= self.center.y < 1.0):
            raise ValueError(f"圆心必须位于 [0,1)² 内: {self.center.as_tuple()}")

    @property
    def perimeter(self):
        return 2.0 * math.pi * self.radius

    @property
    def area(self):
        return math.pi * self.radius ** 2


def ray_disk_first_hit(origin: Vec2, direction: Vec2, disk: Disk) -> Optional[Tuple[float, Vec2]]:
    """
    射线与圆盘的第一个交点

    切线擦边（判别式在容差内为 0）算作命中。

    Returns:
        (t, point) 或 None
    """
    assert abs(direction.norm() - 1.0) <= 1e-12, "方向必须是单位向量"
    w = origin - disk.center
    b = w.dot(direction)
    c = w.dot(w) - disk.radius ** 2
    disc = b * b - c
    if disc < -EPS_TANGENT:
        return None
    root = math.sqrt(max(disc, 0.0))
    for t in (-b - root, -b + root):
        if t > T_MIN:
            return t, origin + direction * t
    return None


def reflect(v: Vec2, normal: Vec2) -> Vec2:
    """镜面反射：v - 2<v,n>n"""
    assert abs(v.norm() - 1.0) <= 1e-12 and abs(normal.norm() - 1.0) <= 1e-12
    d = v.dot(normal)
    assert d <= 1e-12, "入射速度必须指向法向的反方向"
    return v - normal * (2.0 * d)


def as_segment_array(segments) -> np.ndarray:
    """把 Segment 列表或 (m,4) 数组统一成 float64 数组"""
    if isinstance(segments, np.ndarray):
        arr = np.asarray(segments, dtype=np.float64)
    else:
        arr = np.array([s.as_row() for s in segments], dtype=np.float64)
    return arr.reshape(-1, 4)


def _orient(px, py, qx, qy, rx, ry):
    # r 到直线 pq 的有向距离
    dx = qx - px
    dy = qy - py
    return (dx * (ry - py) - dy * (rx - px)) / np.sqrt(dx * dx + dy * dy)


def _sign(d):
    return np.where(d > EPS_GEOM, 1, np.where(d < -EPS_GEOM, -1, 0)).astype(np.int8)


def intersect_flags(A: np.ndarray, B: np.ndarray):
    """
    批量判定闭线段相交

    Args:
        A, B: 形状 (m,4) 的线段数组，每行 (x0, y0, x1, y1)

    Returns:
        (hit, proper, collinear) 三个布尔数组
        hit: 闭线段有公共点
        proper: 严格横截相交（四个方向判定都不为 0）
        collinear: 共线且重叠
    """
    ax0, ay0, ax1, ay1 = A[:, 0], A[:, 1], A[:, 2], A[:, 3]
    bx0, by0, bx1, by1 = B[:, 0], B[:, 1], B[:, 2], B[:, 3]
    s1 = _sign(_orient(bx0, by0, bx1, by1, ax0, ay0))
    s2 = _sign(_orient(bx0, by0, bx1, by1, ax1, ay1))
    s3 = _sign(_orient(ax0, ay0, ax1, ay1, bx0, by0))
    s4 = _sign(_orient(ax0, ay0, ax1, ay1, bx1, by1))
    box = (
        (np.minimum(ax0, ax1) <= np.maximum(bx0, bx1) + EPS_GEOM)
        & (np.minimum(bx0, bx1) <= np.maximum(ax0, ax1) + EPS_GEOM)
        & (np.minimum(ay0, ay1) <= np.maximum(by0, by1) + EPS_GEOM)
        & (np.minimum(by0, by1) <= np.maximum(ay0, ay1) + EPS_GEOM)
    )
    p12 = s1 * s2
    p34 = s3 * s4
    hit = (p12 <= 0) & (p34 <= 0) & box
    proper = hit & (p12 < 0) & (p34 < 0)
    collinear = hit & (s1 == 0) & (s2 == 0)
    return hit, proper, collinear


def segments_intersect(s1: Segment, s2: Segment) -> bool:
    """两条闭线段是否有公共点"""
    hit, _, _ = intersect_flags(as_segment_array([s1]), as_segment_array([s2]))
    return bool(hit[0])


def segment_crossing_point(s1: Segment, s2: Segment) -> Optional[Vec2]:
    """
    横截交点

    不相交或共线重叠时返回 None（共线重叠见 intersect_flags 的 collinear）
    """
    hit, _, collinear = intersect_flags(as_segment_array([s1]), as_segment_array([s2]))
    if not hit[0] or collinear[0]:
        return None
    r = s1.b - s1.a
    s = s2.b - s2.a
    denom = r.cross(s)
    if denom == 0.0:
        return None
    u = (s2.a - s1.a).cross(s) / denom
    return s1.a + r * min(max(u, 0.0), 1.0)


def ray_disks_first_hit(origins, directions, centers, radii):
    """
    批量射线与候选圆盘求最近交点

    Args:
        origins: (R,2) 起点
        directions: (R,2) 单位方向
        centers: (R,K,2) 候选圆心
        radii: (R,K) 候选半径（半径为 0 的占位圆盘永不命中）

    Returns:
        (t, k): 每条射线的最近距离（无命中为 inf）与候选下标
    """
    w = origins[:, None, :] - centers
    ahead = -np.sum(w * directions[:, None, :], axis=2)
    c = np.sum(w * w, axis=2) - radii ** 2
    disc = ahead * ahead - c
    disc = np.where((disc < 0.0) & (disc >= -EPS_TANGENT), 0.0, disc)
    valid = (disc >= 0.0) & (radii > 0.0) & (c > 0.0) & (ahead > 0.0)
    root = np.sqrt(np.where(valid, disc, 0.0))
    # 近根写成 c / (ahead + root)，与 ahead - root 相等但不相消
    t = c / np.where(valid, ahead + root, 1.0)
    t = np.where(valid & (t > T_MIN), t, np.inf)
    k = np.argmin(t, axis=1)
    return t[np.arange(t.shape[0]), k], k

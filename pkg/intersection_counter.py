# -*- coding: utf-8 -*-
"""
轨道自交计数
Vₙ（含对角线与相邻弦接触的有序对计数）、横截交叉数、连续时间 𝒱ₜ、障碍物层面的 V̂ₙ

网格加速计数器（粗筛：按网格单元分桶；精筛：逐对判定）与 O(n²) 穷举计数器结果完全一致。
"""
import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from config import MAX_PAIRS_PER_CHUNK, STREAM_BLOCK
from errors import CellSizeNonPositive
from geometry import as_segment_array, intersect_flags

logger = logging.getLogger(__name__)

# 分桶时包围盒外扩量，须大于判定容差 EPS_GEOM
BOX_PAD = 1e-9
KEY_OFFSET = 1 << 30
KEY_SHIFT = 1 << 31


@dataclass
class PairTally:
    """无序对统计"""
    adjacent: int = 0
    nonadjacent: int = 0
    crossings: int = 0
    degenerate: int = 0

    def __iadd__(self, other):
        self.adjacent += other.adjacent
        self.nonadjacent += other.nonadjacent
        self.crossings += other.crossings
        self.degenerate += other.degenerate
        return self


@dataclass
class IntersectionReport:
    """自交计数报告"""
    n: int
    v_n: int
    transversal: int
    v_t: int
    degenerate_events: int
    v_hat_n: Optional[int] = None
    t: Optional[float] = None

    @classmethod
    def from_tally(cls, n, tally: PairTally, v_hat_n=None, t=None):
        return cls(
            n=int(n),
            v_n=int(n + 2 * (tally.adjacent + tally.nonadjacent)),
            transversal=int(tally.nonadjacent),
            v_t=int(2 * tally.crossings),
            degenerate_events=int(tally.degenerate),
            v_hat_n=v_hat_n,
            t=t,
        )

    def counts(self):
        return (self.v_n, self.transversal, self.v_t, self.degenerate_events)

    def to_dict(self):
        return asdict(self)


def _tally_pairs(A, B, adjacent=False) -> PairTally:
    hit, proper, collinear = intersect_flags(A, B)
    tally = PairTally()
    if adjacent:
        tally.adjacent = int(hit.sum())
        tally.degenerate = int(collinear.sum())
    else:
        tally.nonadjacent = int(hit.sum())
        tally.crossings = int((hit & ~collinear).sum())
        tally.degenerate = int((hit & ~proper).sum())
    return tally


def count_brute(segments) -> IntersectionReport:
    """O(n²) 穷举计数，作为其他计数器的参照"""
    S = as_segment_array(segments)
    n = S.shape[0]
    tally = PairTally()
    if n >= 2:
        tally += _tally_pairs(S[:-1], S[1:], adjacent=True)
    for j in range(n - 2):
        rest = S[j + 2:]
        tally += _tally_pairs(np.broadcast_to(S[j], rest.shape), rest)
    return IntersectionReport.from_tally(n, tally)


def _cell_index(values, cell_size):
    return np.floor(values / cell_size).astype(np.int64)


def _cell_key(ix, iy):
    return (ix + KEY_OFFSET) * KEY_SHIFT + (iy + KEY_OFFSET)


def _chunks(counts, limit):
    """把按 owner 展开的配对切成每块不超过 limit 对（至少一个 owner）"""
    if counts.size == 0:
        return
    csum = np.cumsum(counts)
    start = 0
    while start < counts.size:
        base = csum[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(csum, base + limit, side="right"))
        stop = max(stop, start + 1)
        yield slice(start, stop)
        start = stop


def _expand(counts, target_start):
    offsets = np.cumsum(counts) - counts
    total = int(counts.sum())
    src = np.repeat(np.arange(counts.size), counts)
    tgt = np.repeat(target_start, counts) + (np.arange(total) - np.repeat(offsets, counts))
    return src, tgt


class SegmentGrid:
    """
    持久化的均匀网格

    按块加入弦，每次返回新弦与已有弦（及新弦之间）的相交统计。
    每对弦只在其包围盒交集左下角所在的单元里判定一次。
    """

    def __init__(self, cell_size):
        if not (cell_size is not None and cell_size > 0):
            raise CellSizeNonPositive(f"网格单元尺寸必须为正: {cell_size}")
        self.cell_size = float(cell_size)
        self.coords = np.empty((0, 4))
        self.keys = np.empty(0, dtype=np.int64)
        self.owners = np.empty(0, dtype=np.int64)
        self.tally = PairTally()

    @property
    def count(self):
        return int(self.coords.shape[0])

    def _bucket(self, rows, base):
        xmin = np.minimum(rows[:, 0], rows[:, 2])
        xmax = np.maximum(rows[:, 0], rows[:, 2])
        ymin = np.minimum(rows[:, 1], rows[:, 3])
        ymax = np.maximum(rows[:, 1], rows[:, 3])
        ix0 = _cell_index(xmin - BOX_PAD, self.cell_size)
        ix1 = _cell_index(xmax + BOX_PAD, self.cell_size)
        iy0 = _cell_index(ymin - BOX_PAD, self.cell_size)
        iy1 = _cell_index(ymax + BOX_PAD, self.cell_size)
        nx = ix1 - ix0 + 1
        ny = iy1 - iy0 + 1
        per = nx * ny
        seg, local = _expand(per, np.zeros(per.size, dtype=np.int64))
        ix = ix0[seg] + local // ny[seg]
        iy = iy0[seg] + local % ny[seg]
        return _cell_key(ix, iy), seg + base

    def _reference_key(self, lo, hi):
        c = self.coords
        rx = np.maximum(np.minimum(c[lo, 0], c[lo, 2]), np.minimum(c[hi, 0], c[hi, 2]))
        ry = np.maximum(np.minimum(c[lo, 1], c[lo, 3]), np.minimum(c[hi, 1], c[hi, 3]))
        return _cell_key(_cell_index(rx - BOX_PAD, self.cell_size),
                         _cell_index(ry - BOX_PAD, self.cell_size))

    def _judge(self, a, b, key) -> PairTally:
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keep = hi - lo >= 2
        lo, hi, key = lo[keep], hi[keep], key[keep]
        keep = self._reference_key(lo, hi) == key
        lo, hi = lo[keep], hi[keep]
        if lo.size == 0:
            return PairTally()
        return _tally_pairs(self.coords[lo], self.coords[hi])

    def add(self, segments) -> PairTally:
        rows = as_segment_array(segments)
        m = rows.shape[0]
        if m == 0:
            return PairTally()
        base = self.count
        tally = PairTally()

        if base > 0:
            tally += _tally_pairs(self.coords[-1:], rows[:1], adjacent=True)
        if m >= 2:
            tally += _tally_pairs(rows[:-1], rows[1:], adjacent=True)
        self.coords = np.vstack([self.coords, rows])

        keys, owners = self._bucket(rows, base)
        order = np.argsort(keys, kind="stable")
        keys, owners = keys[order], owners[order]

        # 新弦之间
        boundary = np.flatnonzero(np.diff(keys)) + 1
        group_end = np.repeat(np.append(boundary, keys.size),
                              np.diff(np.concatenate([[0], boundary, [keys.size]])))
        counts = group_end - np.arange(keys.size) - 1
        for sl in _chunks(counts, MAX_PAIRS_PER_CHUNK):
            src, tgt = _expand(counts[sl], np.arange(keys.size)[sl] + 1)
            src += sl.start
            tally += self._judge(owners[src], owners[tgt], keys[src])

        # 新弦与已有弦
        if self.keys.size:
            left = np.searchsorted(self.keys, keys, side="left")
            right = np.searchsorted(self.keys, keys, side="right")
            counts = right - left
            for sl in _chunks(counts, MAX_PAIRS_PER_CHUNK):
                src, tgt = _expand(counts[sl], left[sl])
                src += sl.start
                tally += self._judge(owners[src], self.owners[tgt], keys[src])

        merged_keys = np.concatenate([self.keys, keys])
        merged_owners = np.concatenate([self.owners, owners])
        order = np.argsort(merged_keys, kind="stable")
        self.keys = merged_keys[order]
        self.owners = merged_owners[order]
        self.tally += tally
        return tally

    def report(self) -> IntersectionReport:
        return IntersectionReport.from_tally(self.count, self.tally)


def default_cell_size(rows):
    lengths = np.hypot(rows[:, 2] - rows[:, 0], rows[:, 3] - rows[:, 1])
    longest = float(lengths.max()) if lengths.size else 0.0
    return longest if longest > 0 else 1.0


def count_grid(segments, cell_size=None, block=STREAM_BLOCK) -> IntersectionReport:
    """网格加速计数，结果与 count_brute 逐项相等"""
    S = as_segment_array(segments)
    if cell_size is None:
        cell_size = default_cell_size(S)
    grid = SegmentGrid(cell_size)
    for start in range(0, S.shape[0], block):
        grid.add(S[start:start + block])
    return grid.report()


def prefix_reports(segment_blocks: Iterable, checkpoints, cell_size) -> dict:
    """
    流式计数：依次送入弦块，在前缀长度等于检查点时记录报告

    Args:
        segment_blocks: 依次产生 (m,4) 弦数组的可迭代对象
        checkpoints: 递增的前缀长度
    """
    pending = sorted(set(int(c) for c in checkpoints if int(c) > 0))
    grid = SegmentGrid(cell_size)
    out = {}
    for rows in segment_blocks:
        rows = as_segment_array(rows)
        pos = 0
        while pos < rows.shape[0]:
            room = rows.shape[0] - pos
            if pending:
                room = min(room, pending[0] - grid.count)
            room = min(room, STREAM_BLOCK)
            grid.add(rows[pos:pos + room])
            pos += room
            while pending and grid.count == pending[0]:
                out[pending.pop(0)] = grid.report()
    return out


def count_v_hat(trajectory) -> int:
    """
    V̂ₙ = Σ_{0≤j,k≤n-1} 1{(Iⱼ,Sⱼ)=(Iₖ,Sₖ)}，即各组大小的平方和
    """
    n = trajectory.n
    keys = np.column_stack([trajectory.disk[:n], trajectory.cells[:n]])
    keys = keys[keys[:, 0] >= 0]
    if keys.shape[0] == 0:
        return 0
    _, counts = np.unique(keys, axis=0, return_counts=True)
    return int(np.sum(counts.astype(np.int64) ** 2))


def count_continuous(trajectory, t, cell_size=None) -> int:
    """𝒱ₜ = 2 × 截至时间 t 的横截交点数（不含相邻弦的公共反射点）"""
    rows = trajectory.segment_array_up_to(t)
    if rows.shape[0] < 3:
        return 0
    return count_grid(rows, cell_size=cell_size).v_t


def count_trajectory(trajectory, method="grid", cell_size=None) -> IntersectionReport:
    """整条轨道的完整报告（含 V̂ₙ 与全时长 𝒱ₜ）"""
    rows = trajectory.segments()
    if method == "brute":
        report = count_brute(rows)
    else:
        report = count_grid(rows, cell_size=cell_size)
    report.v_hat_n = count_v_hat(trajectory)
    report.t = trajectory.duration
    if report.degenerate_events:
        logger.warning(f"轨道 {trajectory.seed} 出现 {report.degenerate_events} 次退化相交")
    return report

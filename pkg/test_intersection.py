# -*- coding: utf-8 -*-
"""
自交计数测试：手工折线、网格计数与穷举计数一致、流式前缀计数、V̂ₙ 与 𝒱ₜ
"""
import math

import numpy as np

from acceptance_suite import hand_fixtures
from billiard import prepare_table, sample_mu_bar, sample_mu_bar_arrays
from errors import CellSizeNonPositive
from intersection_counter import (SegmentGrid, count_brute, count_continuous, count_grid,
                                  count_trajectory, count_v_hat, prefix_reports)
from rng_streams import make_rng
from trajectory import Trajectory, generate, generate_batch

REFERENCE = {"disks": [{"center": [0.0, 0.0], "radius": 0.45},
                       {"center": [0.5, 0.5], "radius": 0.2}]}
SEED = 20240601

_table = None


def reference_table():
    global _table
    if _table is None:
        _table = prepare_table(REFERENCE, SEED, max_denominator=12, mc_probes=100_000)
    return _table


def polyline_trajectory(points):
    """由折线顶点构造一条轨道（只用于计数测试）"""
    points = np.asarray(points, dtype=np.float64)
    steps = points[1:] - points[:-1]
    flights = np.hypot(steps[:, 0], steps[:, 1])
    velocities = np.vstack([steps / flights[:, None], steps[-1:] / flights[-1]])
    m = points.shape[0]
    return Trajectory(np.zeros(m, dtype=np.int64), np.zeros(m), np.zeros(m),
                      np.zeros((m, 2), dtype=np.int64), flights, points, velocities)


def random_trajectories(count, n, index):
    table = reference_table()
    disk, theta, phi = sample_mu_bar_arrays(table, make_rng(SEED, 0, index), count)
    cells = np.zeros((count, 2), dtype=np.int64)
    return generate_batch(table, disk, theta, phi, cells, n)


def test_hand_fixtures():
    """手工折线"""
    print("=" * 60)
    print("测试手工折线计数")
    print("=" * 60)

    for name, segments, expected in hand_fixtures():
        for report in (count_brute(segments), count_grid(segments)):
            got = (report.v_n, report.transversal, report.v_t)
            assert got == expected, f"{name}: {got} != {expected}"
        print(f"  {name}: {expected}")

    # U 形折线：首尾两条弦不相交，只有对角线与相邻对
    report = count_brute(np.array([[0, 0, 1, 0], [1, 0, 1, 1], [1, 1, 2, 1]], dtype=float))
    assert report.v_n == 3 + 2 * 2
    print("✅ 手工折线通过")


def test_grid_matches_brute():
    """网格计数与穷举计数逐项相等"""
    print("\n" + "=" * 60)
    print("测试网格计数 = 穷举计数")
    print("=" * 60)

    for traj in random_trajectories(8, 400, 21):
        rows = traj.segments()
        brute = count_brute(rows)
        L = float(np.hypot(rows[:, 2] - rows[:, 0], rows[:, 3] - rows[:, 1]).max())
        for cell in (None, L / 4, L / 2, L, 2 * L):
            assert count_grid(rows, cell_size=cell).counts() == brute.counts()
        # 小块流式加入
        assert count_grid(rows, cell_size=L, block=37).counts() == brute.counts()
        assert brute.v_n >= brute.n
        print(f"  n={brute.n}: Vₙ={brute.v_n}，横截 {brute.transversal}")
    print("✅ 计数一致")


def test_translation_invariance():
    """整体平移不改变计数"""
    print("\n" + "=" * 60)
    print("测试平移不变性")
    print("=" * 60)

    for traj in random_trajectories(4, 300, 22):
        rows = traj.segments()
        base = count_grid(rows).counts()
        for dx, dy in ((5.0, -3.0), (-11.0, 7.0)):
            moved = rows + np.array([dx, dy, dx, dy])
            assert count_grid(moved).counts() == base
    print("✅ 平移不变")


def test_prefix_reports():
    """流式前缀计数与整段计数一致"""
    print("\n" + "=" * 60)
    print("测试流式前缀计数")
    print("=" * 60)

    traj = random_trajectories(1, 200, 23)[0]
    rows = traj.segments()
    blocks = [rows[:37], rows[37:137], rows[137:]]
    checkpoints = [10, 50, 137, 200]
    reports = prefix_reports(blocks, checkpoints, cell_size=0.5)
    assert sorted(reports) == checkpoints
    for n in checkpoints:
        assert reports[n].counts() == count_brute(rows[:n]).counts(), f"前缀 {n} 不一致"

    grid = SegmentGrid(0.5)
    total = 0
    for block in blocks:
        tally = grid.add(block)
        total += tally.adjacent + tally.nonadjacent
    assert grid.report().v_n == rows.shape[0] + 2 * total
    print("✅ 前缀计数一致")


def test_cell_size_validation():
    """网格单元尺寸必须为正"""
    print("\n" + "=" * 60)
    print("测试网格单元尺寸校验")
    print("=" * 60)

    rows = np.array([[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 1.0]])
    for bad in (0.0, -1.0):
        try:
            count_grid(rows, cell_size=bad)
        except CellSizeNonPositive:
            continue
        raise AssertionError(f"cell_size={bad} 应当被拒绝")
    print("✅ 非正尺寸被拒绝")


def test_v_hat():
    """障碍物层面的 V̂ₙ 与二重循环一致"""
    print("\n" + "=" * 60)
    print("测试 V̂ₙ")
    print("=" * 60)

    table = reference_table()
    traj = generate(table, sample_mu_bar(table, make_rng(SEED, 0, 24)), 300)
    n = traj.n
    naive = 0
    for j in range(n):
        for k in range(n):
            if traj.disk[j] == traj.disk[k] and np.array_equal(traj.cells[j], traj.cells[k]):
                naive += 1
    assert count_v_hat(traj) == naive
    assert naive >= n
    print(f"✅ V̂ₙ = {naive}（n = {n}）")


def test_continuous_count():
    """连续时间计数 𝒱ₜ"""
    print("\n" + "=" * 60)
    print("测试 𝒱ₜ")
    print("=" * 60)

    triangle = polyline_trajectory([[0, 0], [2, 0], [1, 1], [1, -1]])
    assert count_continuous(triangle, triangle.duration) == 2
    # 第三段还没有到达 y = 0
    assert count_continuous(triangle, 2.0 + math.sqrt(2.0) + 0.5) == 0
    assert count_continuous(triangle, 2.0 + math.sqrt(2.0) + 1.5) == 2
    assert count_continuous(triangle, 1.0) == 0

    table = reference_table()
    traj = generate(table, sample_mu_bar(table, make_rng(SEED, 0, 25)), 400)
    full = count_trajectory(traj)
    assert count_continuous(traj, traj.duration) == full.v_t
    # 一般位置的轨道没有共线重叠，横截对都计入 𝒱ₜ
    assert full.v_t == 2 * full.transversal
    values = [count_continuous(traj, t) for t in np.linspace(1.0, traj.duration, 12)]
    assert all(b >= a for a, b in zip(values, values[1:])), "𝒱ₜ 必须单调不减"
    assert all(v % 2 == 0 for v in values)
    assert full.v_hat_n is not None and full.t == traj.duration
    print(f"✅ 𝒱ₜ 序列 {values}")


if __name__ == "__main__":
    test_hand_fixtures()
    test_grid_matches_brute()
    test_translation_invariance()
    test_prefix_reports()
    test_cell_size_validation()
    test_v_hat()
    test_continuous_count()
    print("\n测试完成！")

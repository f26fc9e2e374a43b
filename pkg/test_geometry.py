# -*- coding: utf-8 -*-
"""
几何基本运算测试
"""
import math

import numpy as np

from geometry import (Disk, Segment, Vec2, as_segment_array, intersect_flags,
                      ray_disk_first_hit, ray_disks_first_hit, reflect, segment_crossing_point,
                      segments_intersect)


def seg(x0, y0, x1, y1):
    return Segment(Vec2(x0, y0), Vec2(x1, y1))


def _oracle_intersect(s1, s2):
    """包围盒 + 面积符号的独立判定（无容差，只用于一般位置的随机线段）"""
    def area(a, b, c):
        return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)

    def on_box(a, b, c):
        return min(a.x, b.x) <= c.x <= max(a.x, b.x) and min(a.y, b.y) <= c.y <= max(a.y, b.y)

    d1 = area(s2.a, s2.b, s1.a)
    d2 = area(s2.a, s2.b, s1.b)
    d3 = area(s1.a, s1.b, s2.a)
    d4 = area(s1.a, s1.b, s2.b)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True
    return ((d1 == 0 and on_box(s2.a, s2.b, s1.a)) or (d2 == 0 and on_box(s2.a, s2.b, s1.b))
            or (d3 == 0 and on_box(s1.a, s1.b, s2.a)) or (d4 == 0 and on_box(s1.a, s1.b, s2.b)))


def test_ray_disk():
    """射线与圆盘求交"""
    print("=" * 60)
    print("测试射线与圆盘求交")
    print("=" * 60)

    # 圆心必须在 [0,1)² 内，场景整体平移 (0.5, 0.5)
    disk = Disk(Vec2(0.5, 0.5), 1.0)
    o = Vec2(0.5, 0.5)

    t, p = ray_disk_first_hit(Vec2(-2.0, 0.0) + o, Vec2(1.0, 0.0), disk)
    assert abs(t - 1.0) < 1e-12
    assert abs(p.x - (-1.0 + 0.5)) < 1e-12 and abs(p.y - 0.5) < 1e-12

    assert ray_disk_first_hit(Vec2(-2.0, 2.0) + o, Vec2(1.0, 0.0), disk) is None

    hit = ray_disk_first_hit(Vec2(-2.0, 1.0) + o, Vec2(1.0, 0.0), disk)
    assert hit is not None, "擦边应算作命中"
    assert abs(hit[0] - 2.0) < 1e-6

    rng = np.random.default_rng(1)
    small = Disk(Vec2(0.3, 0.6), 0.25)
    for _ in range(1000):
        ang = rng.uniform(0, 2 * math.pi)
        origin = Vec2(0.3 + 3 * math.cos(ang), 0.6 + 3 * math.sin(ang))
        back = rng.uniform(-0.3, 0.3) + ang + math.pi
        direction = Vec2(math.cos(back), math.sin(back))
        hit = ray_disk_first_hit(origin, direction, small)
        if hit is None:
            continue
        t, p = hit
        assert t > 0
        assert abs((p - small.center).norm() - small.radius) < 1e-10
    print("✅ 射线求交通过")


def test_batched_ray_hits():
    """批量求交与逐条求交一致"""
    print("\n" + "=" * 60)
    print("测试批量射线求交")
    print("=" * 60)

    disks = [Disk(Vec2(0.3, 0.6), 0.25), Disk(Vec2(0.8, 0.1), 0.15)]
    centers = np.array([[0.3, 0.6], [0.8, 0.1], [0.0, 0.0]])
    radii = np.array([0.25, 0.15, 0.0])
    rng = np.random.default_rng(4)
    origins = rng.uniform(-3, 3, size=(2000, 2))
    outside = np.ones(origins.shape[0], dtype=bool)
    for (cx, cy), r in zip(centers[:2], radii[:2]):
        outside &= np.hypot(origins[:, 0] - cx, origins[:, 1] - cy) > r + 1e-3
    origins = origins[outside]
    ang = rng.uniform(0, 2 * math.pi, size=origins.shape[0])
    directions = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    m = origins.shape[0]
    t, k = ray_disks_first_hit(origins, directions, np.broadcast_to(centers, (m, 3, 2)),
                               np.broadcast_to(radii, (m, 3)))
    hits = 0
    for i in range(m):
        found = [(h[0], j) for j, d in enumerate(disks)
                 for h in [ray_disk_first_hit(Vec2(*origins[i]), Vec2(*directions[i]), d)]
                 if h is not None]
        if not found:
            assert np.isinf(t[i])
            continue
        best, j = min(found)
        assert abs(t[i] - best) < 1e-9 and k[i] == j
        hits += 1
    assert hits > 0

    wide = origins.astype(np.longdouble)
    t_wide, k_wide = ray_disks_first_hit(wide, directions.astype(np.longdouble),
                                         np.broadcast_to(centers, (m, 3, 2)),
                                         np.broadcast_to(radii, (m, 3)))
    assert t_wide.dtype == np.longdouble
    finite = np.isfinite(t)
    assert np.array_equal(finite, np.isfinite(t_wide)) and np.array_equal(k[finite], k_wide[finite])
    assert np.all(np.abs(t_wide[finite] - t[finite]) < 1e-12)
    print(f"✅ {hits} 条命中射线一致")


def test_reflect():
    """镜面反射"""
    print("\n" + "=" * 60)
    print("测试镜面反射")
    print("=" * 60)

    out = reflect(Vec2(1.0, 0.0), Vec2(-1.0, 0.0))
    assert abs(out.x + 1.0) < 1e-12 and abs(out.y) < 1e-12

    out = reflect(Vec2(1.0, 0.0), Vec2(0.0, 1.0))
    assert abs(out.x - 1.0) < 1e-12 and abs(out.y) < 1e-12

    h = math.sqrt(2.0) / 2.0
    out = reflect(Vec2(h, -h), Vec2(0.0, 1.0))
    assert abs(out.x - h) < 1e-12 and abs(out.y - h) < 1e-12

    rng = np.random.default_rng(2)
    for _ in range(1000):
        a, b = rng.uniform(0, 2 * math.pi, size=2)
        v = Vec2(math.cos(a), math.sin(a))
        n = Vec2(math.cos(b), math.sin(b))
        if v.dot(n) > 0:
            n = -n
        out = reflect(v, n)
        assert abs(out.norm() - 1.0) < 1e-12
        assert abs(out.dot(n) + v.dot(n)) < 1e-12
        # 对 -n 再反射一次回到 v
        twice = reflect(out, -n)
        assert abs(twice.x - v.x) < 1e-12 and abs(twice.y - v.y) < 1e-12
    print("✅ 反射通过")


def test_segments_intersect():
    """闭线段相交判定"""
    print("\n" + "=" * 60)
    print("测试线段相交判定")
    print("=" * 60)

    assert segments_intersect(seg(0, 0, 1, 1), seg(0, 1, 1, 0))
    assert not segments_intersect(seg(0, 0, 1, 0), seg(0, 1, 1, 1))
    assert segments_intersect(seg(0, 0, 1, 0), seg(1, 0, 2, 1))

    assert segments_intersect(seg(0, 0, 2, 0), seg(1, 0, 3, 0))
    _, _, collinear = intersect_flags(as_segment_array([seg(0, 0, 2, 0)]),
                                      as_segment_array([seg(1, 0, 3, 0)]))
    assert collinear[0]
    assert not segments_intersect(seg(0, 0, 1, 0), seg(2, 0, 3, 0))

    rng = np.random.default_rng(3)
    A = rng.uniform(-1, 1, size=(10_000, 4))
    B = rng.uniform(-1, 1, size=(10_000, 4))
    hit, _, _ = intersect_flags(A, B)
    hit_swapped, _, _ = intersect_flags(B, A)
    assert np.array_equal(hit, hit_swapped), "判定必须对称"

    for i in range(10_000):
        s1 = seg(*A[i])
        s2 = seg(*B[i])
        assert bool(hit[i]) == _oracle_intersect(s1, s2), f"第 {i} 对与参照判定不一致"

    # 平移与旋转不变
    ang = 0.7
    c, s = math.cos(ang), math.sin(ang)
    R = np.array([[c, -s], [s, c]])

    def move(X):
        a = X[:, 0:2] @ R.T + np.array([3.25, -1.5])
        b = X[:, 2:4] @ R.T + np.array([3.25, -1.5])
        return np.hstack([a, b])

    moved, _, _ = intersect_flags(move(A[:2000]), move(B[:2000]))
    assert np.array_equal(moved, hit[:2000])
    print("✅ 相交判定通过")


def test_crossing_point():
    """横截交点"""
    print("\n" + "=" * 60)
    print("测试横截交点")
    print("=" * 60)

    p = segment_crossing_point(seg(0, 0, 2, 0), seg(1, -1, 1, 1))
    assert abs(p.x - 1.0) < 1e-12 and abs(p.y) < 1e-12

    assert segment_crossing_point(seg(0, 0, 1, 0), seg(2, 0, 3, 0)) is None
    assert segment_crossing_point(seg(0, 0, 1, 1), seg(1, 0, 2, 1)) is None
    assert segment_crossing_point(seg(0, 0, 2, 0), seg(1, 0, 3, 0)) is None

    p = segment_crossing_point(seg(0, 0, 1, 1), seg(0, 1, 1, 0))
    assert abs(p.x - 0.5) < 1e-12 and abs(p.y - 0.5) < 1e-12
    print("✅ 横截交点通过")


def test_invalid_values():
    """非法输入"""
    print("\n" + "=" * 60)
    print("测试非法输入")
    print("=" * 60)

    for bad in (lambda: Vec2(math.nan, 0.0), lambda: Vec2(0.0, math.inf),
                lambda: seg(1, 1, 1, 1), lambda: Disk(Vec2(0.5, 0.5), 0.0),
                lambda: Disk(Vec2(1.0, 0.5), 0.1)):
        try:
            bad()
        except ValueError:
            continue
        raise AssertionError("应当抛出 ValueError")
    print("✅ 非法输入被拒绝")


if __name__ == "__main__":
    test_ray_disk()
    test_batched_ray_hits()
    test_reflect()
    test_segments_intersect()
    test_crossing_point()
    test_invalid_values()
    print("\n测试完成！")

# -*- coding: utf-8 -*-
"""
常数计算测试
"""
import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import special, stats

from acceptance_suite import naive_a20
from billiard import prepare_table, sample_mu_bar_arrays
from constants_estimator import (Estimate, beta_from_sigma, compute_c, compute_c_prime, compute_J,
                                 dilog_integral_identity, dilog_real, discrete_sum_A20,
                                 discrete_sum_J, estimate_constants, estimate_mean_tau,
                                 estimate_sigma2, extrapolate_J, gaussian_prediction, j_integrand,
                                 llt_check, sigma_from_samples)
from errors import DegenerateCovariance, NegativeBracket
from rng_streams import PURPOSE_SIGMA, make_rng
from trajectory import cell_walk

REFERENCE = {"disks": [{"center": [0.0, 0.0], "radius": 0.45},
                       {"center": [0.5, 0.5], "radius": 0.2}]}
SEED = 20240601

_table = None


def reference_table():
    global _table
    if _table is None:
        _table = prepare_table(REFERENCE, SEED, max_denominator=12, mc_probes=100_000)
    return _table


def expect_error(error, func, *args, **kwargs):
    try:
        func(*args, **kwargs)
    except error:
        return
    raise AssertionError(f"{func.__name__} 应当抛出 {error.__name__}")


def naive_j_sum(n):
    """k₁ 也逐项枚举的四重循环"""
    total = Fraction(0)
    for k1 in range(1, n + 1):
        for r in range(1, n + 1):
            for l in range(1, n + 1):
                for s in range(1, n + 1):
                    if k1 + r + l + s <= n:
                        total += Fraction(1, r * l + r * s + s * l)
    return total / (n * n)


def test_j_integrand():
    """J 的被积函数"""
    print("=" * 60)
    print("测试 J 被积函数")
    print("=" * 60)

    assert abs(j_integrand(0.25, 0.25, 0.25) - 4.0 / 3.0) < 1e-15
    assert j_integrand(0.2, 0.3, 0.5) == 0.0
    assert j_integrand(0.6, 0.3, 0.5) == 0.0
    values = {j_integrand(*p) for p in itertools.permutations((0.1, 0.2, 0.3))}
    assert max(values) - min(values) < 1e-12
    print("✅ 被积函数取值与对称性正确")


def test_compute_J():
    """J 的数值积分"""
    print("\n" + "=" * 60)
    print("测试 J 的数值积分")
    print("=" * 60)

    J = compute_J(1e-5)
    assert J.value > 0 and J.se <= 1e-5
    assert abs(J.value - 1.17195) < 1e-4
    assert 1.0 + 2.0 * J.value - math.pi ** 2 / 6.0 > 0
    expect_error(ValueError, compute_J, 1e-7)

    # 与离散和的外推极限交叉校验，单个 n 的离散和还差 O(ln²n/n)
    sums = [discrete_sum_J(n) for n in (200, 400, 800, 1600)]
    assert sums == sorted(sums) and J.value - sums[-1] > 0.01
    limit = extrapolate_J()
    print(f"J_1600 = {sums[-1]:.6f}，外推极限 {limit.value:.6f} ± {limit.se:.1e}")
    assert abs(limit.value - J.value) <= 0.01
    assert limit.se < 0.01
    expect_error(ValueError, extrapolate_J, (200, 400, 800, 1600))
    expect_error(ValueError, extrapolate_J, (5, 200, 400, 800, 1600))
    print(f"✅ J = {J.value:.6f} ± {J.se:.1e}")


def test_discrete_sums():
    """离散和与逐项循环精确相等"""
    print("\n" + "=" * 60)
    print("测试离散和")
    print("=" * 60)

    for n in (10, 13):
        assert discrete_sum_A20(n, exact=True) == naive_a20(n)
        assert abs(discrete_sum_A20(n) - float(naive_a20(n))) < 1e-12
    assert discrete_sum_J(10, exact=True) == naive_j_sum(10)
    for n in (10, 17, 31):
        assert abs(discrete_sum_J(n) - float(discrete_sum_J(n, exact=True))) < 1e-12

    # (r,ℓ,s)=(1,1,1) 的权重 (n-3)/3
    n = 10
    k1_count = sum(1 for k1 in range(1, n + 1) if k1 + 3 <= n)
    assert Fraction(k1_count, 3) == Fraction(n - 3, 3)

    value = discrete_sum_A20(1500)
    assert abs(value - math.pi ** 2 / 12.0) <= 0.05 * math.pi ** 2 / 12.0
    expect_error(ValueError, discrete_sum_A20, 9)
    expect_error(ValueError, discrete_sum_J, 5)
    print(f"✅ A20(1500) = {value:.6f}，π²/12 = {math.pi ** 2 / 12:.6f}")


def test_dilog():
    """二重对数实部"""
    print("\n" + "=" * 60)
    print("测试二重对数")
    print("=" * 60)

    assert dilog_real(1.0) == math.pi ** 2 / 6.0
    assert abs(dilog_real(2.0) - math.pi ** 2 / 4.0) < 1e-9
    # 反演公式 Re Li₂(x) = π²/3 - ln²x/2 - Li₂(1/x)，scipy 的 spence(z) = Li₂(1-z)
    for x in (1.5, 3.0, 10.0):
        expected = math.pi ** 2 / 3.0 - 0.5 * math.log(x) ** 2 - float(special.spence(1.0 - 1.0 / x))
        assert abs(dilog_real(x) - expected) < 1e-9, f"x={x}"
    value, _ = dilog_integral_identity()
    assert abs(value - math.pi ** 2 / 6.0) < 1e-6
    expect_error(ValueError, dilog_real, 0.5)
    print(f"✅ 积分恒等式 {value:.9f}")


def test_closed_forms():
    """c、c′、β 的闭式关系"""
    print("\n" + "=" * 60)
    print("测试常数闭式")
    print("=" * 60)

    c = compute_c(0.25, np.eye(2), 4.0)
    assert abs(c.value - 1.0 / (8.0 * math.pi)) < 1e-15
    assert abs(compute_c(0.25, 4.0 * np.eye(2), 4.0).value - c.value / 4.0) < 1e-15

    c_prime, bracket = compute_c_prime(1.0, math.pi ** 2 / 12.0)
    assert abs(bracket - 1.0) < 1e-14 and abs(c_prime.value - 1.0) < 1e-14
    assert compute_c_prime(0.0, 1.0)[0].value == 0.0
    expect_error(NegativeBracket, compute_c_prime, 1.0, 0.0)

    sigma = np.array([[0.7, 0.05], [0.05, 0.4]])
    beta = beta_from_sigma(sigma)
    assert abs(beta * 2.0 * math.pi * math.sqrt(np.linalg.det(sigma)) - 1.0) < 1e-12
    assert gaussian_prediction(sigma, (0, 0), 200) == beta / 200
    assert gaussian_prediction(sigma, (1, 0), 200) < beta / 200

    # 误差传播：输入无误差时输出无误差
    assert compute_c(Estimate(0.2, 0.0), np.eye(2), 3.0).se == 0.0
    print("✅ 闭式关系正确")


def test_normalized_walk_shape():
    """Sₙ/√n 的分量峰度与相关系数"""
    print("\n" + "=" * 60)
    print("测试 Sₙ/√n 的正态形状")
    print("=" * 60)

    table = reference_table()
    replicas, n = 10_000, 400
    disk, theta, phi = sample_mu_bar_arrays(table, make_rng(SEED, PURPOSE_SIGMA, 400), replicas)
    S, _, _ = cell_walk(table, disk, theta, phi, n)
    Z = S / math.sqrt(n)

    kurt = stats.kurtosis(Z, axis=0, fisher=False)
    print(f"峰度 {np.round(kurt, 3).tolist()}")
    assert np.all((kurt >= 2.7) & (kurt <= 3.3))

    # 台球表关于 x → -x 对称，Σ² 的非对角元为 0
    rho = float(np.corrcoef(Z, rowvar=False)[0, 1])
    se = (1.0 - rho ** 2) / math.sqrt(replicas)
    print(f"相关系数 {rho:.4f}（3 倍标准误差 {3 * se:.4f}）")
    assert abs(rho) <= 3.0 * se
    assert np.all(np.abs(Z.mean(axis=0)) <= 4.0 * Z.std(axis=0) / math.sqrt(replicas))
    print("✅ 形状与二维正态一致")


def test_sigma_from_samples():
    """由样本计算协方差"""
    print("\n" + "=" * 60)
    print("测试协方差估计")
    print("=" * 60)

    rng = np.random.default_rng(5)
    Z = rng.normal(size=(20_000, 2)) * np.array([math.sqrt(2.0), math.sqrt(0.5)])
    est = sigma_from_samples(Z, 400, bootstrap=50, seed=1)
    assert abs(est.matrix[0, 0] - 2.0) <= 5 * est.standard_errors[0, 0]
    assert abs(est.matrix[1, 1] - 0.5) <= 5 * est.standard_errors[1, 1]
    assert abs(est.offdiag_z) <= 4.0
    assert est.replicas == 20_000 and est.n_used == 400
    scaled = est.scaled(4.0)
    assert abs(scaled.det - 16.0 * est.det) < 1e-9 * abs(est.det) * 16

    degenerate = np.column_stack([rng.normal(size=500), np.zeros(500)])
    expect_error(DegenerateCovariance, sigma_from_samples, degenerate, 400, 20, 1)
    print(f"✅ Σ̂² = {np.round(est.matrix, 4).tolist()}")


def test_monte_carlo_constants():
    """参照表上的蒙特卡洛常数"""
    print("\n" + "=" * 60)
    print("测试参照表常数")
    print("=" * 60)

    table = reference_table()
    tau = estimate_mean_tau(table, 100, 200, SEED)
    z = (tau.value - table.mean_free_path) / tau.se
    print(f"E[τ] = {tau.value:.5f} ± {tau.se:.5f}，π·面积/周长 = {table.mean_free_path:.5f}")
    assert abs(z) <= 4.0
    expect_error(ValueError, estimate_mean_tau, table, 1, 200, SEED)
    expect_error(ValueError, estimate_sigma2, table, 100, 50, SEED)

    report = estimate_constants(table, SEED, tau_replicas=100, tau_n=200, sigma_replicas=500,
                                sigma_n=100, bootstrap=50)
    det = report.sigma2.det
    expected_c = 2.0 * report.mean_tau.value / (math.pi * math.sqrt(det) * report.perimeter)
    assert abs(report.c.value - expected_c) < 1e-12
    assert abs(report.c_prime.value - report.c.value ** 2 * report.bracket) < 1e-12
    assert abs(report.beta * 2 * math.pi * math.sqrt(det) - 1.0) < 1e-12
    payload = report.to_dict()
    assert payload["seed_material"]["seed"] == SEED
    assert payload["continuous_coefficient"] > 0

    rows = llt_check(table, 100, 4096, SEED, report.sigma2)
    assert [r.N for r in rows] == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert abs(rows[0].predicted - report.beta / 100) < 1e-15
    print(f"✅ c = {report.c.value:.5f}，c′ = {report.c_prime.value:.5f}")


if __name__ == "__main__":
    test_j_integrand()
    test_compute_J()
    test_discrete_sums()
    test_dilog()
    test_closed_forms()
    test_normalized_walk_shape()
    test_sigma_from_samples()
    test_monte_carlo_constants()
    print("\n测试完成！")

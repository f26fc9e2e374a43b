# -*- coding: utf-8 -*-
"""
实验编排测试：配置校验、确定性、检查点与预算、拟合与各类实验的小规模运行
"""
import json
import math
import os
import shutil
import tempfile
from unittest import mock

import numpy as np
import pandas as pd

import campaign_runner
from campaign_runner import (CampaignConfig, fit_log_linear, indicator_covariance,
                             load_checkpoint, reconstruct_mean_vn, run_almost_sure,
                             run_continuous, run_decorrelation_probe, run_expectation,
                             run_pair_probability, run_variance, save_checkpoint)
from errors import BudgetExceeded, CheckpointMismatch
from report_generator import ReportGenerator

REFERENCE = {"disks": [{"center": [0.0, 0.0], "radius": 0.45},
                       {"center": [0.5, 0.5], "radius": 0.2}]}
SEED = 20240601


def make_config(**kwargs):
    kwargs.setdefault("seed", SEED)
    kwargs.setdefault("horizon_probes", 100_000)
    kwargs.setdefault("bootstrap", 50)
    return CampaignConfig(table_spec=REFERENCE, **kwargs)


def expect_error(error, func, *args, **kwargs):
    try:
        func(*args, **kwargs)
    except error as e:
        return e
    raise AssertionError(f"应当抛出 {error.__name__}")


def test_config_validation():
    """配置校验与配置哈希"""
    print("=" * 60)
    print("测试实验配置")
    print("=" * 60)

    expect_error(ValueError, CampaignConfig, table_spec=REFERENCE, n_grid=[64, 16])
    expect_error(ValueError, CampaignConfig, table_spec=REFERENCE, n_grid=[0, 16])
    expect_error(ValueError, CampaignConfig, table_spec=REFERENCE, t_grid=[2.0, 2.0])
    expect_error(ValueError, CampaignConfig, table_spec=REFERENCE, n_grid=[16], replicas=1)

    a = make_config(n_grid=[16, 64], replicas=10)
    b = make_config(n_grid=[16, 64], replicas=10, workers=4, budget=5.0, checkpoint_path="x")
    c = make_config(n_grid=[16, 64], replicas=10, seed=SEED + 1)
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash
    assert b.checkpoint_file("expectation") == os.path.join("x", "expectation.npz")
    assert a.checkpoint_file("expectation") is None
    assert a.run_hash("almost_sure", {"seeds": [1, 2]}) != a.run_hash("almost_sure", {"seeds": [7, 8]})
    assert a.run_hash("almost_sure") != a.run_hash("expectation")
    assert a.run_hash("expectation") == b.run_hash("expectation")
    print("✅ 配置校验通过")


def test_single_step_expectation():
    """n = 1 时 Vₙ 恒为 1"""
    print("\n" + "=" * 60)
    print("测试 n = 1")
    print("=" * 60)

    result = run_expectation(make_config(n_grid=[1], replicas=5))
    assert result.stats[0].mean == 1.0 and result.stats[0].variance == 0.0
    assert result.fit is None
    assert np.all(result.samples == 1)
    print("✅ V₁ = 1")


def test_fit_log_linear():
    """加权拟合恢复已知系数"""
    print("\n" + "=" * 60)
    print("测试 n ln n 拟合")
    print("=" * 60)

    x = np.array([100.0, 200.0, 400.0, 800.0, 1600.0])
    y = 0.3 * x * np.log(x) + 1.5 * x
    fit = fit_log_linear(x, y, np.full(x.size, 2.0))
    assert abs(fit.c_hat - 0.3) < 1e-8 and abs(fit.b_hat - 1.5) < 1e-7
    assert np.all(np.abs(fit.residuals) < 1e-6)
    assert fit.c_se > 0

    # se 为 0 的点取最小正 se 作为权重
    fit = fit_log_linear(x, y, np.array([0.0, 1.0, 1.0, 2.0, 2.0]))
    assert abs(fit.c_hat - 0.3) < 1e-8
    assert fit_log_linear([100.0], [1.0], [1.0]) is None
    print(f"✅ ĉ = {fit.c_hat:.6f}")


def test_small_helpers():
    """指示变量协方差与 E[Vₙ] 重建"""
    print("\n" + "=" * 60)
    print("测试辅助函数")
    print("=" * 60)

    x = np.array([0, 1, 1, 0, 1, 1, 1, 0])
    cov, se = indicator_covariance(x, x)
    assert abs(cov - x.var()) < 1e-12 and se > 0
    assert indicator_covariance(np.ones(10), x[:8].tolist() + [0, 1])[0] == 0.0

    assert reconstruct_mean_vn(3, [0.5, 0.25]) == 5.5
    assert reconstruct_mean_vn(7, np.zeros(10)) == 7.0
    assert reconstruct_mean_vn(4, np.ones(3)) == 4 + 2 * (3 + 2 + 1)
    print("✅ 辅助函数正确")


def test_determinism_across_workers():
    """结果与进程数无关"""
    print("\n" + "=" * 60)
    print("测试并行确定性")
    print("=" * 60)

    outputs = []
    for workers in (1, 2):
        result = run_expectation(make_config(n_grid=[8, 32], replicas=70, workers=workers))
        outputs.append(result)
    assert np.array_equal(outputs[0].samples, outputs[1].samples)
    assert json.dumps(outputs[0].to_dict(), sort_keys=True) == \
        json.dumps(outputs[1].to_dict(), sort_keys=True)
    assert outputs[0].samples.shape == (70, 2)
    assert np.all(outputs[0].samples[:, 1] >= outputs[0].samples[:, 0])
    print("✅ 1 与 2 个进程结果逐位相同")


def test_checkpoint_resume():
    """检查点续跑与配置不一致检测"""
    print("\n" + "=" * 60)
    print("测试检查点")
    print("=" * 60)

    with tempfile.TemporaryDirectory() as tmp:
        ckpt = os.path.join(tmp, "ckpt")
        config = make_config(n_grid=[8, 32], replicas=100, checkpoint_path=ckpt)
        full = run_expectation(config)
        path = config.checkpoint_file("expectation")
        done = load_checkpoint(path, "expectation", config.run_hash("expectation"))
        assert sorted(done) == [0, 1, 2, 3]

        save_checkpoint(path, "expectation", config.run_hash("expectation"), {0: done[0], 2: done[2]})
        resumed = run_expectation(make_config(n_grid=[8, 32], replicas=100, checkpoint_path=ckpt,
                                              resume=True))
        assert np.array_equal(full.samples, resumed.samples)

        other = make_config(n_grid=[8, 32], replicas=100, checkpoint_path=ckpt, resume=True,
                            seed=SEED + 5)
        expect_error(CheckpointMismatch, run_expectation, other)
        expect_error(CheckpointMismatch, load_checkpoint, path, "variance", config.run_hash("expectation"))
    print("✅ 续跑结果相同，不匹配的检查点被拒绝")


def test_budget_exceeded():
    """预算耗尽时写检查点并可续跑"""
    print("\n" + "=" * 60)
    print("测试时间预算")
    print("=" * 60)

    with tempfile.TemporaryDirectory() as tmp:
        ckpt = os.path.join(tmp, "ckpt")
        config = make_config(n_grid=[8, 16], replicas=40, checkpoint_path=ckpt, budget=1e-9)
        err = expect_error(BudgetExceeded, run_expectation, config)
        assert os.path.exists(err.checkpoint_path)

        resumed = run_expectation(make_config(n_grid=[8, 16], replicas=40, checkpoint_path=ckpt,
                                              resume=True))
        fresh = run_expectation(make_config(n_grid=[8, 16], replicas=40))
        assert np.array_equal(resumed.samples, fresh.samples)
    print("✅ 超出预算后续跑成功")


def test_resume_rejects_other_parameters():
    """换了种子列表的续跑被拒绝"""
    print("\n" + "=" * 60)
    print("测试续跑参数一致性")
    print("=" * 60)

    with tempfile.TemporaryDirectory() as tmp:
        ckpt = os.path.join(tmp, "ckpt")
        first = run_almost_sure(make_config(checkpoint_path=ckpt), min_exp=4, max_exp=6, seeds=[1, 2])
        again = run_almost_sure(make_config(checkpoint_path=ckpt, resume=True),
                                min_exp=4, max_exp=6, seeds=[1, 2])
        assert np.array_equal(first.samples, again.samples)

        expect_error(CheckpointMismatch, run_almost_sure,
                     make_config(checkpoint_path=ckpt, resume=True),
                     min_exp=4, max_exp=6, seeds=[7, 8])
        expect_error(CheckpointMismatch, run_almost_sure,
                     make_config(checkpoint_path=ckpt, resume=True),
                     min_exp=4, max_exp=7, seeds=[1, 2])

        other = run_almost_sure(make_config(), min_exp=4, max_exp=6, seeds=[7, 8])
        assert not np.array_equal(first.samples, other.samples)

        run_decorrelation_probe(make_config(replicas=50, checkpoint_path=ckpt), r=1, s=1, gaps=[0, 3])
        expect_error(CheckpointMismatch, run_decorrelation_probe,
                     make_config(replicas=50, checkpoint_path=ckpt, resume=True),
                     r=1, s=1, gaps=[0, 4])
    print("✅ 参数不同的检查点被拒绝")


def test_checkpoint_interval():
    """检查点按时间间隔写入，结束时补写一次"""
    print("\n" + "=" * 60)
    print("测试检查点写入频率")
    print("=" * 60)

    with tempfile.TemporaryDirectory() as tmp:
        counts = {}
        for interval in (3600.0, 0.0):
            ckpt = os.path.join(tmp, f"ckpt_{int(interval)}")
            config = make_config(n_grid=[8, 16], replicas=100, workers=1, checkpoint_path=ckpt,
                                 checkpoint_interval=interval)
            with mock.patch.object(campaign_runner, "save_checkpoint",
                                   wraps=campaign_runner.save_checkpoint) as saver:
                run_expectation(config)
            counts[interval] = saver.call_count
            done = load_checkpoint(config.checkpoint_file("expectation"), "expectation",
                                   config.run_hash("expectation"))
            assert sorted(done) == [0, 1, 2, 3]
        print(f"写入次数: {counts}")
        assert counts[3600.0] == 1
        assert counts[0.0] == 4
    print("✅ 长间隔只写一次，零间隔每波一次")


def test_budget_without_checkpoint_path():
    """未配置检查点目录时预算耗尽写入临时目录"""
    print("\n" + "=" * 60)
    print("测试无检查点目录的预算耗尽")
    print("=" * 60)

    err = expect_error(BudgetExceeded, run_expectation,
                       make_config(n_grid=[8, 16], replicas=40, budget=1e-9))
    folder = os.path.dirname(err.checkpoint_path)
    try:
        assert os.path.isabs(err.checkpoint_path)
        assert os.path.exists(err.checkpoint_path)
        assert os.path.basename(err.checkpoint_path) == "expectation.npz"
        assert os.path.abspath(folder).startswith(os.path.abspath(tempfile.gettempdir()))
    finally:
        shutil.rmtree(folder, ignore_errors=True)
    print(f"✅ 检查点写入 {err.checkpoint_path}")


def test_small_campaigns():
    """各类实验的小规模运行"""
    print("\n" + "=" * 60)
    print("测试小规模实验")
    print("=" * 60)

    variance = run_variance(make_config(n_grid=[16, 32], replicas=40))
    assert all(s.ratio is None and s.variance >= 0 for s in variance.stats)

    continuous = run_continuous(make_config(t_grid=[2.0, 4.0, 8.0], replicas=24))
    means = [s.mean for s in continuous.stats]
    assert means == sorted(means) and continuous.fit is not None
    assert np.all(continuous.samples % 2 == 0)

    almost = run_almost_sure(make_config(), min_exp=4, max_exp=7, seeds=[1, 2])
    assert len(almost.series) == 8
    for entry in almost.series:
        n = entry["n"]
        assert abs(entry["v_n_ratio"] - entry["v_n"] / (n * math.log(n))) < 1e-12
    times = [e["t"] for e in almost.series if e["seed"] == 1]
    assert times == sorted(times)
    assert len(almost.diagnostics["finals"]) == 2

    # 相邻弦总是共享反射点
    decor = run_decorrelation_probe(make_config(replicas=50), r=1, s=1, gaps=[0, 3])
    assert decor.diagnostics["p_first"] == 1.0
    assert all(e["covariance"] == 0.0 for e in decor.series)

    pairs = run_pair_probability(make_config(replicas=60), [1, 2, 5])
    assert pairs.series[0]["probability"] == 1.0
    assert [e["n"] for e in pairs.series] == [1, 2, 5]
    assert pairs.diagnostics["reconstructed_mean_vn"]["n"] == 6
    assert pairs.diagnostics["reconstructed_mean_vn"]["value"] >= 6 + 2 * 5

    with tempfile.TemporaryDirectory() as tmp:
        reports = ReportGenerator(tmp)
        for result in (variance, continuous, almost, decor, pairs):
            paths = reports.write_campaign(result)
            assert all(os.path.exists(p) for p in paths)
            json.dumps(result.to_dict())
        df = pd.read_csv(os.path.join(tmp, "campaign_continuous.csv"))
        assert list(df.columns) == ["t", "statistic", "value"]
        df = pd.read_csv(os.path.join(tmp, "campaign_variance.csv"))
        assert list(df.columns) == ["n", "statistic", "value"]
    print("✅ 小规模实验完成")


if __name__ == "__main__":
    test_config_validation()
    test_single_step_expectation()
    test_fit_log_linear()
    test_small_helpers()
    test_determinism_across_workers()
    test_checkpoint_resume()
    test_budget_exceeded()
    test_resume_rejects_other_parameters()
    test_checkpoint_interval()
    test_budget_without_checkpoint_path()
    test_small_campaigns()
    print("\n测试完成！")

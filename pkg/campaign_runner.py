# -*- coding: utf-8 -*-
"""
蒙特卡洛实验编排
Vₙ 的期望与方差曲线、连续时间 𝒱ₜ、单条轨道几乎必然收敛、去相关探测、单对相交概率

副本按固定大小切块，每块的随机流只由 (种子, 用途, 块编号) 决定；
结果按块编号归并，与进程数无关。检查点按时间间隔写入，预算耗尽与结束时必写。
"""
import hashlib
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from sklearn.linear_model import LinearRegression

from billiard import BilliardTable, prepare_table, sample_free_arrays, sample_mu_bar, sample_mu_bar_arrays
from config import (BOOTSTRAP_RESAMPLES, CHECKPOINT_INTERVAL, HORIZON_MAX_DENOMINATOR,
                    HORIZON_PROBES, HORIZON_PROBE_WINDOW, MAX_MATERIALIZED_STEPS, REPLICA_CHUNK,
                    STREAM_BLOCK)
from errors import BudgetExceeded, CheckpointMismatch
from geometry import intersect_flags
from intersection_counter import count_continuous, prefix_reports
from rng_streams import (PURPOSE_BOOTSTRAP, PURPOSE_FREE_START, PURPOSE_PROBE, PURPOSE_REPLICA,
                         make_rng, stream_key)
from trajectory import ensure_duration, generate_batch, generate_blocks, generate_free_batch
from worker_pool import chunk_sizes, run_tasks

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 2


@dataclass
class CampaignConfig:
    """
    一次实验的配置

    checkpoint_path 是检查点目录，每类实验一个文件；
    budget 为墙钟秒数（None 表示不限）；
    checkpoint_interval 为两次写检查点之间的最短秒数。
    """
    table_spec: Dict
    n_grid: List[int] = field(default_factory=list)
    t_grid: List[float] = field(default_factory=list)
    replicas: int = 2
    seed: int = 0
    budget: Optional[float] = None
    checkpoint_path: Optional[str] = None
    workers: int = 1
    bootstrap: int = BOOTSTRAP_RESAMPLES
    horizon_max_denominator: int = HORIZON_MAX_DENOMINATOR
    horizon_probes: int = HORIZON_PROBES
    horizon_probe_window: int = HORIZON_PROBE_WINDOW
    constants: Optional[object] = None
    resume: bool = False
    checkpoint_interval: float = CHECKPOINT_INTERVAL

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        self.t_grid = [float(t) for t in self.t_grid]
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError(f"n_grid 必须严格递增: {self.n_grid}")
        if any(n < 1 for n in self.n_grid):
            raise ValueError(f"n_grid 中的步数必须 ≥ 1: {self.n_grid}")
        if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ValueError(f"t_grid 必须严格递增: {self.t_grid}")
        if self.replicas < 2:
            raise ValueError(f"replicas 必须 ≥ 2: {self.replicas}")
        self._table = None
        self._started = time.monotonic()

    def table(self) -> BilliardTable:
        if self._table is None:
            self._table = prepare_table(self.table_spec, self.seed, self.horizon_max_denominator,
                                        self.horizon_probes, self.horizon_probe_window)
        return self._table

    def identity(self):
        """决定结果的字段（不含进程数、预算与检查点位置）"""
        return {
            "table": self.table_spec,
            "n_grid": self.n_grid,
            "t_grid": self.t_grid,
            "replicas": self.replicas,
            "seed": int(self.seed),
            "bootstrap": self.bootstrap,
            "horizon": [self.horizon_max_denominator, self.horizon_probes, self.horizon_probe_window],
        }

    @property
    def config_hash(self):
        payload = json.dumps(self.identity(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def run_hash(self, kind, params=None):
        """检查点身份：配置哈希之外再加上实验类型与该类实验自己的参数（种子列表、gaps 等）"""
        payload = dict(self.identity(), kind=kind, params=params or {})
        text = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def budget_expired(self):
        return self.budget is not None and time.monotonic() - self._started > self.budget

    def checkpoint_file(self, kind):
        if not self.checkpoint_path:
            return None
        return os.path.join(self.checkpoint_path, f"{kind}.npz")


@dataclass
class GridStat:
    """网格点（n 或 t）上的统计量"""
    x: float
    mean: float
    se: float
    mean_ci: tuple
    variance: float
    variance_ci: tuple
    ratio: Optional[float] = None
    ratio_ci: Optional[tuple] = None

    def to_dict(self):
        return {
            "x": self.x,
            "mean": self.mean,
            "se": self.se,
            "mean_ci": list(self.mean_ci),
            "variance": self.variance,
            "variance_ci": list(self.variance_ci),
            "ratio": self.ratio,
            "ratio_ci": list(self.ratio_ci) if self.ratio_ci is not None else None,
        }


@dataclass
class CurveFit:
    """E[V] = ĉ·x ln x + b̂·x 的加权最小二乘拟合"""
    c_hat: float
    b_hat: float
    covariance: np.ndarray
    residuals: np.ndarray
    residual_trend: float

    @property
    def c_se(self):
        return float(math.sqrt(max(self.covariance[0, 0], 0.0)))

    def to_dict(self):
        return {
            "c_hat": self.c_hat,
            "b_hat": self.b_hat,
            "c_se": self.c_se,
            "covariance": self.covariance.tolist(),
            "residuals": self.residuals.tolist(),
            "residual_trend": self.residual_trend,
        }


@dataclass
class CampaignResult:
    """一类实验的结果"""
    kind: str
    config_hash: str
    stats: List[GridStat] = field(default_factory=list)
    fit: Optional[CurveFit] = None
    series: List[Dict] = field(default_factory=list)
    diagnostics: Dict = field(default_factory=dict)
    constants: Optional[Dict] = None
    samples: Optional[np.ndarray] = None

    def long_rows(self):
        """长表：(x, statistic, value)"""
        rows = []
        for s in self.stats:
            rows.append((s.x, "mean", s.mean))
            rows.append((s.x, "se", s.se))
            rows.append((s.x, "mean_ci_low", s.mean_ci[0]))
            rows.append((s.x, "mean_ci_high", s.mean_ci[1]))
            rows.append((s.x, "variance", s.variance))
            rows.append((s.x, "variance_ci_low", s.variance_ci[0]))
            rows.append((s.x, "variance_ci_high", s.variance_ci[1]))
            if s.ratio is not None:
                rows.append((s.x, "ratio", s.ratio))
        for entry in self.series:
            for key, value in entry.items():
                if key != "n":
                    rows.append((entry["n"], key, value))
        return rows

    def to_dict(self):
        return {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "stats": [s.to_dict() for s in self.stats],
            "fit": self.fit.to_dict() if self.fit else None,
            "series": self.series,
            "diagnostics": self.diagnostics,
            "constants": self.constants,
        }


# ---------------------------------------------------------------- 检查点

def save_checkpoint(path, kind, config_hash, done: Dict[int, np.ndarray]):
    """原子写入：先写临时文件再改名"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    arrays = {
        "schema_version": np.array(CHECKPOINT_SCHEMA),
        "kind": np.array(kind),
        "config_hash": np.array(config_hash),
        "chunks": np.array(sorted(done), dtype=np.int64),
    }
    for index, values in done.items():
        arrays[f"chunk_{index}"] = values
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)
    logger.info(f"检查点已写入 {path}（{len(done)} 块）")


def load_checkpoint(path, kind, config_hash) -> Dict[int, np.ndarray]:
    """
    读取检查点

    Raises:
        CheckpointMismatch: 版本、实验类型或配置哈希不一致
    """
    with np.load(path, allow_pickle=False) as data:
        if int(data["schema_version"]) != CHECKPOINT_SCHEMA:
            raise CheckpointMismatch(f"检查点版本不符: {int(data['schema_version'])}")
        if str(data["kind"]) != kind:
            raise CheckpointMismatch(f"检查点属于实验 {str(data['kind'])}，不是 {kind}")
        if str(data["config_hash"]) != config_hash:
            raise CheckpointMismatch("检查点的配置哈希与当前配置不一致")
        return {int(i): np.array(data[f"chunk_{int(i)}"]) for i in data["chunks"]}


def _fallback_checkpoint(kind):
    folder = tempfile.mkdtemp(prefix="lorentz_lab_ckpt_")
    logger.warning(f"未配置检查点目录，{kind} 的检查点写入临时目录 {folder}")
    return os.path.join(folder, f"{kind}.npz")


def _run_chunks(config: CampaignConfig, kind, worker, tasks, params=None) -> np.ndarray:
    """
    分波执行块任务，返回按块编号拼接的结果

    tasks: [(块编号, 任务参数), ...]
    params: 该类实验自己的参数，计入检查点身份
    """
    path = config.checkpoint_file(kind)
    digest = config.run_hash(kind, params)
    done = {}
    if config.resume and path and os.path.exists(path):
        done = load_checkpoint(path, kind, digest)
        logger.info(f"从检查点恢复 {kind}：已完成 {len(done)}/{len(tasks)} 块")

    pending = [(i, t) for i, t in tasks if i not in done]
    wave = max(1, config.workers)
    last_save = time.monotonic()
    unsaved = False
    for start in range(0, len(pending), wave):
        if config.budget_expired():
            path = path or _fallback_checkpoint(kind)
            save_checkpoint(path, kind, digest, done)
            raise BudgetExceeded(path)
        batch = pending[start:start + wave]
        results = run_tasks(worker, [t for _, t in batch], config.workers)
        for (index, _), values in zip(batch, results):
            done[index] = values
        unsaved = True
        logger.info(f"{kind}：完成 {len(done)}/{len(tasks)} 块")
        if path and time.monotonic() - last_save >= config.checkpoint_interval:
            save_checkpoint(path, kind, digest, done)
            last_save = time.monotonic()
            unsaved = False
    if path and unsaved:
        save_checkpoint(path, kind, digest, done)
    return np.concatenate([done[i] for i, _ in tasks], axis=0)


# ---------------------------------------------------------------- 统计与拟合

def _percentile_ci(values):
    lo, hi = np.percentile(values, [2.5, 97.5])
    return float(lo), float(hi)


def grid_stats(samples, xs, seed, bootstrap=BOOTSTRAP_RESAMPLES, scale=None) -> List[GridStat]:
    """
    每个网格点的均值、方差与自助法置信区间

    Args:
        samples: (R, G) 每个副本在每个网格点的取值
        scale: 可选 (G,) 比值分母，给出 variance/scale
    """
    samples = np.asarray(samples, dtype=np.float64)
    R = samples.shape[0]
    rng = make_rng(seed, PURPOSE_BOOTSTRAP, 0)
    idx = rng.integers(0, R, size=(bootstrap, R))
    stats = []
    for g, x in enumerate(xs):
        col = samples[:, g]
        boot = col[idx]
        boot_mean = boot.mean(axis=1)
        boot_var = boot.var(axis=1, ddof=1)
        var = float(col.var(ddof=1))
        stat = GridStat(
            x=float(x),
            mean=float(col.mean()),
            se=float(col.std(ddof=1) / math.sqrt(R)),
            mean_ci=_percentile_ci(boot_mean),
            variance=var,
            variance_ci=_percentile_ci(boot_var),
        )
        if scale is not None and scale[g] > 0:
            stat.ratio = var / scale[g]
            stat.ratio_ci = _percentile_ci(boot_var / scale[g])
        stats.append(stat)
    return stats


def fit_log_linear(xs, means, ses) -> Optional[CurveFit]:
    """
    加权最小二乘拟合 mean ≈ ĉ·x ln x + b̂·x，权重 1/se²

    少于两个点时返回 None。
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(means, dtype=np.float64)
    se = np.asarray(ses, dtype=np.float64)
    if x.size < 2:
        return None
    positive = se[se > 0]
    floor = float(positive.min()) if positive.size else 1.0
    se = np.where(se > 0, se, floor)
    w = 1.0 / se ** 2
    X = np.column_stack([x * np.log(x), x])
    model = LinearRegression(fit_intercept=False)
    model.fit(X, y, sample_weight=w)
    covariance = np.linalg.inv(X.T @ (w[:, None] * X))
    residuals = (y - model.predict(X)) / se
    trend = 0.0
    if x.size >= 3 and np.std(residuals) > 0:
        trend = float(np.corrcoef(residuals, X[:, 0])[0, 1])
    return CurveFit(float(model.coef_[0]), float(model.coef_[1]), covariance, residuals, trend)


def _constants_dict(config):
    return config.constants.to_dict() if config.constants is not None else None


def _cell_size(table: BilliardTable):
    return 2.0 * table.mean_free_path


def _group_size(n):
    return max(1, MAX_MATERIALIZED_STEPS // max(n, 1))


# ---------------------------------------------------------------- 期望与方差

def _vn_chunk(task):
    table, seed, index, size, n_grid = task
    rng = make_rng(seed, PURPOSE_REPLICA, index)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
    n_max = max(n_grid)
    out = np.empty((size, len(n_grid)), dtype=np.int64)
    group = _group_size(n_max)
    for g0 in range(0, size, group):
        sl = slice(g0, min(size, g0 + group))
        cells = np.zeros((sl.stop - sl.start, 2), dtype=np.int64)
        trajectories = generate_batch(table, disk[sl], theta[sl], phi[sl], cells, n_max)
        for r, traj in enumerate(trajectories):
            reports = prefix_reports([traj.segments()], n_grid, _cell_size(table))
            out[sl.start + r] = [reports[n].v_n for n in n_grid]
    return out


def collect_vn(config: CampaignConfig, kind="expectation") -> np.ndarray:
    """每个副本在 n_grid 各点的 Vₙ，(replicas, G) 整数矩阵"""
    table = config.table()
    tasks = [(idx, (table, config.seed, idx, size, tuple(config.n_grid)))
             for idx, _, size in chunk_sizes(config.replicas, REPLICA_CHUNK)]
    return _run_chunks(config, kind, _vn_chunk, tasks)


def run_expectation(config: CampaignConfig) -> CampaignResult:
    """
    E_μ̄[Vₙ] 曲线与 ĉ·n ln n + b̂·n 拟合

    Raises:
        BudgetExceeded: 预算耗尽（检查点已写入）
    """
    if not config.n_grid:
        raise ValueError("n_grid 不能为空")
    samples = collect_vn(config, "expectation")
    stats = grid_stats(samples, config.n_grid, config.seed, config.bootstrap)
    fit = fit_log_linear(config.n_grid, [s.mean for s in stats], [s.se for s in stats])
    result = CampaignResult("expectation", config.config_hash, stats=stats, fit=fit,
                            constants=_constants_dict(config), samples=samples)
    if fit is not None:
        result.diagnostics["residual_trend"] = fit.residual_trend
        if config.constants is not None:
            c = config.constants.c.value
            result.diagnostics["c_ratio"] = fit.c_hat / c
            logger.info(f"拟合 ĉ = {fit.c_hat:.5f} ± {fit.c_se:.5f}，c = {c:.5f}，比值 {fit.c_hat / c:.4f}")
        if abs(fit.residual_trend) > 0.9:
            logger.warning(f"拟合残差与 n ln n 存在趋势（相关系数 {fit.residual_trend:.3f}）")
    return result


def run_variance(config: CampaignConfig) -> CampaignResult:
    """
    var_μ̄(Vₙ) 与 c′n² 之比

    比值向 1 靠近的趋势只记录日志，不作为失败条件。
    """
    if config.replicas < 1000:
        logger.warning(f"副本数 {config.replicas} < 1000，方差置信区间可能不可用")
    samples = collect_vn(config, "variance")
    scale = None
    if config.constants is not None:
        c_prime = config.constants.c_prime.value
        scale = [c_prime * n * n for n in config.n_grid]
    stats = grid_stats(samples, config.n_grid, config.seed, config.bootstrap, scale=scale)
    result = CampaignResult("variance", config.config_hash, stats=stats,
                            constants=_constants_dict(config), samples=samples)
    ratios = [s.ratio for s in stats if s.ratio is not None]
    if len(ratios) >= 2:
        approaching = abs(ratios[-1] - 1.0) <= abs(ratios[0] - 1.0)
        result.diagnostics["trend_toward_one"] = bool(approaching)
        if not approaching:
            logger.warning(f"方差比值未向 1 靠近: {[round(r, 4) for r in ratios]}")
        else:
            logger.info(f"方差比值: {[round(r, 4) for r in ratios]}")
    return result


# ---------------------------------------------------------------- 连续时间

def _continuous_chunk(task):
    table, seed, index, size, t_grid = task
    rng = make_rng(seed, PURPOSE_FREE_START, index)
    points, angles = sample_free_arrays(table, rng, size)
    t_max = max(t_grid)
    n_steps = int(1.25 * t_max / table.mean_free_path) + 64
    out = np.empty((size, len(t_grid)), dtype=np.int64)
    group = _group_size(n_steps)
    for g0 in range(0, size, group):
        sl = slice(g0, min(size, g0 + group))
        trajectories = generate_free_batch(table, points[sl], angles[sl], n_steps)
        for r, traj in enumerate(trajectories):
            traj = ensure_duration(table, traj, t_max)
            out[sl.start + r] = [count_continuous(traj, t, _cell_size(table)) for t in t_grid]
    return out


def run_continuous(config: CampaignConfig) -> CampaignResult:
    """
    均匀初始分布下的 E[𝒱ₜ] 与 ĉ·t ln t + b̂·t 拟合
    """
    if not config.t_grid:
        raise ValueError("t_grid 不能为空")
    table = config.table()
    tasks = [(idx, (table, config.seed, idx, size, tuple(config.t_grid)))
             for idx, _, size in chunk_sizes(config.replicas, REPLICA_CHUNK)]
    samples = _run_chunks(config, "continuous", _continuous_chunk, tasks)
    stats = grid_stats(samples, config.t_grid, config.seed, config.bootstrap)
    xs = [t for t in config.t_grid if t > 1.0]
    keep = [i for i, t in enumerate(config.t_grid) if t > 1.0]
    fit = fit_log_linear(xs, [stats[i].mean for i in keep], [stats[i].se for i in keep])
    result = CampaignResult("continuous", config.config_hash, stats=stats, fit=fit,
                            constants=_constants_dict(config), samples=samples)
    if fit is not None and config.constants is not None:
        target = config.constants.continuous_coefficient
        result.diagnostics["coefficient_ratio"] = fit.c_hat / target
        logger.info(f"连续时间首项系数 {fit.c_hat:.5f}，理论值 {target:.5f}")
    return result


# ---------------------------------------------------------------- 几乎必然收敛

def almost_sure_checkpoints(min_exp, max_exp):
    return [2 ** k for k in range(min_exp, max_exp + 1)]


def _almost_sure_task(task):
    table, seed, checkpoints = task
    rng = make_rng(seed, PURPOSE_REPLICA, 0)
    start = sample_mu_bar(table, rng)
    n_max = max(checkpoints)
    times = {}
    done = 0

    def blocks():
        nonlocal done
        for piece in generate_blocks(table, start, n_max, STREAM_BLOCK):
            for n in checkpoints:
                if done < n <= done + piece.n:
                    times[n] = float(piece.cumtime[n - done])
            done += piece.n
            yield piece.segments()

    reports = prefix_reports(blocks(), checkpoints, _cell_size(table))
    rows = []
    for n in checkpoints:
        t = times[n]
        rep = reports[n]
        rows.append([n, rep.v_n, rep.v_n / (n * math.log(n)), t, rep.v_t, rep.v_t / (t * math.log(t))])
    return np.array(rows, dtype=np.float64)[None, :, :]


def oscillation(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.max() - values.min()) if values.size else 0.0


def run_almost_sure(config: CampaignConfig, min_exp=10, max_exp=20, seeds=None) -> CampaignResult:
    """
    单条 μ̄ 轨道上 Vₙ/(n ln n) 与 𝒱ₜ/(t ln t) 的几何检查点序列

    seeds: 独立轨道的种子列表，默认 [config.seed, config.seed + 1]
    """
    if max_exp < min_exp:
        raise ValueError(f"max_exp 必须 ≥ min_exp: {min_exp}, {max_exp}")
    seeds = list(seeds) if seeds is not None else [config.seed, config.seed + 1]
    checkpoints = almost_sure_checkpoints(min_exp, max_exp)
    table = config.table()
    tasks = [(i, (table, int(s), tuple(checkpoints))) for i, s in enumerate(seeds)]
    data = _run_chunks(config, "almost_sure", _almost_sure_task, tasks,
                       params={"seeds": [int(s) for s in seeds], "min_exp": int(min_exp),
                               "max_exp": int(max_exp)})

    result = CampaignResult("almost_sure", config.config_hash, constants=_constants_dict(config),
                            samples=data)
    finals = []
    for i, s in enumerate(seeds):
        rows = data[i]
        for row in rows:
            result.series.append({
                "n": int(row[0]), "seed": int(s), "v_n": int(row[1]), "v_n_ratio": float(row[2]),
                "t": float(row[3]), "v_t": int(row[4]), "v_t_ratio": float(row[5]),
            })
        ratios = rows[:, 2]
        finals.append(float(ratios[-1]))
        result.diagnostics[f"seed_{s}"] = {
            "final": float(ratios[-1]),
            "final_continuous": float(rows[-1, 5]),
            "oscillation_first": oscillation(ratios[:3]),
            "oscillation_last": oscillation(ratios[-3:]),
            "stream": stream_key(s, PURPOSE_REPLICA, 0),
        }
    result.diagnostics["finals"] = finals
    if len(finals) >= 2:
        spread = (max(finals) - min(finals)) / (0.5 * (max(finals) + min(finals)))
        result.diagnostics["relative_spread"] = float(spread)
    if config.constants is not None:
        c = config.constants.c.value
        result.diagnostics["final_over_c"] = [f / c for f in finals]
        logger.info(f"Vₙ/(n ln n) 终值 {[round(f, 5) for f in finals]}，c = {c:.5f}")
    return result


# ---------------------------------------------------------------- 去相关与单对概率

def _chord_rows(traj, indices):
    pos = traj.positions
    idx = np.asarray(indices, dtype=np.int64)
    return np.hstack([pos[idx], pos[idx + 1]])


def _pair_indicator(traj, j, k):
    hit, _, _ = intersect_flags(_chord_rows(traj, [j]), _chord_rows(traj, [k]))
    return int(hit[0])


def _probe_chunk(task):
    table, seed, index, size, r, s, gaps = task
    rng = make_rng(seed, PURPOSE_PROBE, index)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
    n = r + max(gaps) + s + 1
    cells = np.zeros((size, 2), dtype=np.int64)
    out = np.empty((size, 1 + len(gaps)), dtype=np.int64)
    for i, traj in enumerate(generate_batch(table, disk, theta, phi, cells, n)):
        out[i, 0] = _pair_indicator(traj, 0, r)
        for g, gap in enumerate(gaps):
            out[i, 1 + g] = _pair_indicator(traj, r + gap, r + gap + s)
    return out


def indicator_covariance(x, y):
    """两个指示变量的协方差及其标准误差"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = (x - x.mean()) * (y - y.mean())
    se = float(z.std(ddof=1) / math.sqrt(z.size)) if z.size > 1 else 0.0
    return float(z.mean()), se


def run_decorrelation_probe(config: CampaignConfig, r: int, s: int, gaps) -> CampaignResult:
    """
    cov(1_{E₀,ᵣ}, 1_{E₀,ₛ}∘T̄^{r+ℓ}) 随间隔 ℓ 的变化（定性检查）
    """
    if r < 1 or s < 1:
        raise ValueError(f"r, s 必须 ≥ 1: r={r}, s={s}")
    gaps = [int(g) for g in gaps]
    if not gaps or min(gaps) < 0:
        raise ValueError(f"gaps 必须非空且非负: {gaps}")
    table = config.table()
    tasks = [(idx, (table, config.seed, idx, size, r, s, tuple(gaps)))
             for idx, _, size in chunk_sizes(config.replicas, REPLICA_CHUNK * 8)]
    data = _run_chunks(config, f"decorrelation_{r}_{s}", _probe_chunk, tasks,
                       params={"r": int(r), "s": int(s), "gaps": gaps})
    result = CampaignResult("decorrelation", config.config_hash, samples=data)
    for g, gap in enumerate(gaps):
        cov, se = indicator_covariance(data[:, 0], data[:, 1 + g])
        result.series.append({"n": gap, "covariance": cov, "se": se})
    result.diagnostics["p_first"] = float(data[:, 0].mean())
    logger.info(f"去相关探测 r={r}, s={s}: {[(e['n'], round(e['covariance'], 6)) for e in result.series]}")
    return result


def _pair_chunk(task):
    table, seed, index, size, k_max = task
    rng = make_rng(seed, PURPOSE_PROBE, (1 << 32) + index)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
    cells = np.zeros((size, 2), dtype=np.int64)
    out = np.empty((size, k_max), dtype=np.int64)
    for i, traj in enumerate(generate_batch(table, disk, theta, phi, cells, k_max + 1)):
        first = np.broadcast_to(_chord_rows(traj, [0]), (k_max, 4))
        hit, _, _ = intersect_flags(first, _chord_rows(traj, np.arange(1, k_max + 1)))
        out[i] = hit
    return out


def reconstruct_mean_vn(n, probabilities):
    """n + 2Σ_{k=1}^{n-1}(n-k)μ̄(E₀,ₖ)"""
    p = np.asarray(probabilities, dtype=np.float64)[:n - 1]
    k = np.arange(1, p.size + 1)
    return float(n + 2.0 * np.sum((n - k) * p))


def run_pair_probability(config: CampaignConfig, k_values) -> CampaignResult:
    """
    μ̄(E₀,ₖ) 的估计，报告 k·μ̄(E₀,ₖ) 与 c/2 的比较，
    并用 k = 1..K 的全部估计重建 E[V_{K+1}]
    """
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values or k_values[0] < 1:
        raise ValueError(f"k 必须 ≥ 1: {k_values}")
    k_max = k_values[-1]
    table = config.table()
    tasks = [(idx, (table, config.seed, idx, size, k_max))
             for idx, _, size in chunk_sizes(config.replicas, REPLICA_CHUNK * 8)]
    data = _run_chunks(config, "pair_probability", _pair_chunk, tasks,
                       params={"k_values": k_values})
    p = data.mean(axis=0)
    se = data.std(axis=0, ddof=1) / math.sqrt(data.shape[0])
    result = CampaignResult("pair_probability", config.config_hash, constants=_constants_dict(config))
    half_c = config.constants.c.value / 2.0 if config.constants is not None else None
    for k in k_values:
        entry = {"n": k, "probability": float(p[k - 1]), "se": float(se[k - 1]),
                 "k_times_probability": float(k * p[k - 1])}
        if half_c:
            entry["over_half_c"] = float(k * p[k - 1] / half_c)
        result.series.append(entry)
    result.diagnostics["reconstructed_mean_vn"] = {
        "n": k_max + 1,
        "value": reconstruct_mean_vn(k_max + 1, p),
    }
    return result

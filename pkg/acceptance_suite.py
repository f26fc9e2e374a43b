# -*- coding: utf-8 -*-
"""
验收套件
13 项验收条件，每项有 quick / full 两种规模；结果不含耗时，同一种子重复运行逐字节相同
"""
import logging
import math
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
from scipy import stats

from billiard import (prepare_table, reversal_errors, sample_mu_bar, sample_mu_bar_arrays,
                      step_arrays)
from campaign_runner import (CampaignConfig, load_checkpoint, run_almost_sure, run_continuous,
                             run_expectation, run_variance, save_checkpoint)
from config import J_EXTRAPOLATION_NS
from constants_estimator import (ConstantsReport, beta_from_sigma, compute_c, compute_c_prime,
                                 compute_J, dilog_integral_identity, dilog_real, discrete_sum_A20,
                                 discrete_sum_J, estimate_mean_tau, estimate_sigma2, extrapolate_J,
                                 llt_check)
from errors import LorentzLabError
from intersection_counter import count_brute, count_grid
from rng_streams import PURPOSE_CONSTANTS, PURPOSE_REPLICA, make_rng
from trajectory import generate, generate_batch

logger = logging.getLogger(__name__)

CRITERIA = [
    "discrete_sum", "j_cross", "dilog", "mean_free_path", "sigma2", "llt", "mean_growth",
    "variance_growth", "almost_sure", "continuous_growth", "counter_oracle", "dynamics", "determinism",
]

# 每项验收条件在两种规模下的参数
SCALES = {
    "quick": {
        "discrete_sum": {"n": 1500, "exact_n": [10, 17, 25, 40], "tol": 0.05},
        "j_cross": {"ns": list(J_EXTRAPOLATION_NS), "abs_tol": 1e-5, "tol": 0.01},
        "dilog": {"tol": 1e-6},
        "mean_free_path": {"replicas": 200, "n": 500, "k_se": 3.0},
        "sigma2": {"replicas": 4000, "n_small": 100, "n_large": 400, "k_se": 3.0},
        "llt": {"n": 200, "samples": 400_000, "band": [0.9, 1.1]},
        "mean_growth": {"n_grid": [512, 1024, 2048, 4096], "replicas": 64, "tol": 0.35},
        "variance_growth": {"n_grid": [625, 1250, 2500], "replicas": 400, "band": [0.3, 1.7]},
        "almost_sure": {"min_exp": 10, "max_exp": 15, "tol": 0.4, "seed_tol": 0.4},
        "continuous_growth": {"t_grid": [64.0, 128.0, 256.0, 512.0], "replicas": 96, "band": [0.6, 1.4]},
        "counter_oracle": {"trajectories": 20, "n": 500},
        "dynamics": {"reversal_starts": 50, "ks_samples": 5000, "iterates": 100, "speed_steps": 1000},
        "determinism": {"n_grid": [16, 64], "replicas": 96, "workers": [1, 2, 8]},
    },
    "full": {
        "discrete_sum": {"n": 1500, "exact_n": list(range(10, 41)), "tol": 0.05},
        "j_cross": {"ns": list(J_EXTRAPOLATION_NS), "abs_tol": 1e-5, "tol": 0.01},
        "dilog": {"tol": 1e-6},
        "mean_free_path": {"replicas": 1000, "n": 1000, "k_se": 3.0},
        "sigma2": {"replicas": 100_000, "n_small": 400, "n_large": 1600, "k_se": 3.0},
        "llt": {"n": 200, "samples": 10_000_000, "band": [0.9, 1.1]},
        "mean_growth": {"n_grid": [2 ** k for k in range(12, 18)], "replicas": 500, "tol": 0.2},
        "variance_growth": {"n_grid": [2500, 5000, 10_000], "replicas": 10_000, "band": [0.5, 1.5]},
        "almost_sure": {"min_exp": 10, "max_exp": 20, "tol": 0.25, "seed_tol": 0.25},
        "continuous_growth": {"t_grid": [256.0, 512.0, 1024.0, 2048.0, 4096.0], "replicas": 500,
                     "band": [0.75, 1.25]},
        "counter_oracle": {"trajectories": 200, "n": 2000},
        "dynamics": {"reversal_starts": 1000, "ks_samples": 100_000, "iterates": 100,
                     "speed_steps": 10_000},
        "determinism": {"n_grid": [64, 256, 1024], "replicas": 256, "workers": [1, 2, 8]},
    },
}


@dataclass
class CriterionResult:
    """单项验收结果"""
    index: int
    name: str
    passed: bool
    details: Dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self):
        return {"index": self.index, "name": self.name, "passed": self.passed,
                "details": self.details, "message": self.message}


@dataclass
class SuiteReport:
    """整个套件的结果"""
    scale: str
    seed: int
    results: List[CriterionResult] = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def first_failure(self) -> Optional[CriterionResult]:
        for r in self.results:
            if not r.passed:
                return r
        return None

    def to_dict(self):
        first = self.first_failure
        return {
            "scale": self.scale,
            "seed": self.seed,
            "passed": self.passed,
            "first_failure": first.name if first else None,
            "results": [r.to_dict() for r in self.results],
        }


def hand_fixtures():
    """
    手工构造的折线及其期望计数 (v_n, transversal, v_t)
    """
    return [
        ("single", np.array([[0.0, 0.0, 1.0, 0.0]]), (1, 0, 0)),
        ("two_adjacent", np.array([[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 1.0]]), (4, 0, 0)),
        ("triangle_crossing", np.array([[0.0, 0.0, 2.0, 0.0], [2.0, 0.0, 1.0, 1.0],
                                        [1.0, 1.0, 1.0, -1.0]]), (9, 1, 2)),
        ("zigzag", np.array([[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 2.0, 0.0],
                             [2.0, 0.0, 3.0, 1.0]]), (7, 0, 0)),
    ]


def naive_a20(n):
    """逐项四重循环（小 n 参照值）"""
    total = Fraction(0)
    for k1 in range(1, n + 1):
        for r in range(0, n - k1 + 1):
            for l in range(1, n - k1 - r + 1):
                for s in range(0, n - k1 - r - l + 1):
                    total += Fraction(1, (r + l) * (l + s))
    return total / (n * n)


class SuiteContext:
    """在各验收条件之间共享的台球表与常数估计"""

    def __init__(self, table_spec, seed, scale, workers=1, horizon=None,
                 inject_sigma2_scale=None, overrides=None):
        self.table_spec = table_spec
        self.seed = int(seed)
        self.scale = scale
        self.workers = workers
        self.horizon = horizon or {}
        self.inject_sigma2_scale = inject_sigma2_scale
        self.params = {k: dict(v) for k, v in SCALES[scale].items()}
        for name, values in (overrides or {}).items():
            self.params.setdefault(name, {}).update(values)
        self._table = None
        self.mean_tau = None
        self.sigma2 = None
        self.j_value = None

    def table(self):
        if self._table is None:
            self._table = prepare_table(self.table_spec, self.seed, **self.horizon)
        return self._table

    def get_mean_tau(self):
        if self.mean_tau is None:
            p = self.params["mean_free_path"]
            self.mean_tau = estimate_mean_tau(self.table(), p["replicas"], p["n"], self.seed, self.workers)
        return self.mean_tau

    def get_sigma2(self):
        if self.sigma2 is None:
            p = self.params["sigma2"]
            sigma2 = estimate_sigma2(self.table(), p["replicas"], p["n_small"], self.seed, self.workers)
            if self.inject_sigma2_scale is not None:
                logger.warning(f"测试钩子：Σ̂² 乘以 {self.inject_sigma2_scale}")
                sigma2 = sigma2.scaled(float(self.inject_sigma2_scale))
            self.sigma2 = sigma2
        return self.sigma2

    def get_j(self):
        if self.j_value is None:
            self.j_value = compute_J(self.params["j_cross"]["abs_tol"])
        return self.j_value

    def constants(self) -> ConstantsReport:
        table = self.table()
        mean_tau = self.get_mean_tau()
        sigma2 = self.get_sigma2()
        j_value = self.get_j()
        c = compute_c(mean_tau, sigma2, table.total_perimeter)
        c_prime, bracket = compute_c_prime(c, j_value)
        return ConstantsReport(mean_tau, sigma2, beta_from_sigma(sigma2), j_value, c, c_prime,
                               bracket, table.total_perimeter, table.mean_free_path,
                               {"seed": self.seed})

    def campaign(self, **kwargs) -> CampaignConfig:
        return CampaignConfig(table_spec=self.table_spec, seed=self.seed, workers=self.workers,
                              constants=self.constants(), **kwargs, **self._horizon_kwargs())

    def _horizon_kwargs(self):
        mapping = {"max_denominator": "horizon_max_denominator", "mc_probes": "horizon_probes",
                   "probe_window": "horizon_probe_window"}
        return {mapping[k]: v for k, v in self.horizon.items()}


def _within(value, target, tol):
    return abs(value - target) <= tol * abs(target)


def check_discrete_sum(ctx, p):
    value = discrete_sum_A20(p["n"])
    target = math.pi ** 2 / 12.0
    mismatched = [n for n in p["exact_n"] if discrete_sum_A20(n, exact=True) != naive_a20(n)]
    passed = _within(value, target, p["tol"]) and not mismatched
    return passed, {"value": value, "target": target, "exact_mismatches": mismatched}


def check_j_cross(ctx, p):
    j_value = ctx.get_j()
    limit = extrapolate_J(p["ns"])
    largest = max(p["ns"])
    diff = abs(j_value.value - limit.value)
    return diff <= p["tol"], {"J": j_value.value, "J_bound": j_value.se, "extrapolated": limit.value,
                              "extrapolation_spread": limit.se, "largest_n": largest,
                              "discrete_at_largest_n": discrete_sum_J(largest), "difference": diff}


def check_dilog(ctx, p):
    at_two = dilog_real(2.0)
    integral, _ = dilog_integral_identity()
    e1 = abs(at_two - math.pi ** 2 / 4.0)
    e2 = abs(integral - math.pi ** 2 / 6.0)
    return e1 <= p["tol"] and e2 <= p["tol"], {"dilog_2": at_two, "identity": integral,
                                               "error_dilog_2": e1, "error_identity": e2}


def check_mean_free_path(ctx, p):
    est = ctx.get_mean_tau()
    target = ctx.table().mean_free_path
    z = (est.value - target) / est.se if est.se > 0 else math.inf
    return abs(z) <= p["k_se"], {"estimate": est.value, "se": est.se, "target": target, "z": z}


def check_sigma2(ctx, p):
    small = ctx.get_sigma2()
    large = estimate_sigma2(ctx.table(), p["replicas"], p["n_large"], ctx.seed, ctx.workers)
    if ctx.inject_sigma2_scale is not None:
        large = large.scaled(float(ctx.inject_sigma2_scale))
    combined = np.sqrt(small.standard_errors ** 2 + large.standard_errors ** 2)
    agree = bool(np.all(np.abs(small.matrix - large.matrix) <= p["k_se"] * combined))
    offdiag = abs(small.offdiag_z) <= p["k_se"]
    positive = bool(np.all(small.eigenvalues > 0))
    return agree and offdiag and positive, {
        "sigma2_small": small.matrix.tolist(), "sigma2_large": large.matrix.tolist(),
        "offdiag_z": small.offdiag_z, "eigenvalues": small.eigenvalues.tolist(), "agree": agree,
    }


def check_llt(ctx, p):
    rows = llt_check(ctx.table(), p["n"], p["samples"], ctx.seed, ctx.get_sigma2(), ctx.workers)
    origin = rows[0]
    lo, hi = p["band"]
    return lo <= origin.ratio <= hi, {"rows": [r.to_dict() for r in rows], "ratio_origin": origin.ratio}


def check_mean_growth(ctx, p):
    config = ctx.campaign(n_grid=p["n_grid"], replicas=p["replicas"])
    result = run_expectation(config)
    c = config.constants.c.value
    ratio = result.fit.c_hat / c
    return abs(ratio - 1.0) <= p["tol"], {"c_hat": result.fit.c_hat, "c": c, "ratio": ratio,
                                          "b_hat": result.fit.b_hat}


def check_variance_growth(ctx, p):
    config = ctx.campaign(n_grid=p["n_grid"], replicas=p["replicas"])
    result = run_variance(config)
    ratios = [s.ratio for s in result.stats]
    lo, hi = p["band"]
    return lo <= ratios[-1] <= hi, {"ratios": ratios,
                                    "trend_toward_one": result.diagnostics.get("trend_toward_one")}


def check_almost_sure(ctx, p):
    config = ctx.campaign(replicas=2)
    result = run_almost_sure(config, p["min_exp"], p["max_exp"], seeds=[ctx.seed, ctx.seed + 1])
    c = config.constants.c.value
    finals = result.diagnostics["finals"]
    near_c = all(abs(f / c - 1.0) <= p["tol"] for f in finals)
    agree = result.diagnostics["relative_spread"] <= p["seed_tol"]
    return near_c and agree, {"finals": finals, "c": c,
                              "relative_spread": result.diagnostics["relative_spread"]}


def check_continuous_growth(ctx, p):
    config = ctx.campaign(t_grid=p["t_grid"], replicas=p["replicas"])
    result = run_continuous(config)
    ratio = result.diagnostics["coefficient_ratio"]
    lo, hi = p["band"]
    return lo <= ratio <= hi, {"coefficient": result.fit.c_hat,
                               "target": config.constants.continuous_coefficient, "ratio": ratio}


def check_counter_oracle(ctx, p):
    mismatches = []
    for name, segments, expected in hand_fixtures():
        for report in (count_brute(segments), count_grid(segments)):
            if (report.v_n, report.transversal, report.v_t) != expected:
                mismatches.append(name)
    table = ctx.table()
    rng = make_rng(ctx.seed, PURPOSE_REPLICA, 1 << 40)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, p["trajectories"])
    cells = np.zeros((p["trajectories"], 2), dtype=np.int64)
    for i, traj in enumerate(generate_batch(table, disk, theta, phi, cells, p["n"])):
        rows = traj.segments()
        if count_grid(rows).counts() != count_brute(rows).counts():
            mismatches.append(f"trajectory_{i}")
    return not mismatches, {"mismatches": mismatches, "trajectories": p["trajectories"], "n": p["n"]}


def check_dynamics(ctx, p):
    table = ctx.table()
    rng = make_rng(ctx.seed, PURPOSE_CONSTANTS, 1 << 40)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, p["reversal_starts"])
    reversal = reversal_errors(table, disk, theta, phi)
    worst = float(reversal.max())

    disk, theta, phi = sample_mu_bar_arrays(table, rng, p["ks_samples"])
    for _ in range(p["iterates"]):
        disk, theta, phi, _, _ = step_arrays(table, disk, theta, phi)
    ks = stats.kstest(0.5 * (np.sin(phi) + 1.0), "uniform")

    traj = generate(table, sample_mu_bar(table, rng), p["speed_steps"])
    k = np.arange(1, traj.n + 1)
    speed_err = np.abs(np.hypot(traj.velocities[:, 0], traj.velocities[:, 1]) - 1.0)
    moved = traj.positions[1:] - traj.positions[:-1] - traj.flights[:, None] * traj.velocities[:-1]
    drift = np.hypot(moved[:, 0], moved[:, 1])
    speed_ok = bool(np.all(speed_err[1:] <= 1e-10 * k)) and bool(np.all(drift <= 1e-9 * k))

    passed = worst <= 1e-6 and ks.pvalue > 0.01 and speed_ok
    return passed, {"reversal_error": worst, "reversal_median": float(np.median(reversal)),
                    "reversal_eps": float(np.finfo(np.longdouble).eps),
                    "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
                    "unit_speed": speed_ok}


def check_determinism(ctx, p):
    outputs = []
    workdir = tempfile.mkdtemp(prefix="lorentz_lab_")
    try:
        for workers in p["workers"]:
            config = CampaignConfig(table_spec=ctx.table_spec, n_grid=p["n_grid"],
                                    replicas=p["replicas"], seed=ctx.seed, workers=workers,
                                    **ctx._horizon_kwargs())
            result = run_expectation(config)
            outputs.append((result.samples.tobytes(), repr(result.to_dict())))
        identical = all(o == outputs[0] for o in outputs)

        ckpt = os.path.join(workdir, "ckpt")
        config = CampaignConfig(table_spec=ctx.table_spec, n_grid=p["n_grid"], replicas=p["replicas"],
                                seed=ctx.seed, checkpoint_path=ckpt, **ctx._horizon_kwargs())
        full = run_expectation(config)
        path = config.checkpoint_file("expectation")
        done = load_checkpoint(path, "expectation", config.run_hash("expectation"))
        partial = {i: v for i, v in done.items() if i < max(1, len(done) // 2)}
        save_checkpoint(path, "expectation", config.run_hash("expectation"), partial)
        config = CampaignConfig(table_spec=ctx.table_spec, n_grid=p["n_grid"], replicas=p["replicas"],
                                seed=ctx.seed, checkpoint_path=ckpt, resume=True,
                                **ctx._horizon_kwargs())
        resumed = run_expectation(config)
        resume_ok = np.array_equal(full.samples, resumed.samples) and \
            repr(full.to_dict()) == repr(resumed.to_dict())
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
    return identical and resume_ok, {"workers": p["workers"], "identical": identical,
                                     "resume_identical": bool(resume_ok)}


CHECKS = {
    "discrete_sum": check_discrete_sum,
    "j_cross": check_j_cross,
    "dilog": check_dilog,
    "mean_free_path": check_mean_free_path,
    "sigma2": check_sigma2,
    "llt": check_llt,
    "mean_growth": check_mean_growth,
    "variance_growth": check_variance_growth,
    "almost_sure": check_almost_sure,
    "continuous_growth": check_continuous_growth,
    "counter_oracle": check_counter_oracle,
    "dynamics": check_dynamics,
    "determinism": check_determinism,
}


def run_suite(table_spec, seed, scale="quick", workers=1, criteria=None, horizon=None,
              inject_sigma2_scale=None, overrides=None) -> SuiteReport:
    """
    依次运行验收条件

    Args:
        criteria: 要运行的条件名列表，None 表示全部
        horizon: prepare_table 的视界参数
        inject_sigma2_scale: 测试钩子，把 Σ̂² 整体乘以该因子
        overrides: {条件名: {参数: 值}} 覆盖规模参数
    """
    if scale not in SCALES:
        raise ValueError(f"未知规模: {scale}")
    selected = CRITERIA if not criteria else [c for c in CRITERIA if c in set(criteria)]
    unknown = set(criteria or []) - set(CRITERIA)
    if unknown:
        raise ValueError(f"未知验收条件: {sorted(unknown)}")
    ctx = SuiteContext(table_spec, seed, scale, workers, horizon, inject_sigma2_scale, overrides)
    report = SuiteReport(scale, int(seed))
    for name in selected:
        index = CRITERIA.index(name) + 1
        started = time.monotonic()
        try:
            passed, details = CHECKS[name](ctx, ctx.params[name])
            message = ""
        except LorentzLabError as e:
            passed, details, message = False, {}, f"{type(e).__name__}: {e}"
        result = CriterionResult(index, name, bool(passed), _plain(details), message)
        report.results.append(result)
        mark = "✅" if result.passed else "❌"
        logger.info(f"{mark} [{index:2d}] {name}（{time.monotonic() - started:.1f}s）")
    return report


def _plain(value):
    """转成可 JSON 序列化的纯 Python 值"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    return value

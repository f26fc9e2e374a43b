# -*- coding: utf-8 -*-
"""
常数的数值计算与交叉校验
E[τ]、Σ²、β、J、c、c′，离散和参照值与二重对数恒等式
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional

import numpy as np
from scipy import integrate, special
from sklearn.linear_model import LinearRegression

from billiard import BilliardTable, sample_mu_bar_arrays
from config import (BOOTSTRAP_RESAMPLES, J_ABS_TOL, J_EXTRAPOLATION_NS, SIGMA_N,
                    SIGMA_REPLICAS)
from errors import DegenerateCovariance, NegativeBracket, ToleranceNotMet
from rng_streams import (PURPOSE_BOOTSTRAP, PURPOSE_CONSTANTS, PURPOSE_LLT, PURPOSE_SIGMA,
                         make_rng, stream_key)
from trajectory import cell_walk
from worker_pool import chunk_sizes, run_tasks

logger = logging.getLogger(__name__)

PI2_6 = math.pi ** 2 / 6.0
MC_CHUNK = 4096


@dataclass(frozen=True)
class Estimate:
    """带标准误差的估计值"""
    value: float
    se: float = 0.0

    def to_dict(self):
        return {"value": self.value, "se": self.se}


@dataclass
class SigmaEstimate:
    """Σ² 的估计：Sₙ/√n 的经验协方差"""
    matrix: np.ndarray
    n_used: int
    replicas: int
    standard_errors: np.ndarray
    eigenvalues: np.ndarray = field(default=None)

    @property
    def det(self):
        return float(np.linalg.det(self.matrix))

    @property
    def offdiag_z(self):
        se = float(self.standard_errors[0, 1])
        return float(self.matrix[0, 1]) / se if se > 0 else math.inf

    def scaled(self, factor):
        """整体缩放（用于失败路径测试）"""
        return SigmaEstimate(self.matrix * factor, self.n_used, self.replicas,
                             self.standard_errors * factor, self.eigenvalues * factor)

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "n_used": self.n_used,
            "replicas": self.replicas,
            "standard_errors": self.standard_errors.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "det": self.det,
            "offdiag_z": self.offdiag_z,
        }


@dataclass
class ConstantsReport:
    """全部常数的汇总"""
    mean_tau: Estimate
    sigma2: SigmaEstimate
    beta: float
    j_value: Estimate
    c: Estimate
    c_prime: Estimate
    bracket: float
    perimeter: float
    mean_free_path: float
    seed_material: Dict = field(default_factory=dict)

    @property
    def continuous_coefficient(self):
        """E[𝒱ₜ] ~ 系数·t ln t 中的系数 2/(π√det Σ² Σ|∂Oᵢ|)"""
        return 2.0 / (math.pi * math.sqrt(self.sigma2.det) * self.perimeter)

    def to_dict(self):
        return {
            "mean_tau": self.mean_tau.to_dict(),
            "sigma2": self.sigma2.to_dict(),
            "beta": self.beta,
            "j_value": self.j_value.to_dict(),
            "c": self.c.to_dict(),
            "c_prime": self.c_prime.to_dict(),
            "bracket": self.bracket,
            "perimeter": self.perimeter,
            "mean_free_path": self.mean_free_path,
            "continuous_coefficient": self.continuous_coefficient,
            "seed_material": self.seed_material,
        }


def _mean_tau_chunk(task):
    table, n, seed, index, size = task
    rng = make_rng(seed, PURPOSE_CONSTANTS, index)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
    _, flight_sum, _ = cell_walk(table, disk, theta, phi, n)
    return flight_sum / n


def estimate_mean_tau(table: BilliardTable, replicas: int, n: int, seed: int, workers=1) -> Estimate:
    """
    E_μ̄[τ] 的蒙特卡洛估计：replicas 个 μ̄ 起点各走 n 步，以副本均值为批计算标准误差
    """
    if replicas < 2 or n < 1:
        raise ValueError(f"需要 replicas ≥ 2 且 n ≥ 1: replicas={replicas}, n={n}")
    tasks = [(table, n, seed, idx, size) for idx, _, size in chunk_sizes(replicas, MC_CHUNK)]
    # 每个副本的均值作为一批
    means = np.concatenate(run_tasks(_mean_tau_chunk, tasks, workers))
    estimate = Estimate(float(means.mean()), float(means.std(ddof=1) / math.sqrt(replicas)))
    logger.info(f"E[τ] = {estimate.value:.6f} ± {estimate.se:.2e}（{replicas}×{n} 次飞行）")
    return estimate


def _sigma_chunk(task):
    table, n, seed, index, size = task
    rng = make_rng(seed, PURPOSE_SIGMA, (n << 24) + index)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
    S, _, _ = cell_walk(table, disk, theta, phi, n)
    return S


def sigma_from_samples(Z, n, bootstrap=BOOTSTRAP_RESAMPLES, seed=0) -> SigmaEstimate:
    """由 Sₙ/√n 样本 (R,2) 计算协方差及自助法标准误差"""
    Z = np.asarray(Z, dtype=np.float64)
    R = Z.shape[0]
    matrix = np.cov(Z, rowvar=False, ddof=1)
    matrix = 0.5 * (matrix + matrix.T)
    rng = make_rng(seed, PURPOSE_BOOTSTRAP, n)
    boots = np.empty((bootstrap, 2, 2))
    for b in range(bootstrap):
        idx = rng.integers(0, R, size=R)
        boots[b] = np.cov(Z[idx], rowvar=False, ddof=1)
    se = boots.std(axis=0, ddof=1)
    eig = np.linalg.eigvalsh(matrix)
    if not np.all(eig > 0.0):
        raise DegenerateCovariance(matrix)
    return SigmaEstimate(matrix, int(n), int(R), se, eig)


def estimate_sigma2(table: BilliardTable, replicas: int, n: int, seed: int, workers=1,
                    bootstrap=BOOTSTRAP_RESAMPLES) -> SigmaEstimate:
    """
    Σ² 的估计：replicas 个 μ̄ 起点的 Sₙ/√n 经验协方差

    Raises:
        ValueError: n < 100
        DegenerateCovariance: 估计非正定
    """
    if n < 100:
        raise ValueError(f"n 必须 ≥ 100: {n}")
    if replicas < 2:
        raise ValueError(f"replicas 必须 ≥ 2: {replicas}")
    tasks = [(table, n, seed, idx, size) for idx, _, size in chunk_sizes(replicas, MC_CHUNK)]
    S = np.vstack(run_tasks(_sigma_chunk, tasks, workers))
    est = sigma_from_samples(S / math.sqrt(n), n, bootstrap=bootstrap, seed=seed)
    logger.info(f"Σ²(n={n}) = {est.matrix.tolist()}，特征值 {est.eigenvalues.tolist()}")
    return est


def j_integrand(u, v, w):
    """J 的被积函数 (1-(u+v+w))·1{u+v+w≤1}/(uv+uw+vw)"""
    s = u + v + w
    if s > 1.0:
        return 0.0
    return (1.0 - s) / (u * v + u * w + v * w)


def _j_reduced(x):
    # 径向变量积分后 J = K/2；K 在单纯形上按对称性化为 6 倍基本区域，
    # 再以顶点 (0,0,1) 处的 Duffy 变换把奇点消掉，内层积分有解析式。
    alpha = 1.0 - x * (1.0 - x)
    return -math.log1p(-alpha / (2.0 - x)) / alpha


def compute_J(abs_tol=J_ABS_TOL) -> Estimate:
    """
    J = ∫_{[0,1]³} (1-(u+v+w))1{u+v+w≤1}/(uv+uw+vw)

    Raises:
        ValueError: abs_tol < 1e-6
        ToleranceNotMet: 误差估计超过 abs_tol
    """
    if abs_tol < 1e-6:
        raise ValueError(f"abs_tol 必须 ≥ 1e-6: {abs_tol}")
    value, err = integrate.quad(_j_reduced, 0.0, 0.5, epsabs=abs_tol / 30.0, epsrel=0.0, limit=200)
    J = 3.0 * value
    bound = 3.0 * err
    if bound > abs_tol:
        raise ToleranceNotMet(bound, abs_tol)
    return Estimate(J, bound)


def _a20_terms(n):
    p = np.arange(1, n + 1, dtype=np.int64)[:, None]
    q = np.arange(1, n + 1, dtype=np.int64)[None, :]
    m = np.minimum(p, q)
    A = n - p - q
    l0 = np.maximum(1, 1 - A)
    cnt = m - l0 + 1
    inner = np.where(cnt > 0, cnt * A + (l0 + m) * cnt // 2, 0)
    return p, q, inner


def discrete_sum_A20(n: int, exact=False):
    """
    Σ_{k₁≥1,r≥0,ℓ≥1,s≥0, k₁+r+ℓ+s≤n} 1/((r+ℓ)(ℓ+s)) / n²

    代入 p=r+ℓ, q=ℓ+s 后对 ℓ 和 k₁ 的求和都有闭式，只剩 (p,q) 二重和。
    exact=True 时返回 Fraction。
    """
    if n < 10:
        raise ValueError(f"n 必须 ≥ 10: {n}")
    p, q, inner = _a20_terms(n)
    if exact:
        total = Fraction(0)
        pp, qq = np.nonzero(inner)
        for i, j in zip(pp, qq):
            total += Fraction(int(inner[i, j]), int((i + 1) * (j + 1)))
        return total / (n * n)
    return float(np.sum(inner / (p * q))) / (n * n)


def _j_level_sums(n_max):
    """
    G(m) = Σ_{r+ℓ+s=m} 1/(rℓ+rs+sℓ)，m < n_max

    固定 r 与 t=ℓ+s 后分母为 (ℓ-α)(β-ℓ)，α、β 是 x²-tx-rt 的两根，
    对 ℓ 的和化为 (2/√(t²+4rt))·(ψ(t-α) - ψ(1-α))
    """
    G = np.zeros(n_max)
    for r in range(1, n_max - 2):
        t = np.arange(2, n_max - r, dtype=np.float64)
        root = np.sqrt(t * t + 4.0 * r * t)
        neg_alpha = 2.0 * r * t / (root + t)
        G[r + 2:] += 2.0 / root * (special.digamma(t + neg_alpha) - special.digamma(1.0 + neg_alpha))
    return G


def _j_from_levels(G, n):
    m = np.arange(n, dtype=np.float64)
    return float(np.sum((n - m) * G[:n])) / (n * n)


def discrete_sum_J(n: int, exact=False):
    """
    Σ_{k₁,r,ℓ,s≥1, k₁+r+ℓ+s≤n} 1/(rℓ+rs+sℓ) / n²，k₁ 的个数 n-r-ℓ-s 作为权重

    收敛到 J 的速度为 O(ln²n / n)
    """
    if n < 10:
        raise ValueError(f"n 必须 ≥ 10: {n}")
    if exact:
        total = Fraction(0)
        for r in range(1, n):
            for l in range(1, n - r):
                for s in range(1, n - r - l):
                    total += Fraction(n - r - l - s, r * l + r * s + s * l)
        return total / (n * n)
    return _j_from_levels(_j_level_sums(n), n)


def extrapolate_J(ns=J_EXTRAPOLATION_NS) -> Estimate:
    """
    由若干 n 的离散和外推 J

    拟合 Jₙ = J + (a·ln²n + b·ln n + c)/n，截距即极限；
    se 取去掉最小 n 后重新拟合的截距变化

    Raises:
        ValueError: n 少于 5 个或有 n < 10
    """
    ns = sorted(int(n) for n in ns)
    if len(ns) < 5 or ns[0] < 10:
        raise ValueError(f"外推至少需要 5 个 ≥ 10 的 n: {ns}")
    G = _j_level_sums(ns[-1])
    x = np.array(ns, dtype=np.float64)
    y = np.array([_j_from_levels(G, n) for n in ns])
    log_n = np.log(x)
    X = np.column_stack([log_n ** 2 / x, log_n / x, 1.0 / x])

    limit = LinearRegression().fit(X, y).intercept_
    trimmed = LinearRegression().fit(X[1:], y[1:]).intercept_
    logger.info(f"离散和外推：n={ns}，J_n={np.round(y, 6).tolist()}，极限 {limit:.6f}")
    return Estimate(float(limit), float(abs(limit - trimmed)))


def _log_t_minus_one_integral(x):
    """∫₁ˣ log(t-1)/t dt"""
    if x == 1.0:
        return 0.0
    upper = min(x, 2.0)
    head, _ = integrate.quad(lambda t: 1.0 / t, 1.0, upper, weight="alg-loga", wvar=(0.0, 0.0),
                             epsabs=1e-13, epsrel=1e-13, limit=200)
    if x <= 2.0:
        return head
    # t = e^y：log(e^y - 1) = y + log(1 - e^{-y})
    a, b = math.log(2.0), math.log(x)
    smooth, _ = integrate.quad(lambda y: math.log1p(-math.exp(-y)), a, b,
                               epsabs=1e-13, epsrel=1e-13, limit=200)
    return head + 0.5 * (b * b - a * a) + smooth


def dilog_real(x: float) -> float:
    """
    x ≥ 1 时二重对数的实部 Re Li₂(x) = π²/6 - ∫₁ˣ log(t-1)/t dt
    """
    if x < 1.0:
        raise ValueError(f"x 必须 ≥ 1: {x}")
    return PI2_6 - _log_t_minus_one_integral(float(x))


def dilog_integral_identity(epsabs=1e-9):
    """∫₀¹ Re Li₂(1+1/u) du，理论值 π²/6"""
    value, err = integrate.quad(lambda u: dilog_real(1.0 + 1.0 / u), 0.0, 1.0,
                                epsabs=epsabs, epsrel=1e-10, limit=400)
    return value, err


def beta_from_sigma(sigma2) -> float:
    """β = 1/(2π√det Σ²)"""
    matrix = sigma2.matrix if isinstance(sigma2, SigmaEstimate) else np.asarray(sigma2)
    return 1.0 / (2.0 * math.pi * math.sqrt(float(np.linalg.det(matrix))))


def _det_se(sigma2):
    if not isinstance(sigma2, SigmaEstimate):
        return 0.0
    s = sigma2.matrix
    e = sigma2.standard_errors
    return math.sqrt((s[1, 1] * e[0, 0]) ** 2 + (s[0, 0] * e[1, 1]) ** 2 + (2 * s[0, 1] * e[0, 1]) ** 2)


def compute_c(mean_tau, sigma2, perimeter) -> Estimate:
    """
    c = 2E[τ]/(π√det Σ² Σ|∂Oᵢ|)，一阶误差传播
    """
    tau = mean_tau if isinstance(mean_tau, Estimate) else Estimate(float(mean_tau))
    matrix = sigma2.matrix if isinstance(sigma2, SigmaEstimate) else np.asarray(sigma2, dtype=float)
    det = float(np.linalg.det(matrix))
    if det <= 0 or perimeter <= 0:
        raise ValueError("Σ² 必须正定且周长为正")
    c = 2.0 * tau.value / (math.pi * math.sqrt(det) * perimeter)
    rel = 0.0
    if tau.value > 0:
        rel += (tau.se / tau.value) ** 2
    rel += (_det_se(sigma2) / (2.0 * det)) ** 2
    return Estimate(c, c * math.sqrt(rel))


def compute_c_prime(c, j_value):
    """
    c′ = c²(1+2J-π²/6)

    Returns:
        (c′ 估计, 括号项)
    Raises:
        NegativeBracket: 括号项 ≤ 0
    """
    c_est = c if isinstance(c, Estimate) else Estimate(float(c))
    j_est = j_value if isinstance(j_value, Estimate) else Estimate(float(j_value))
    bracket = 1.0 + 2.0 * j_est.value - PI2_6
    if bracket <= 0.0:
        raise NegativeBracket(bracket)
    value = c_est.value ** 2 * bracket
    se = math.sqrt((2.0 * c_est.value * bracket * c_est.se) ** 2
                   + (2.0 * c_est.value ** 2 * j_est.se) ** 2)
    return Estimate(value, se), bracket


@dataclass
class LltRow:
    N: tuple
    p_hat: float
    predicted: float
    ratio: float
    se: float

    def to_dict(self):
        return {"N": list(self.N), "p_hat": self.p_hat, "predicted": self.predicted,
                "ratio": self.ratio, "se": self.se}


LLT_TARGETS = ((0, 0), (1, 0), (0, 1), (1, 1))


def gaussian_prediction(sigma2, N, n) -> float:
    """β·exp(-⟨(Σ²)⁻¹N,N⟩/2n)/n"""
    matrix = sigma2.matrix if isinstance(sigma2, SigmaEstimate) else np.asarray(sigma2)
    N = np.asarray(N, dtype=np.float64)
    quad_form = float(N @ np.linalg.solve(matrix, N))
    return beta_from_sigma(matrix) * math.exp(-quad_form / (2.0 * n)) / n


def _llt_chunk(task):
    table, n, seed, index, size = task
    rng = make_rng(seed, PURPOSE_LLT, index)
    disk, theta, phi = sample_mu_bar_arrays(table, rng, size)
    S, _, _ = cell_walk(table, disk, theta, phi, n)
    return np.array([int(np.sum((S[:, 0] == a) & (S[:, 1] == b))) for a, b in LLT_TARGETS])


def llt_check(table: BilliardTable, n: int, samples: int, seed: int, sigma2,
              workers=1) -> List[LltRow]:
    """
    局部极限定理检验：P̂(Sₙ=N) 与高斯预测之比
    """
    if n < 100:
        raise ValueError(f"n 必须 ≥ 100: {n}")
    tasks = [(table, n, seed, idx, size) for idx, _, size in chunk_sizes(samples, MC_CHUNK)]
    hits = np.sum(run_tasks(_llt_chunk, tasks, workers), axis=0)
    rows = []
    for N, h in zip(LLT_TARGETS, hits):
        p_hat = float(h) / samples
        pred = gaussian_prediction(sigma2, N, n)
        se = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / samples) / pred
        rows.append(LltRow(N, p_hat, pred, p_hat / pred, se))
        logger.info(f"LLT N={N}: P̂={p_hat:.3e}，预测 {pred:.3e}，比值 {p_hat / pred:.4f} ± {se:.4f}")
    return rows


def estimate_constants(table: BilliardTable, seed: int, tau_replicas=1000, tau_n=1000,
                       sigma_replicas=SIGMA_REPLICAS, sigma_n=SIGMA_N, j_tol=J_ABS_TOL,
                       workers=1, bootstrap=BOOTSTRAP_RESAMPLES,
                       sigma2: Optional[SigmaEstimate] = None) -> ConstantsReport:
    """估计全部常数并组装报告"""
    mean_tau = estimate_mean_tau(table, tau_replicas, tau_n, seed, workers)
    if sigma2 is None:
        sigma2 = estimate_sigma2(table, sigma_replicas, sigma_n, seed, workers, bootstrap)
    j_value = compute_J(j_tol)
    c = compute_c(mean_tau, sigma2, table.total_perimeter)
    c_prime, bracket = compute_c_prime(c, j_value)
    report = ConstantsReport(
        mean_tau=mean_tau,
        sigma2=sigma2,
        beta=beta_from_sigma(sigma2),
        j_value=j_value,
        c=c,
        c_prime=c_prime,
        bracket=bracket,
        perimeter=table.total_perimeter,
        mean_free_path=table.mean_free_path,
        seed_material={
            "seed": int(seed),
            "mean_tau_streams": stream_key(seed, PURPOSE_CONSTANTS, 0),
            "sigma_streams": stream_key(seed, PURPOSE_SIGMA, sigma_n << 24),
            "tau_replicas": tau_replicas,
            "tau_n": tau_n,
            "sigma_replicas": sigma2.replicas,
            "sigma_n": sigma2.n_used,
            "chunk": MC_CHUNK,
        },
    )
    logger.info(f"常数估计完成：c = {c.value:.6f} ± {c.se:.2e}，c′ = {c_prime.value:.6f}，J = {j_value.value:.6f}")
    return report

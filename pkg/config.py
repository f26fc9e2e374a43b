# -*- coding: utf-8 -*-
"""
洛伦兹过程实验台默认配置
"""
import os
from dotenv import load_dotenv

load_dotenv()

# 版本号（写入 manifest）
VERSION = "1.0.0"

# 几何容差（单位：格点单元）
EPS_GEOM = 1e-12
EPS_TANGENT = 1e-12
T_MIN = 1e-9

# 视界校验默认参数
HORIZON_MAX_DENOMINATOR = 12
HORIZON_PROBES = 1_000_000
HORIZON_PROBE_WINDOW = 4
TAU_MAX_SAFETY = 1.5
# 时间反演检查的步数
REVERSAL_STEPS = 15

# 相交计数
STREAM_BLOCK = 2 ** 18
MAX_PAIRS_PER_CHUNK = 4_000_000

# 轨道内存上限，超过后按块流式计数
MAX_MATERIALIZED_STEPS = 2_000_000

# 蒙特卡洛默认参数
SIGMA_N = 400
SIGMA_REPLICAS = 100_000
BOOTSTRAP_RESAMPLES = 200
REPLICA_CHUNK = 32
# 两次写检查点之间的最短秒数
CHECKPOINT_INTERVAL = 30.0
J_ABS_TOL = 1e-5
# 离散和外推 J 所用的 n（约按 √2 倍增）
J_EXTRAPOLATION_NS = (200, 283, 400, 566, 800, 1131, 1600)

# 默认随机种子
DEFAULT_SEED = 20240601

# 并行线程（进程）数，命令行 --threads 优先
THREADS = os.getenv("LORENTZ_LAB_THREADS", "")

# 校验规模：quick 或 full
VERIFY_SCALE = os.getenv("LORENTZ_LAB_SCALE", "quick")

# 日志配置
LOG_FILE = os.getenv("LORENTZ_LAB_LOG_FILE", "lorentz_lab.log")
LOG_LEVEL = os.getenv("LORENTZ_LAB_LOG_LEVEL", "INFO")


# -*- coding: utf-8 -*-
"""
可拆分的计数器型随机数流

每个副本的随机流只由 (种子, 用途, 副本编号) 决定，与并行进程数无关。
"""
import numpy as np

# 用途编号，不同用途的流互不重叠
PURPOSE_REPLICA = 0
PURPOSE_HORIZON = 1
PURPOSE_BOOTSTRAP = 2
PURPOSE_FREE_START = 3
PURPOSE_CONSTANTS = 4
PURPOSE_LLT = 5
PURPOSE_SIGMA = 6
PURPOSE_PROBE = 7

_MASK64 = (1 << 64) - 1


def stream_key(seed, purpose, index):
    """返回可写入报告的流标识"""
    return f"philox:{int(seed) & _MASK64}:{int(purpose)}:{int(index)}"


def make_rng(seed, purpose=PURPOSE_REPLICA, index=0):
    """
    创建独立的 Philox 随机流

    Args:
        seed: 64 位种子
        purpose: 用途编号
        index: 副本/批次编号
    """
    entropy = [int(seed) & _MASK64, int(purpose), int(index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

# -*- coding: utf-8 -*-
"""
副本级并行执行

任务按固定大小切块，结果按任务顺序返回，与进程数无关。
"""
import logging
from concurrent.futures import ProcessPoolExecutor

logger = logging.getLogger(__name__)


def chunk_sizes(total, chunk):
    """把 total 个副本切成固定大小的块，返回 [(块编号, 起始副本, 大小), ...]"""
    out = []
    start = 0
    index = 0
    while start < total:
        size = min(chunk, total - start)
        out.append((index, start, size))
        start += size
        index += 1
    return out


def run_tasks(func, tasks, workers=1):
    """
    顺序或多进程执行任务

    Args:
        func: 模块级函数（多进程时需可 pickle）
        tasks: 任务参数列表
        workers: 进程数，≤1 时在当前进程执行
    """
    tasks = list(tasks)
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    workers = min(workers, len(tasks))
    logger.debug(f"使用 {workers} 个进程执行 {len(tasks)} 个任务")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))

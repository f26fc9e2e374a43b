#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
实验配置管理
读取 JSON 配置、校验结构、计算配置哈希；从不改写输入文件
"""

import hashlib
import json
import logging
import os

from config import (DEFAULT_SEED, HORIZON_MAX_DENOMINATOR, HORIZON_PROBES,
                    HORIZON_PROBE_WINDOW, J_ABS_TOL, SIGMA_N, SIGMA_REPLICAS)
from errors import ConfigError

logger = logging.getLogger(__name__)

CAMPAIGN_KINDS = ("expectation", "variance", "continuous", "almost_sure", "decorrelation",
                  "pair_probability")


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class ConfigManager:
    """配置文件管理器"""

    def __init__(self, config_file='table_config.json'):
        self.config_file = config_file
        self.config = self.load_config()
        problems = self.validate(self.config)
        if problems:
            raise ConfigError(problems)
        logger.info(f"配置加载成功：{config_file}，{len(self.config['disks'])} 个圆盘")

    def load_config(self):
        """
        加载配置文件

        Raises:
            ConfigError: 文件不存在或 JSON 解析失败（含行列号）
        """
        if not os.path.exists(self.config_file):
            raise ConfigError(f"配置文件不存在: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"JSON 解析失败（第 {e.lineno} 行第 {e.colno} 列）: {e.msg}")

    @staticmethod
    def validate(config):
        """
        校验配置结构，返回全部问题的列表（空列表表示通过）
        """
        problems = []
        if not isinstance(config, dict):
            return ["配置顶层必须是 JSON 对象"]

        disks = config.get('disks')
        if not isinstance(disks, list) or not disks:
            problems.append("disks 必须是非空列表")
        else:
            for i, disk in enumerate(disks):
                if not isinstance(disk, dict):
                    problems.append(f"disks[{i}] 必须是对象")
                    continue
                center = disk.get('center')
                if (not isinstance(center, list) or len(center) != 2
                        or not all(_is_number(c) for c in center)):
                    problems.append(f"disks[{i}].center 必须是两个数")
                elif not all(0.0 <= c < 1.0 for c in center):
                    problems.append(f"disks[{i}].center 必须位于 [0,1)²")
                radius = disk.get('radius')
                if not _is_number(radius) or radius <= 0:
                    problems.append(f"disks[{i}].radius 必须为正数")

        for key in ('horizon_max_denominator', 'horizon_probes', 'horizon_probe_window'):
            if key in config and (not _is_int(config[key]) or config[key] < 1):
                problems.append(f"{key} 必须是正整数")

        seed = config.get('seed', DEFAULT_SEED)
        if not _is_int(seed) or not (0 <= seed < 2 ** 64):
            problems.append("seed 必须是 64 位非负整数")

        if 'workers' in config and (not _is_int(config['workers']) or config['workers'] < 1):
            problems.append("workers 必须是正整数")

        for block in ('constants', 'campaign', 'verify', 'simulate'):
            if block in config and not isinstance(config[block], dict):
                problems.append(f"{block} 必须是对象")

        campaign = config.get('campaign', {})
        if isinstance(campaign, dict):
            problems.extend(ConfigManager._validate_campaign(campaign))

        verify = config.get('verify', {})
        if isinstance(verify, dict):
            scale = verify.get('scale', 'quick')
            if scale not in ('quick', 'full'):
                problems.append("verify.scale 必须是 quick 或 full")
            factor = verify.get('inject_sigma2_scale')
            if factor is not None and (not _is_number(factor) or factor <= 0):
                problems.append("verify.inject_sigma2_scale 必须为正数")
        return problems

    @staticmethod
    def _validate_campaign(campaign):
        problems = []
        for kind in CAMPAIGN_KINDS:
            block = campaign.get(kind)
            if block is None:
                continue
            if not isinstance(block, dict):
                problems.append(f"campaign.{kind} 必须是对象")
                continue
            if 'replicas' in block and (not _is_int(block['replicas']) or block['replicas'] < 2):
                problems.append(f"campaign.{kind}.replicas 必须是 ≥ 2 的整数")
            grid = block.get('n_grid')
            if grid is not None:
                if not isinstance(grid, list) or not all(_is_int(n) and n >= 1 for n in grid):
                    problems.append(f"campaign.{kind}.n_grid 必须是正整数列表")
                elif any(b <= a for a, b in zip(grid, grid[1:])):
                    problems.append(f"campaign.{kind}.n_grid 必须严格递增")
            grid = block.get('t_grid')
            if grid is not None:
                if not isinstance(grid, list) or not all(_is_number(t) and t > 0 for t in grid):
                    problems.append(f"campaign.{kind}.t_grid 必须是正数列表")
                elif any(b <= a for a, b in zip(grid, grid[1:])):
                    problems.append(f"campaign.{kind}.t_grid 必须严格递增")
        budget = campaign.get('budget_seconds')
        if budget is not None and (not _is_number(budget) or budget <= 0):
            problems.append("campaign.budget_seconds 必须为正数")
        interval = campaign.get('checkpoint_interval')
        if interval is not None and (not _is_number(interval) or interval < 0):
            problems.append("campaign.checkpoint_interval 必须为非负数")
        return problems

    @property
    def table_spec(self):
        return {"disks": self.config['disks']}

    @property
    def seed(self):
        return int(self.config.get('seed', DEFAULT_SEED))

    @property
    def workers(self):
        return self.config.get('workers')

    @property
    def horizon(self):
        """prepare_table / validate_horizon 的参数"""
        return {
            "max_denominator": self.config.get('horizon_max_denominator', HORIZON_MAX_DENOMINATOR),
            "mc_probes": self.config.get('horizon_probes', HORIZON_PROBES),
            "probe_window": self.config.get('horizon_probe_window', HORIZON_PROBE_WINDOW),
        }

    @property
    def constants(self):
        block = dict(self.config.get('constants', {}))
        block.setdefault('tau_replicas', 1000)
        block.setdefault('tau_n', 1000)
        block.setdefault('sigma_replicas', SIGMA_REPLICAS)
        block.setdefault('sigma_n', SIGMA_N)
        block.setdefault('j_abs_tol', J_ABS_TOL)
        return block

    @property
    def campaign(self):
        return dict(self.config.get('campaign', {}))

    @property
    def verify(self):
        return dict(self.config.get('verify', {}))

    @property
    def simulate(self):
        block = dict(self.config.get('simulate', {}))
        block.setdefault('n', 1000)
        return block

    @property
    def config_hash(self):
        """规范化 JSON（键排序）的 sha256"""
        payload = json.dumps(self.config, sort_keys=True, ensure_ascii=False, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

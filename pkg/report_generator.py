#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
实验结果报告生成器
支持导出为 JSON、CSV（长表）、PNG 图和可读的文本表格
"""

import json
import logging
import os
from datetime import datetime
from typing import Dict, List

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from config import VERSION

logger = logging.getLogger(__name__)


class ReportGenerator:
    """报告生成器"""

    def __init__(self, report_dir="reports"):
        self.report_dir = report_dir
        self._ensure_report_dir()

    def _ensure_report_dir(self):
        """确保报告目录存在"""
        if not os.path.exists(self.report_dir):
            os.makedirs(self.report_dir)

    def _path(self, filename):
        return os.path.join(self.report_dir, filename)

    def write_json(self, filename: str, payload: Dict) -> str:
        """
        写出 JSON（键排序，便于逐字节比较）

        Returns:
            保存的文件路径
        """
        filepath = self._path(filename)
        with open(filepath, 'w', encoding='utf-8') as f:
            json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"已写出 {filepath}")
        return filepath

    def write_text(self, filename: str, text: str) -> str:
        filepath = self._path(filename)
        with open(filepath, 'w', encoding='utf-8') as f:
            f.write(text)
        return filepath

    def write_manifest(self, command: str, config_hash: str, seed: int, workers: int,
                       wall_time: float, seed_overridden: bool = False,
                       outputs: List[str] = None, extra: Dict = None) -> str:
        """每个子命令都会写出的运行清单"""
        manifest = {
            "command": command,
            "version": VERSION,
            "config_hash": config_hash,
            "seed": int(seed),
            "seed_overridden": bool(seed_overridden),
            "workers": int(workers),
            "wall_time_seconds": round(float(wall_time), 3),
            "finished_at": datetime.now().strftime('%Y-%m-%d %H:%M:%S'),
            "outputs": sorted(os.path.basename(p) for p in (outputs or [])),
        }
        if extra:
            manifest.update(extra)
        return self.write_json("manifest.json", manifest)

    def campaign_frame(self, result) -> pd.DataFrame:
        """把实验结果展开成长表"""
        x_name = "t" if result.kind == "continuous" else "n"
        df = pd.DataFrame(result.long_rows(), columns=[x_name, "statistic", "value"])
        return df

    def write_campaign_csv(self, result) -> str:
        filepath = self._path(f"campaign_{result.kind}.csv")
        self.campaign_frame(result).to_csv(filepath, index=False)
        logger.info(f"已写出 {filepath}")
        return filepath

    def plot_campaign(self, result) -> str:
        """
        画出实验曲线

        expectation / continuous: 均值对 x ln x 及拟合直线
        variance: 方差比值
        almost_sure: Vₙ/(n ln n) 序列
        """
        fig, ax = plt.subplots(figsize=(7, 5))
        if result.kind in ("expectation", "continuous") and result.stats:
            x = np.array([s.x for s in result.stats])
            mean = np.array([s.mean for s in result.stats])
            se = np.array([s.se for s in result.stats])
            xlogx = x * np.log(np.maximum(x, 1.0))
            ax.errorbar(xlogx, mean, yerr=2 * se, fmt='o', label='mean')
            if result.fit is not None:
                ax.plot(xlogx, result.fit.c_hat * xlogx + result.fit.b_hat * x, '-',
                        label=f'fit ĉ={result.fit.c_hat:.4f}')
            label = 't ln t' if result.kind == "continuous" else 'n ln n'
            ax.set_xlabel(label)
            ax.set_ylabel('mean count')
        elif result.kind == "variance" and result.stats:
            x = [s.x for s in result.stats]
            ratio = [s.ratio if s.ratio is not None else np.nan for s in result.stats]
            ax.plot(x, ratio, 'o-', label='Var(Vₙ)/(c′n²)')
            ax.axhline(1.0, color='gray', linestyle='--')
            ax.set_xscale('log')
            ax.set_xlabel('n')
            ax.set_ylabel('ratio')
        elif result.kind == "almost_sure":
            df = pd.DataFrame(result.series)
            for seed, group in df.groupby("seed"):
                ax.plot(group["n"], group["v_n_ratio"], 'o-', label=f'seed {seed}')
            if result.constants:
                ax.axhline(result.constants["c"]["value"], color='gray', linestyle='--', label='c')
            ax.set_xscale('log', base=2)
            ax.set_xlabel('n')
            ax.set_ylabel('Vₙ/(n ln n)')
        else:
            df = pd.DataFrame(result.series)
            value = "covariance" if "covariance" in df else "k_times_probability"
            ax.plot(df["n"], df[value], 'o-', label=value)
            ax.set_xlabel('gap' if value == "covariance" else 'k')
        ax.legend()
        ax.grid(True, alpha=0.3)
        ax.set_title(result.kind)
        filepath = self._path(f"campaign_{result.kind}.png")
        fig.savefig(filepath, dpi=120, bbox_inches='tight')
        plt.close(fig)
        return filepath

    def suite_table(self, report) -> str:
        """验收结果的可读表格"""
        df = pd.DataFrame([{
            "#": r.index,
            "criterion": r.name,
            "result": "PASS" if r.passed else "FAIL",
            "message": r.message,
        } for r in report.results])
        lines = [
            "=" * 60,
            f"验收结果（规模 {report.scale}，种子 {report.seed}）",
            "=" * 60,
            df.to_string(index=False) if not df.empty else "(无)",
            "",
        ]
        if report.passed:
            lines.append("✅ 全部通过")
        else:
            lines.append(f"❌ 未通过: {report.first_failure.name}")
        return "\n".join(lines) + "\n"

    def write_suite(self, report) -> List[str]:
        """写出验收报告：JSON 与文本表格，均不含耗时"""
        return [
            self.write_json("verify_report.json", report.to_dict()),
            self.write_text("verify_report.txt", self.suite_table(report)),
        ]

    def write_campaign(self, result) -> List[str]:
        return [
            self.write_json(f"campaign_{result.kind}.json", result.to_dict()),
            self.write_campaign_csv(result),
            self.plot_campaign(result),
        ]

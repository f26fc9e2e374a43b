# -*- coding: utf-8 -*-
"""
洛伦兹过程实验台主程序

子命令：validate、simulate、count、constants、campaign、verify
退出码：0 成功，1 配置错误，2 台球表非法，3 视界无限，4 验收未通过，5 超出预算
"""
import argparse
import json
import logging
import os
import sys
import time

from acceptance_suite import CRITERIA, run_suite
from billiard import (prepare_table, sample_mu_bar, table_from_spec,
                      validate_horizon)
from campaign_runner import (CampaignConfig, run_almost_sure, run_continuous,
                             run_decorrelation_probe, run_expectation, run_pair_probability,
                             run_variance)
from config import LOG_FILE, LOG_LEVEL, VERIFY_SCALE, THREADS
from config_manager import ConfigManager
from constants_estimator import estimate_constants, llt_check
from errors import (BudgetExceeded, CheckpointMismatch, ConfigError, InfiniteHorizon,
                    LorentzLabError, OverlappingObstacles)
from intersection_counter import count_trajectory
from report_generator import ReportGenerator
from rng_streams import PURPOSE_FREE_START, PURPOSE_HORIZON, PURPOSE_REPLICA, make_rng, stream_key
from trajectory import generate, generate_from_free, sample_free_start

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TABLE = 2
EXIT_HORIZON = 3
EXIT_ACCEPTANCE = 4
EXIT_BUDGET = 5


def setup_logging(level=LOG_LEVEL, log_file=LOG_FILE):
    """配置日志：文件 + 控制台"""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler()
        ]
    )


def resolve_workers(flag, manager):
    """--threads > LORENTZ_LAB_THREADS > 配置中的 workers > CPU 数"""
    if flag:
        return max(1, int(flag))
    if THREADS.strip():
        try:
            return max(1, int(THREADS))
        except ValueError:
            logger.warning(f"LORENTZ_LAB_THREADS 不是整数: {THREADS}")
    if manager.workers:
        return int(manager.workers)
    return os.cpu_count() or 1


class LabSession:
    """一次命令行调用：配置、输出目录、种子与并行数"""

    def __init__(self, args):
        self.args = args
        self.manager = ConfigManager(args.config)
        self.seed = args.seed if args.seed is not None else self.manager.seed
        self.seed_overridden = args.seed is not None
        self.workers = resolve_workers(args.threads, self.manager)
        self.reports = ReportGenerator(args.out)
        self.outputs = []
        self.started = time.monotonic()

    def table(self):
        return prepare_table(self.manager.table_spec, self.seed, **self.manager.horizon)

    def write_manifest(self, extra=None):
        self.reports.write_manifest(
            command=self.args.command,
            config_hash=self.manager.config_hash,
            seed=self.seed,
            workers=self.workers,
            wall_time=time.monotonic() - self.started,
            seed_overridden=self.seed_overridden,
            outputs=self.outputs,
            extra=extra,
        )

    def constants(self):
        block = self.manager.constants
        return estimate_constants(
            self.table(), self.seed,
            tau_replicas=block['tau_replicas'], tau_n=block['tau_n'],
            sigma_replicas=block['sigma_replicas'], sigma_n=block['sigma_n'],
            j_tol=block['j_abs_tol'], workers=self.workers,
        )


def cmd_validate(session):
    """校验台球表与有限视界，报告输出到标准输出"""
    manager = session.manager
    table = table_from_spec(manager.table_spec)
    horizon = manager.horizon
    report = validate_horizon(table, horizon['max_denominator'], horizon['mc_probes'],
                              rng=make_rng(session.seed, PURPOSE_HORIZON, 0),
                              probe_window=horizon['probe_window'])
    payload = {"valid": True, "table": table.with_horizon(report).to_dict(),
               "horizon": report.to_dict()}
    print(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))
    session.outputs.append(session.reports.write_json("validate.json", payload))
    print("✅ 台球表合法，视界有限")
    return EXIT_OK


def _trajectory(session, table, n):
    if session.args.free_start:
        rng = make_rng(session.seed, PURPOSE_FREE_START, 0)
        q, v = sample_free_start(table, rng)
        return generate_from_free(table, q, v, n, seed=stream_key(session.seed, PURPOSE_FREE_START, 0))
    rng = make_rng(session.seed, PURPOSE_REPLICA, 0)
    start = sample_mu_bar(table, rng)
    return generate(table, start, n, seed=stream_key(session.seed, PURPOSE_REPLICA, 0))


def cmd_simulate(session):
    """导出一条轨道的 CSV"""
    n = session.args.n or session.manager.simulate['n']
    table = session.table()
    traj = _trajectory(session, table, n)
    path = os.path.join(session.reports.report_dir, "trajectory.csv")
    traj.to_csv(path)
    session.outputs.append(path)
    print(f"✅ 已生成 {n} 步轨道: {path}")
    return EXIT_OK


def cmd_count(session):
    """给定种子与步数的自交计数报告"""
    n = session.args.n or session.manager.simulate['n']
    table = session.table()
    traj = _trajectory(session, table, n)
    report = count_trajectory(traj)
    payload = report.to_dict()
    print(json.dumps(payload, ensure_ascii=False, sort_keys=True))
    session.outputs.append(session.reports.write_json("count.json", payload))
    if report.degenerate_events:
        print(f"⚠️ 出现 {report.degenerate_events} 次退化相交")
    return EXIT_OK


def cmd_constants(session):
    """估计全部常数并写出 ConstantsReport"""
    report = session.constants()
    payload = report.to_dict()
    block = session.manager.constants
    if block.get('llt_samples'):
        rows = llt_check(session.table(), block.get('llt_n', 200), block['llt_samples'],
                         session.seed, report.sigma2, session.workers)
        payload["llt"] = [r.to_dict() for r in rows]
    session.outputs.append(session.reports.write_json("constants.json", payload))
    print(f"✅ c = {report.c.value:.6f} ± {report.c.se:.2e}，c′ = {report.c_prime.value:.6f}")
    return EXIT_OK


def _campaign_config(session, block, constants, **kwargs):
    campaign = session.manager.campaign
    horizon = session.manager.horizon
    # 未指定时检查点放在本次输出目录下
    checkpoint = (session.args.resume or campaign.get('checkpoint_path')
                  or os.path.join(session.reports.report_dir, "checkpoints"))
    interval = campaign.get('checkpoint_interval')
    return CampaignConfig(
        table_spec=session.manager.table_spec,
        seed=session.seed,
        workers=session.workers,
        budget=campaign.get('budget_seconds'),
        checkpoint_path=checkpoint,
        resume=bool(session.args.resume),
        **({'checkpoint_interval': float(interval)} if interval is not None else {}),
        constants=constants,
        horizon_max_denominator=horizon['max_denominator'],
        horizon_probes=horizon['mc_probes'],
        horizon_probe_window=horizon['probe_window'],
        **{k: v for k, v in block.items() if k in ('n_grid', 't_grid', 'replicas')},
        **kwargs,
    )


def cmd_campaign(session):
    """运行配置中列出的全部实验"""
    campaign = session.manager.campaign
    constants = session.constants()
    session.outputs.append(session.reports.write_json("constants.json", constants.to_dict()))

    results = []
    if 'expectation' in campaign:
        results.append(run_expectation(_campaign_config(session, campaign['expectation'], constants)))
    if 'variance' in campaign:
        results.append(run_variance(_campaign_config(session, campaign['variance'], constants)))
    if 'continuous' in campaign:
        results.append(run_continuous(_campaign_config(session, campaign['continuous'], constants)))
    if 'almost_sure' in campaign:
        block = campaign['almost_sure']
        config = _campaign_config(session, block, constants)
        results.append(run_almost_sure(config, block.get('min_exp', 10), block.get('max_exp', 20),
                                       block.get('seeds')))
    if 'decorrelation' in campaign:
        block = campaign['decorrelation']
        config = _campaign_config(session, block, constants)
        results.append(run_decorrelation_probe(config, block.get('r', 5), block.get('s', 5),
                                               block.get('gaps', [0, 2, 10, 50])))
    if 'pair_probability' in campaign:
        block = campaign['pair_probability']
        config = _campaign_config(session, block, constants)
        results.append(run_pair_probability(config, block.get('k_values', [1, 2, 5, 10, 50])))

    for result in results:
        session.outputs.extend(session.reports.write_campaign(result))
    print(f"✅ 完成 {len(results)} 项实验，输出目录 {session.reports.report_dir}")
    return EXIT_OK


def cmd_verify(session):
    """运行验收套件，全部通过时退出码为 0"""
    verify = session.manager.verify
    scale = session.args.scale or verify.get('scale') or VERIFY_SCALE
    criteria = session.args.criteria.split(',') if session.args.criteria else verify.get('criteria')
    report = run_suite(
        session.manager.table_spec, session.seed, scale=scale, workers=session.workers,
        criteria=criteria, horizon=session.manager.horizon,
        inject_sigma2_scale=verify.get('inject_sigma2_scale'),
        overrides=verify.get('overrides'),
    )
    session.outputs.extend(session.reports.write_suite(report))
    print(session.reports.suite_table(report))
    if not report.passed:
        failure = report.first_failure
        print(f"❌ 验收未通过: [{failure.index}] {failure.name}")
        return EXIT_ACCEPTANCE
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "count": cmd_count,
    "constants": cmd_constants,
    "campaign": cmd_campaign,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="lorentz-lab", description="周期洛伦兹过程自交实验台")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON 配置文件")
        p.add_argument("--out", default="reports", help="输出目录")
        p.add_argument("--seed", type=int, default=None, help="覆盖配置中的种子")
        p.add_argument("--threads", type=int, default=None, help="并行进程数")
        if name in ("simulate", "count"):
            p.add_argument("--n", type=int, default=None, help="步数")
            p.add_argument("--free-start", action="store_true", help="从自由区域均匀采样起点")
        if name == "campaign":
            p.add_argument("--resume", default=None, help="从检查点目录恢复")
        if name == "verify":
            p.add_argument("--scale", choices=["quick", "full"], default=None)
            p.add_argument("--criteria", default=None,
                           help=f"逗号分隔的验收条件子集：{','.join(CRITERIA)}")
    return parser


def main(argv=None):
    """主函数，返回退出码"""
    args = build_parser().parse_args(argv)
    if not hasattr(args, "resume"):
        args.resume = None

    try:
        session = LabSession(args)
    except ConfigError as e:
        for problem in e.problems:
            print(f"❌ {problem}")
        return EXIT_CONFIG

    code = EXIT_CONFIG
    extra = {}
    try:
        code = COMMANDS[args.command](session)
    except OverlappingObstacles as e:
        print(f"❌ 台球表非法: {e}")
        extra = {"error": str(e)}
        code = EXIT_TABLE
    except InfiniteHorizon as e:
        print(f"❌ 视界无限，见证方向 {e.direction}，走廊宽度 {e.corridor_width:.6g}")
        print(json.dumps({"valid": False, "witness": list(e.direction),
                          "corridor_width": e.corridor_width}))
        extra = {"witness": list(e.direction)}
        code = EXIT_HORIZON
    except BudgetExceeded as e:
        print(f"⚠️ 超出时间预算，检查点已写入 {e.checkpoint_path}，可用 --resume 恢复")
        extra = {"checkpoint": e.checkpoint_path}
        code = EXIT_BUDGET
    except (CheckpointMismatch, ConfigError) as e:
        print(f"❌ {e}")
        code = EXIT_CONFIG
    except ValueError as e:
        if args.command == "validate":
            print(f"❌ 台球表非法: {e}")
            code = EXIT_TABLE
        else:
            print(f"❌ 参数错误: {e}")
            code = EXIT_CONFIG
    except LorentzLabError as e:
        logger.error(f"运行失败: {e}")
        print(f"❌ {e}")
        code = EXIT_CONFIG
    finally:
        extra["exit_code"] = code
        session.write_manifest(extra)
    return code


if __name__ == "__main__":
    setup_logging()
    sys.exit(main())

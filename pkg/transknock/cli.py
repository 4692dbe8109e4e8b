"""
命令行入口

    run <config> --out DIR [--workers N] [--seed S]
    sweep <config> [--variable overlap --values 0,0.5,1] [--out DIR]
    filter <stats.txt> --q 0.1 --offset 1 --mode threshold|adaptive|sequential [--prior F] [--ordering F]

进度日志写到标准错误，数据写到文件或标准输出。
退出码：0 成功，2 配置错误，3 数据错误。
"""

import argparse
import csv
import logging
import math
import sys
from typing import List, Optional

import numpy as np

from transknock.config import FilterDefaults, RunConfig
from transknock.errors import ConfigError, DataError
from transknock.filters import (
    DiscoverySet,
    FilterConfig,
    LogisticOrderingModel,
    adaptive_filter,
    sequential_filter,
    threshold_filter,
)
from transknock.items import SUMMARY_COLUMNS
from transknock.runner import run_experiment, write_results
from transknock.settings import load_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _read_rows(path):
    """非空、非注释行，返回 [(行号, 字段列表)]"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.readlines()
    except OSError as e:
        raise DataError(f"{path}: 无法读取文件: {e}") from e
    rows = []
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith('#'):
            continue
        rows.append((number, text.replace(',', ' ').split()))
    return rows


def _parse_float(path, number, token):
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"{path}:{number}: 不是数值: {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{number}: 不是有限实数: {token!r}")
    return value


def read_statistics(path: str) -> np.ndarray:
    """每行一个有限实数"""
    values = []
    for number, fields in _read_rows(path):
        if len(fields) != 1:
            raise DataError(f"{path}:{number}: 每行只能有一个统计量")
        values.append(_parse_float(path, number, fields[0]))
    return np.array(values, dtype=float)


def read_prior(path: str, p: int) -> np.ndarray:
    """p 行先验，每行一个或多个实数（列数一致）"""
    rows = [
        [_parse_float(path, number, token) for token in fields]
        for number, fields in _read_rows(path)
    ]
    if len(rows) != p:
        raise DataError(f"{path}: 先验行数 {len(rows)} 与统计量个数 {p} 不一致")
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: 先验各行列数不一致")
    return np.array(rows, dtype=float)


def read_ordering(path: str, p: int) -> np.ndarray:
    """1起始的排列，空白或逗号分隔，可跨行"""
    tokens = [(number, token) for number, fields in _read_rows(path) for token in fields]
    ordering = []
    for number, token in tokens:
        try:
            ordering.append(int(token) - 1)
        except ValueError:
            raise DataError(f"{path}:{number}: 不是整数下标: {token!r}") from None
    if sorted(ordering) != list(range(p)):
        raise DataError(f"{path}: 排序必须是 1..{p} 的一个排列")
    return np.array(ordering, dtype=int)


def format_discoveries(discoveries: DiscoverySet) -> str:
    """文本输出：1起始的拒绝下标、阈值与 FDR-hat 轨迹"""
    rejected = ' '.join(str(int(j) + 1) for j in discoveries.rejected)
    trace = discoveries.fdr_trace if discoveries.fdr_trace is not None else []
    lines = [
        f"rejected: {rejected}".rstrip(),
        f"threshold: {discoveries.threshold!r}",
        f"fdr_trace: {' '.join(repr(float(v)) for v in trace)}".rstrip(),
    ]
    if discoveries.ordering is not None:
        lines.append(f"ordering: {' '.join(str(int(j) + 1) for j in discoveries.ordering)}")
    return '\n'.join(lines) + '\n'


def _emit(text, out):
    if out:
        with open(out, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info("结果已写入: %s", out)
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    sweep, settings = load_experiment(args.config, seed=args.seed)
    workers = args.workers or settings.workers
    records, summary = run_experiment(sweep, workers)
    results_path, summary_path = write_results(args.out or settings.out, records, summary)
    logger.info("结果文件: %s", results_path)
    logger.info("汇总文件: %s", summary_path)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    values = None
    if args.values is not None:
        try:
            values = tuple(float(v) for v in args.values.split(',') if v.strip())
        except ValueError:
            raise ConfigError(f"--values 必须是逗号分隔的实数: {args.values!r}") from None
    sweep, settings = load_experiment(args.config, variable=args.variable, values=values, seed=args.seed)
    records, summary = run_experiment(sweep, args.workers or settings.workers)
    if args.out:
        write_results(args.out, records, summary)

    writer = csv.writer(sys.stdout, lineterminator='\n')
    writer.writerow(SUMMARY_COLUMNS)
    writer.writerows(row.as_row() for row in summary)
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    try:
        cfg = FilterConfig(q=args.q, offset=args.offset)
    except ValueError as e:
        raise ConfigError(str(e)) from None

    w = read_statistics(args.statistics)
    if args.mode == 'threshold':
        found = threshold_filter(w, cfg)
    elif args.mode == 'sequential':
        if not args.ordering:
            raise ConfigError("sequential 模式需要 --ordering")
        found = sequential_filter(w, read_ordering(args.ordering, w.size), cfg)
    else:
        if not args.prior:
            raise ConfigError("adaptive 模式需要 --prior")
        found = adaptive_filter(w, read_prior(args.prior, w.size), LogisticOrderingModel(), cfg)

    logger.info("发现数: %d", len(found))
    _emit(format_discoveries(found), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='迁移学习knockoff模拟与过滤工具')
    parser.add_argument('--log-level', default=RunConfig.LOG_LEVEL, help=f'日志级别 (默认: {RunConfig.LOG_LEVEL})')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='运行实验配置文件')
    run.add_argument('config', help='实验配置文件 (INI)')
    run.add_argument('--out', '-o', help='输出目录 (默认: 配置文件 [run] out)')
    run.add_argument('--workers', '-w', type=int, help='并行进程数 (默认: 配置文件或机器核数)')
    run.add_argument('--seed', type=int, help='覆盖配置中的随机种子')
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser('sweep', help='运行扫描并把汇总CSV写到标准输出')
    sweep.add_argument('config', help='实验配置文件 (INI)')
    sweep.add_argument('--variable', choices=['overlap', 'theta', 'amplitude'], help='扫描变量')
    sweep.add_argument('--values', help='逗号分隔的扫描值')
    sweep.add_argument('--out', '-o', help='同时写出 results.csv / summary.csv 的目录')
    sweep.add_argument('--workers', '-w', type=int, help='并行进程数')
    sweep.add_argument('--seed', type=int, help='覆盖配置中的随机种子')
    sweep.set_defaults(handler=cmd_sweep)

    filt = sub.add_parser('filter', help='对给定统计量运行knockoff过滤器')
    filt.add_argument('statistics', help='统计量文件，每行一个实数')
    filt.add_argument('--q', type=float, default=FilterDefaults.Q, help=f'目标FDR (默认: {FilterDefaults.Q})')
    filt.add_argument('--offset', type=int, default=FilterDefaults.OFFSET, help='0 或 1 (默认: 1)')
    filt.add_argument('--mode', choices=['threshold', 'adaptive', 'sequential'], default='threshold')
    filt.add_argument('--prior', help='adaptive 模式的先验文件，每行一个假设')
    filt.add_argument('--ordering', help='sequential 模式的排序文件（1起始）')
    filt.add_argument('--out', '-o', help='输出文件 (默认: 标准输出)')
    filt.set_defaults(handler=cmd_filter)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    params = RunConfig.get_log_params()
    params['level'] = args.log_level.upper()
    logging.basicConfig(stream=sys.stderr, **params)

    if getattr(args, 'workers', None) is not None and args.workers < 1:
        logger.error("workers 至少为1，当前值: %s", args.workers)
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error("配置错误: %s", e)
        return EXIT_CONFIG
    except DataError as e:
        logger.error("数据错误: %s", e)
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())

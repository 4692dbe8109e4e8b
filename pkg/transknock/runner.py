"""
实验运行器

以 (扫描值, 重复) 为工作单元并行执行，结果按 (方法, 扫描值, 重复) 排序后写出，
因此输出与 worker 数无关。
"""

import csv
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import List, Tuple

import numpy as np

from transknock.items import RESULT_COLUMNS, SUMMARY_COLUMNS, MetricsRecord, SummaryRow
from transknock.pipelines import failed_records, run_replication
from transknock.settings import SweepSpec
from transknock.simulation import ExperimentConfig

logger = logging.getLogger(__name__)


def run_unit(cfg: ExperimentConfig, replication: int, value_index: int, sweep_value: float) -> List[MetricsRecord]:
    """单个工作单元；数据生成本身失败时所有方法都记为失败行"""
    try:
        return run_replication(cfg, replication, value_index, sweep_value)
    except Exception as e:
        logger.warning("第 %d 次重复（扫描值 %s）失败: %s", replication, sweep_value, e)
        return failed_records(cfg, replication, sweep_value, f"{type(e).__name__}: {e}")


def _mean_se(values):
    if len(values) == 0:
        return float('nan'), float('nan')
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, float('nan')
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def summarize(records: List[MetricsRecord]) -> List[SummaryRow]:
    """按 (方法, 扫描值) 聚合；失败行只计数，不参与均值"""
    groups = defaultdict(list)
    for record in records:
        groups[record.group_key()].append(record)

    summary = []
    for (method, _), group in sorted(groups.items(), key=lambda item: item[0]):
        sweep_value = group[0].sweep_value
        ok = [r for r in group if not r.failed]
        mean_fdp, se_fdp = _mean_se([r.fdp for r in ok])
        mean_power, se_power = _mean_se([r.power for r in ok])
        mean_discoveries = float(np.mean([r.n_discoveries for r in ok])) if ok else float('nan')
        thetas = [r.theta for r in ok if r.theta is not None]
        mean_theta = float(np.mean(thetas)) if thetas else float('nan')
        summary.append(SummaryRow(
            method=method,
            sweep_value=sweep_value,
            replications=len(group),
            failed=len(group) - len(ok),
            mean_fdp=mean_fdp,
            se_fdp=se_fdp,
            mean_power=mean_power,
            se_power=se_power,
            mean_discoveries=mean_discoveries,
            mean_theta=mean_theta,
        ))
    return summary


def write_csv(path: Path, header, rows):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def write_results(out_dir, records: List[MetricsRecord], summary: List[SummaryRow]) -> Tuple[Path, Path]:
    """写出 results.csv 与 summary.csv，返回两个路径"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / 'results.csv'
    summary_path = out / 'summary.csv'
    write_csv(results_path, RESULT_COLUMNS, [r.as_row() for r in records])
    write_csv(summary_path, SUMMARY_COLUMNS, [s.as_row() for s in summary])
    return results_path, summary_path


class ExperimentRunner:
    """多进程实验运行器"""

    def __init__(self, sweep: SweepSpec, workers: int = 1):
        if workers < 1:
            raise ValueError(f"workers 至少为1，当前值: {workers}")
        self.sweep = sweep
        self.workers = workers

    def units(self):
        """[(cfg, replication, value_index, sweep_value)]"""
        return [
            (cfg, replication, value_index, sweep_value)
            for value_index, sweep_value, cfg in self.sweep.points()
            for replication in range(cfg.replications)
        ]

    def run(self) -> List[MetricsRecord]:
        """执行所有工作单元，返回排好序的 MetricsRecord 列表"""
        units = self.units()
        methods = ', '.join(m.label for m in self.sweep.methods)
        logger.info("开始实验: %d 个工作单元, %d 个worker, 方法: %s", len(units), self.workers, methods)
        start_time = time.time()

        records = []
        successful_count = 0
        failed_count = 0

        if self.workers == 1:
            for done, unit in enumerate(units, start=1):
                rows = run_unit(*unit)
                records.extend(rows)
                if any(r.failed for r in rows):
                    failed_count += 1
                else:
                    successful_count += 1
                logger.info("[%d/%d] 完成: 扫描值=%s 重复=%d", done, len(units), unit[3], unit[1])
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as executor:
                future_to_unit = {executor.submit(run_unit, *unit): unit for unit in units}
                for done, future in enumerate(as_completed(future_to_unit), start=1):
                    cfg, replication, value_index, sweep_value = future_to_unit[future]
                    try:
                        rows = future.result()
                    except Exception as e:
                        logger.warning("✗ 执行异常: 扫描值=%s 重复=%d - %s", sweep_value, replication, e)
                        rows = failed_records(cfg, replication, sweep_value, f"{type(e).__name__}: {e}")
                    records.extend(rows)
                    if any(r.failed for r in rows):
                        failed_count += 1
                    else:
                        successful_count += 1
                    logger.info("[%d/%d] 完成: 扫描值=%s 重复=%d", done, len(units), sweep_value, replication)

        elapsed_time = time.time() - start_time
        logger.info("=" * 60)
        logger.info("实验完成统计")
        logger.info("工作单元数:  %d", len(units))
        logger.info("成功完成:    %d", successful_count)
        logger.info("含失败行:    %d", failed_count)
        logger.info("总耗时:      %.1f 秒", elapsed_time)
        if units:
            logger.info("成功率:      %.1f%%", successful_count / len(units) * 100)

        records.sort(key=lambda r: r.sort_key())
        return records


def run_experiment(sweep: SweepSpec, workers: int = 1) -> Tuple[List[MetricsRecord], List[SummaryRow]]:
    """运行整个扫描，返回 (rows, summary)"""
    records = ExperimentRunner(sweep, workers).run()
    return records, summarize(records)

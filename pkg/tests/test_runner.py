#!/usr/bin/env python3
"""
测试实验运行器与结果文件
"""

import csv
import dataclasses

import numpy as np
import pytest

from transknock import runner
from transknock.items import RESULT_COLUMNS, SUMMARY_COLUMNS, MetricsRecord
from transknock.runner import ExperimentRunner, run_experiment, summarize, write_results
from transknock.settings import SweepSpec


@pytest.fixture
def sweep(tiny_config):
    base = dataclasses.replace(tiny_config, methods=('vanilla', 'weighted_lasso'))
    return SweepSpec(base=base, sweep_variable='overlap', values=(0.0, 0.5, 1.0))


def test_row_cardinality_and_order(sweep):
    """3 个扫描值 × 2 个方法 × 2 次重复"""
    records, summary = run_experiment(sweep, workers=1)
    assert len(records) == 2 * 3 * 2
    assert records == sorted(records, key=lambda r: r.sort_key())
    assert [(r.method, r.sweep_value, r.replication) for r in records[:3]] == [
        ('vanilla', 0.0, 0), ('vanilla', 0.0, 1), ('vanilla', 0.5, 0),
    ]
    assert len(summary) == 2 * 3


def test_results_independent_of_workers(sweep):
    serial, _ = run_experiment(sweep, workers=1)
    parallel, _ = run_experiment(sweep, workers=2)
    assert [r.as_row() for r in serial] == [r.as_row() for r in parallel]


def test_summary_recomputable_from_rows(sweep):
    records, summary = run_experiment(sweep, workers=1)
    for row in summary:
        group = [r for r in records if r.method == row.method and r.sweep_value == row.sweep_value]
        fdp = np.array([r.fdp for r in group])
        assert row.replications == len(group)
        assert abs(row.mean_fdp - fdp.mean()) <= 1e-12
        assert abs(row.se_fdp - fdp.std(ddof=1) / np.sqrt(fdp.size)) <= 1e-12
        assert abs(row.mean_power - np.mean([r.power for r in group])) <= 1e-12


def test_written_files_are_reproducible(sweep, tmp_path):
    for name in ('a', 'b'):
        records, summary = run_experiment(sweep, workers=1)
        write_results(tmp_path / name, records, summary)
    for filename in ('results.csv', 'summary.csv'):
        assert (tmp_path / 'a' / filename).read_bytes() == (tmp_path / 'b' / filename).read_bytes()
    with open(tmp_path / 'a' / 'results.csv', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert len(rows) == 1 + 12
    with open(tmp_path / 'a' / 'summary.csv', encoding='utf-8') as f:
        assert tuple(next(csv.reader(f))) == SUMMARY_COLUMNS


def test_failed_units_are_recorded(sweep, monkeypatch):
    """整个工作单元失败时所有方法记为失败行，运行继续"""

    def broken(cfg, replication, value_index=0, sweep_value=float('nan')):
        if replication == 1:
            raise RuntimeError("数据生成失败")
        return original(cfg, replication, value_index, sweep_value)

    original = runner.run_replication
    monkeypatch.setattr(runner, 'run_replication', broken)
    records, summary = run_experiment(sweep, workers=1)
    assert sum(r.failed for r in records) == 2 * 3
    for row in summary:
        assert row.failed == 1
        assert row.replications == 2
        assert np.isnan(row.se_fdp)


def test_no_sweep_rows_sort(tiny_config):
    cfg = dataclasses.replace(tiny_config, methods=('vanilla',), replications=3)
    records = ExperimentRunner(SweepSpec(base=cfg), workers=1).run()
    assert [r.replication for r in records] == [0, 1, 2]
    assert len(summarize(records)) == 1


def test_runner_rejects_zero_workers(sweep):
    with pytest.raises(ValueError):
        ExperimentRunner(sweep, workers=0)


def test_summary_reports_mean_theta(tmp_path):
    """lro_oracle 的 θ 在 summary.csv 中给出平均值，其他方法留空"""
    records = [
        MetricsRecord('lro_oracle', 0, fdp=0.0, power=0.5, n_discoveries=4, theta=0.2),
        MetricsRecord('lro_oracle', 1, fdp=0.1, power=0.6, n_discoveries=5, theta=0.6),
        MetricsRecord('lro_oracle', 2, error='RuntimeError: 失败'),
        MetricsRecord('vanilla', 0, fdp=0.0, power=0.4, n_discoveries=3),
    ]
    summary = summarize(records)
    by_method = {row.method: row for row in summary}
    assert by_method['lro_oracle'].mean_theta == pytest.approx(0.4)
    assert np.isnan(by_method['vanilla'].mean_theta)

    _, summary_path = write_results(tmp_path, records, summary)
    with open(summary_path, encoding='utf-8') as f:
        rows = {row['method']: row for row in csv.DictReader(f)}
    assert float(rows['lro_oracle']['mean_theta']) == pytest.approx(0.4)
    assert rows['lro_oracle']['failed'] == '1'
    assert rows['vanilla']['mean_theta'] == ''

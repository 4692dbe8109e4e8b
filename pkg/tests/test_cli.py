#!/usr/bin/env python3
"""
测试命令行入口
"""

import csv
import io

import pytest

from transknock.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


def _file(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def _parse(output):
    return dict(line.split(':', 1) for line in output.strip().splitlines())


def test_filter_threshold_offset_one(tmp_path, capsys):
    stats = _file(tmp_path, 'stats.txt', "1\n2\n3\n")
    assert main(['filter', stats, '--q', '0.2', '--offset', '1', '--mode', 'threshold']) == EXIT_OK
    result = _parse(capsys.readouterr().out)
    assert result['rejected'].strip() == ''
    assert result['threshold'].strip() == 'inf'


def test_filter_threshold_offset_zero(tmp_path, capsys):
    stats = _file(tmp_path, 'stats.txt', "1\n2\n3\n")
    assert main(['filter', stats, '--q', '0.2', '--offset', '0']) == EXIT_OK
    result = _parse(capsys.readouterr().out)
    assert result['rejected'].split() == ['1', '2', '3']
    assert float(result['threshold']) == 1.0


def test_filter_all_negative(tmp_path, capsys):
    stats = _file(tmp_path, 'stats.txt', "-1\n-2\n-3\n")
    assert main(['filter', stats]) == EXIT_OK
    assert _parse(capsys.readouterr().out)['rejected'].strip() == ''


def test_filter_writes_out_file(tmp_path):
    stats = _file(tmp_path, 'stats.txt', "# 注释\n1\n2\n3\n")
    out = tmp_path / 'found.txt'
    assert main(['filter', stats, '--offset', '0', '--q', '0.2', '--out', str(out)]) == EXIT_OK
    assert _parse(out.read_text(encoding='utf-8'))['rejected'].split() == ['1', '2', '3']


def test_filter_sequential(tmp_path, capsys):
    stats = _file(tmp_path, 'stats.txt', "5\n-5\n")
    ordering = _file(tmp_path, 'order.txt', "2 1\n")
    code = main(['filter', stats, '--q', '0.5', '--mode', 'sequential', '--ordering', ordering])
    assert code == EXIT_OK
    result = _parse(capsys.readouterr().out)
    assert result['rejected'].strip() == ''
    assert result['fdr_trace'].split() == ['2.0', '1.0']
    assert result['ordering'].split() == ['2', '1']


def test_filter_adaptive(tmp_path, capsys):
    stats = _file(tmp_path, 'stats.txt', "\n".join(str(v) for v in [6, 5, 4, -0.5, 0.3, 7, 8, 9]) + "\n")
    prior = _file(tmp_path, 'prior.txt', "\n".join("1, 0.5" for _ in range(8)) + "\n")
    assert main(['filter', stats, '--mode', 'adaptive', '--prior', prior, '--q', '0.3']) == EXIT_OK
    assert 'rejected' in _parse(capsys.readouterr().out)


@pytest.mark.parametrize('stats_text, extra, code', [
    ("1\nabc\n", [], EXIT_DATA),
    ("1\ninf\n", [], EXIT_DATA),
    ("1 2\n", [], EXIT_DATA),
    ("1\n2\n", ['--q', '1.5'], EXIT_CONFIG),
    ("1\n2\n", ['--mode', 'adaptive'], EXIT_CONFIG),
    ("1\n2\n", ['--mode', 'sequential'], EXIT_CONFIG),
])
def test_filter_errors(tmp_path, stats_text, extra, code):
    stats = _file(tmp_path, 'stats.txt', stats_text)
    assert main(['filter', stats] + extra) == code


def test_filter_prior_length_mismatch(tmp_path):
    stats = _file(tmp_path, 'stats.txt', "1\n2\n3\n")
    prior = _file(tmp_path, 'prior.txt', "1\n2\n")
    assert main(['filter', stats, '--mode', 'adaptive', '--prior', prior]) == EXIT_DATA


def test_filter_bad_ordering(tmp_path):
    stats = _file(tmp_path, 'stats.txt', "1\n2\n3\n")
    ordering = _file(tmp_path, 'order.txt', "1 1 2\n")
    assert main(['filter', stats, '--mode', 'sequential', '--ordering', ordering]) == EXIT_DATA


def test_filter_missing_file(tmp_path):
    assert main(['filter', str(tmp_path / 'nope.txt')]) == EXIT_DATA


SMOKE = """[experiment]
p = 50
n_per_env = 100
n_signals = 8
replications = 5
n_lambda = 15
cv_folds = 3

[methods]
names = vanilla
"""


def test_run_minimal_config(tmp_path):
    config = _file(tmp_path, 'smoke.cfg', SMOKE)
    out = tmp_path / 'out'
    assert main(['run', config, '--out', str(out), '--workers', '1']) == EXIT_OK
    with open(out / 'results.csv', encoding='utf-8') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 5
    assert {row['method'] for row in rows} == {'vanilla'}
    with open(out / 'summary.csv', encoding='utf-8') as f:
        summary = list(csv.DictReader(f))
    assert len(summary) == 1 and summary[0]['replications'] == '5'


def test_run_seed_override_changes_rows(tmp_path):
    config = _file(tmp_path, 'smoke.cfg', SMOKE.replace('replications = 5', 'replications = 2'))
    for name, seed in (('a', '1'), ('b', '2')):
        assert main(['run', config, '--out', str(tmp_path / name), '--workers', '1', '--seed', seed]) == EXIT_OK
    a = (tmp_path / 'a' / 'results.csv').read_text(encoding='utf-8')
    b = (tmp_path / 'b' / 'results.csv').read_text(encoding='utf-8')
    assert ',1\n' in a and ',2\n' in b


@pytest.mark.parametrize('body', ["rho = 1.5", "family = poisson"])
def test_run_invalid_config(tmp_path, body):
    config = _file(tmp_path, 'bad.cfg', f"[experiment]\np = 50\n{body}\n")
    assert main(['run', config, '--out', str(tmp_path / 'out'), '--workers', '1']) == EXIT_CONFIG


def test_run_rejects_zero_workers(tmp_path):
    config = _file(tmp_path, 'smoke.cfg', SMOKE)
    assert main(['run', config, '--workers', '0']) == EXIT_CONFIG


SWEEP = """[experiment]
p = 50
n_per_env = 100
n_signals = 8
replications = 2
n_lambda = 15
cv_folds = 3
gamma_grid = 0, 1

[methods]
names = vanilla, weighted_lasso
"""


def test_sweep_prints_summary(tmp_path, capsys):
    """overlap {0, 0.5, 1} × {vanilla, weighted_lasso}"""
    config = _file(tmp_path, 'sweep.cfg', SWEEP)
    out = tmp_path / 'out'
    code = main(['sweep', config, '--variable', 'overlap', '--values', '0,0.5,1', '--out', str(out), '--workers', '1'])
    assert code == EXIT_OK
    summary = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(summary) == 2 * 3
    assert {row['method'] for row in summary} == {'vanilla', 'weighted_lasso'}
    with open(out / 'results.csv', encoding='utf-8') as f:
        assert len(list(csv.DictReader(f))) == 2 * 3 * 2


def test_sweep_bad_values(tmp_path):
    config = _file(tmp_path, 'sweep.cfg', SWEEP)
    assert main(['sweep', config, '--variable', 'overlap', '--values', '0,x']) == EXIT_CONFIG

#!/usr/bin/env python3
"""
测试实验配置文件解析
"""

import math
import textwrap

import pytest

from transknock.errors import ConfigError
from transknock.settings import SweepSpec, load_experiment
from transknock.simulation import ExperimentConfig, MethodName


def _write(tmp_path, text):
    path = tmp_path / 'experiment.cfg'
    path.write_text(textwrap.dedent(text).lstrip(), encoding='utf-8')
    return path


VALID = """
[experiment]
p = 40
n_per_env = 80
n_signals = 8
replications = 3
gamma_grid = 0, 0.5, 1
assume_shared_nulls = yes

[methods]
names = vanilla, lro(0.2), weighted_lasso

[sweep]
variable = overlap
values = 0, 0.5, 1

[run]
out = results/test
workers = 2
"""


def test_load_valid_file(tmp_path):
    sweep, settings = load_experiment(_write(tmp_path, VALID))
    assert sweep.base.p == 40
    assert sweep.base.gamma_grid == (0.0, 0.5, 1.0)
    assert sweep.base.assume_shared_nulls is True
    assert [m.label for m in sweep.methods] == ['vanilla', 'lro(0.2)', 'weighted_lasso']
    assert [value for _, value, _ in sweep.points()] == [0.0, 0.5, 1.0]
    assert [cfg.overlap for _, _, cfg in sweep.points()] == [0.0, 0.5, 1.0]
    assert settings.out == 'results/test'
    assert settings.workers == 2


def test_overrides(tmp_path):
    sweep, _ = load_experiment(_write(tmp_path, VALID), variable='amplitude', values=(2.0, 4.0), seed=99)
    assert sweep.base.seed == 99
    assert [cfg.amplitude_a for _, _, cfg in sweep.points()] == [2.0, 4.0]


def test_no_sweep_section(tmp_path):
    sweep, settings = load_experiment(_write(tmp_path, "[experiment]\np = 30\nn_signals = 5\n"))
    points = sweep.points()
    assert len(points) == 1 and math.isnan(points[0][1])
    assert sweep.methods[0].name is MethodName.VANILLA
    assert settings.workers >= 1


def test_theta_sweep(tmp_path):
    text = "[methods]\nnames = lro\n[sweep]\nvariable = theta\nvalues = 0.1, 0.4\n"
    sweep, _ = load_experiment(_write(tmp_path, text))
    assert [cfg.theta for _, _, cfg in sweep.points()] == [0.1, 0.4]


@pytest.mark.parametrize('text, line', [
    ("[experiment]\np = 80\nbogus = 1\n", 3),
    ("[experiment]\np = 80\nn_signals = many\n", 3),
    ("[experiment]\np = 80\nfamily = poisson\n", 3),
    ("[experiment]\np = 80\n\noverlap = 2\n", 4),
    ("[experiment]\np = 80\n[methods]\nnames = vanilla, magic\n", 4),
    ("[experiment]\np = 80\nn_signals = 10\n[sweep]\nvariable = overlap\nvalues = 0, 0.5, 1.5\n", 6),
    ("[experiment]\np = 80\n[sweep]\nvariable = rho\nvalues = 0.1\n", 4),
    ("[experiment]\np = 80\n[run]\nworkers = 0\n", 4),
    ("[experiment]\np = 80\n[extra]\nx = 1\n", 3),
])
def test_errors_carry_line_numbers(tmp_path, text, line):
    path = _write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        sweep, settings = load_experiment(path)
    assert info.value.line == line
    assert str(info.value).startswith(f"{path}:{line}: ")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / 'missing.cfg')


def test_sweep_spec_requires_values():
    with pytest.raises(ConfigError):
        SweepSpec(base=ExperimentConfig(), sweep_variable='overlap', values=())

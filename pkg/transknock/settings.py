"""
实验配置文件解析

INI 格式，节：
    [experiment]  ExperimentConfig 的字段（p, n_per_env, overlap, ...）
    [methods]     names = vanilla, lro(0.1), weighted_lasso
    [sweep]       variable = overlap / theta / amplitude; values = 0, 0.5, 1
    [run]         out = results/xxx; workers = 4

所有错误都以 ConfigError 抛出，并带上文件路径和出错键所在的行号。
"""

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from transknock.config import RunConfig
from transknock.errors import ConfigError
from transknock.simulation import ExperimentConfig, MethodSpec


SWEEP_VARIABLES = {
    'overlap': 'overlap',
    'theta': 'theta',
    'amplitude': 'amplitude_a',
}

INT_FIELDS = {'p', 'n_per_env', 'n_envs', 'n_signals', 'offset', 'replications', 'seed', 'cv_folds', 'n_lambda'}
FLOAT_FIELDS = {'rho', 'amplitude_a', 'overlap', 'q', 'theta'}
FLOAT_LIST_FIELDS = {'theta_grid', 'gamma_grid'}
BOOL_FIELDS = {'assume_shared_nulls'}
STR_FIELDS = {'family', 'adaptive_prior', 'weighted_lasso_prior'}

SECTIONS = ('experiment', 'methods', 'sweep', 'run')


@dataclass(frozen=True)
class RunSettings:
    out: str = RunConfig.RESULTS_DIR
    workers: int = RunConfig.WORKERS


@dataclass(frozen=True)
class SweepSpec:
    """基础配置 + 一个扫描变量"""
    base: ExperimentConfig
    sweep_variable: Optional[str] = None
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.sweep_variable is not None and self.sweep_variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep.variable: 只能是 {', '.join(SWEEP_VARIABLES)}，当前值: {self.sweep_variable!r}")
        if self.sweep_variable is not None and not self.values:
            raise ConfigError("sweep.values: 扫描值不能为空")

    @property
    def methods(self):
        return self.base.methods

    def points(self):
        """[(value_index, sweep_value, ExperimentConfig)]"""
        if self.sweep_variable is None:
            return [(0, float('nan'), self.base)]
        field = SWEEP_VARIABLES[self.sweep_variable]
        return [
            (index, float(value), dataclasses.replace(self.base, **{field: value}))
            for index, value in enumerate(self.values)
        ]


def _line_index(text):
    """{(section, key): 行号}"""
    index = {}
    section = None
    header = re.compile(r'^\s*\[([^\]]+)\]')
    entry = re.compile(r'^\s*([^=:#;\s][^=:]*?)\s*[=:]')
    for number, line in enumerate(text.splitlines(), start=1):
        match = header.match(line)
        if match:
            section = match.group(1).strip().lower()
            index[(section, None)] = number
            continue
        match = entry.match(line)
        if match and section is not None:
            index.setdefault((section, match.group(1).strip().lower()), number)
    return index


def _floats(raw):
    values = [v.strip() for v in raw.split(',') if v.strip()]
    return tuple(float(v) for v in values)


def _convert(key, raw):
    if key in INT_FIELDS:
        return int(raw)
    if key in FLOAT_FIELDS:
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"不是有限实数: {raw!r}")
        return value
    if key in FLOAT_LIST_FIELDS:
        return _floats(raw)
    if key in BOOL_FIELDS:
        lowered = raw.strip().lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise ValueError(f"不是布尔值: {raw!r}")
    return raw.strip()


class ExperimentFile:
    """读取并校验一个实验配置文件"""

    def __init__(self, path: str):
        self.path = str(path)
        try:
            self.text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"无法读取配置文件: {e}", path=self.path) from e
        self.lines = _line_index(self.text)
        self.parser = configparser.ConfigParser(interpolation=None)
        try:
            self.parser.read_string(self.text, source=self.path)
        except configparser.Error as e:
            line = getattr(e, 'lineno', None)
            raise ConfigError(f"INI 语法错误: {e.message}", path=self.path, line=line) from e

    def error(self, section, key, message):
        line = self.lines.get((section, key), self.lines.get((section, None)))
        return ConfigError(message, path=self.path, line=line)

    def _experiment_fields(self):
        known = set(ExperimentConfig.field_names()) - {'methods'}
        values = {}
        if not self.parser.has_section('experiment'):
            return values
        for key, raw in self.parser.items('experiment'):
            if key not in known:
                raise self.error('experiment', key, f"未知的实验参数: {key}")
            try:
                values[key] = _convert(key, raw)
            except ValueError as e:
                raise self.error('experiment', key, f"{key}: 无效值 {raw!r} ({e})") from None
        return values

    def _methods(self):
        if not self.parser.has_section('methods'):
            return None
        raw = self.parser.get('methods', 'names', fallback='')
        try:
            methods = tuple(MethodSpec.parse(text) for text in raw.split(',') if text.strip())
        except ValueError as e:
            raise self.error('methods', 'names', str(e)) from None
        if not methods:
            raise self.error('methods', 'names', "methods.names 不能为空")
        return methods

    def _sweep(self, variable=None, values=None):
        section = self.parser['sweep'] if self.parser.has_section('sweep') else {}
        if variable is None:
            variable = section.get('variable')
        if values is None and 'values' in section:
            try:
                values = _floats(section['values'])
            except ValueError as e:
                raise self.error('sweep', 'values', f"sweep.values: {e}") from None
        if variable is not None:
            variable = variable.strip().lower()
        return variable, tuple(values or ())

    def _check_unknown(self):
        for section in self.parser.sections():
            if section not in SECTIONS:
                raise self.error(section, None, f"未知的节 [{section}]，可选: {', '.join(SECTIONS)}")

    def sweep_spec(self, variable: Optional[str] = None, values: Optional[Tuple[float, ...]] = None,
                   seed: Optional[int] = None) -> SweepSpec:
        """构造 SweepSpec，并校验所有扫描点的派生配置"""
        self._check_unknown()
        fields = self._experiment_fields()
        methods = self._methods()
        if methods is not None:
            fields['methods'] = methods
        if seed is not None:
            fields['seed'] = seed

        try:
            base = ExperimentConfig(**fields)
        except ConfigError as e:
            key = str(e).split(':', 1)[0].strip()
            section = 'methods' if key == 'methods' else 'experiment'
            raise self.error(section, key if section == 'experiment' else 'names', str(e)) from None

        variable, values = self._sweep(variable, values)
        try:
            spec = SweepSpec(base=base, sweep_variable=variable, values=values)
            spec.points()
        except ConfigError as e:
            raise self.error('sweep', 'values' if variable in SWEEP_VARIABLES else 'variable', str(e)) from None
        return spec

    def run_settings(self) -> RunSettings:
        if not self.parser.has_section('run'):
            return RunSettings()
        section = self.parser['run']
        out = section.get('out', RunConfig.RESULTS_DIR)
        try:
            workers = int(section.get('workers', RunConfig.WORKERS))
        except ValueError:
            raise self.error('run', 'workers', f"run.workers 必须是整数: {section.get('workers')!r}") from None
        if workers < 1:
            raise self.error('run', 'workers', f"run.workers 至少为1，当前值: {workers}")
        return RunSettings(out=out, workers=workers)


def load_experiment(path: str, variable: Optional[str] = None, values: Optional[Tuple[float, ...]] = None,
                    seed: Optional[int] = None) -> Tuple[SweepSpec, RunSettings]:
    """读取配置文件，返回 (SweepSpec, RunSettings)"""
    experiment_file = ExperimentFile(path)
    return experiment_file.sweep_spec(variable, values, seed), experiment_file.run_settings()

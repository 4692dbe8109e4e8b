"""
多环境合成数据与发现集评分

环境 e = 0 为推断目标，e = 1..E 为外部环境。所有外部环境共享同一支持集
S¹ = S² = ...，目标支持集 S⁰ 与 S¹ 的重叠比例由 overlap 控制。
"""

import logging
import math
import re
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from transknock.config import FilterDefaults, RunConfig
from transknock.errors import ConfigError
from transknock.filters import DiscoverySet, fit_logistic_irls
from transknock.gaussian_knockoffs import ar1_knockoff_sampler, sample_knockoffs
from transknock.items import MetricsRecord
from transknock.sparse_regression import Family

logger = logging.getLogger(__name__)


class MethodName(str, Enum):
    VANILLA = 'vanilla'
    POOLING = 'pooling'
    LRO = 'lro'
    LRO_ORACLE = 'lro_oracle'
    ADAPTIVE = 'adaptive'
    WEIGHTED_LASSO = 'weighted_lasso'
    POOLED_WEIGHTED_LASSO = 'pooled_weighted_lasso'


TRANSFER_METHODS = {
    MethodName.POOLING, MethodName.LRO, MethodName.LRO_ORACLE, MethodName.ADAPTIVE,
    MethodName.WEIGHTED_LASSO, MethodName.POOLED_WEIGHTED_LASSO,
}

_METHOD_PATTERN = re.compile(r'^\s*([a-z_]+)\s*(?:\(\s*([0-9.eE+-]+)\s*\))?\s*$')


@dataclass(frozen=True)
class MethodSpec:
    """方法及其可选 θ，例如 lro(0.3)"""
    name: MethodName
    theta: Optional[float] = None

    @classmethod
    def parse(cls, text: str) -> 'MethodSpec':
        match = _METHOD_PATTERN.match(text)
        if not match:
            raise ValueError(f"无法解析的方法: {text!r}")
        try:
            name = MethodName(match.group(1))
        except ValueError:
            known = ', '.join(m.value for m in MethodName)
            raise ValueError(f"未知方法 {match.group(1)!r}，可选: {known}") from None
        theta = float(match.group(2)) if match.group(2) is not None else None
        if theta is not None and name is not MethodName.LRO:
            raise ValueError(f"只有 lro 接受 θ 参数: {text!r}")
        if theta is not None and not 0.0 <= theta <= 1.0:
            raise ValueError(f"θ 必须在 [0, 1] 内: {text!r}")
        return cls(name, theta)

    @property
    def label(self) -> str:
        if self.theta is None:
            return self.name.value
        return f"{self.name.value}({self.theta:g})"


@dataclass(frozen=True)
class ExperimentConfig:
    """一次（可重复的）模拟实验的完整设置"""
    p: int = 200
    n_per_env: int = 400
    n_envs: int = 3
    rho: float = 0.5
    n_signals: int = 30
    amplitude_a: float = 3.5
    overlap: float = 0.5
    q: float = FilterDefaults.Q
    methods: Tuple[MethodSpec, ...] = (MethodSpec(MethodName.VANILLA),)
    offset: int = FilterDefaults.OFFSET
    replications: int = 10
    seed: int = RunConfig.SEED
    family: Family = Family.GAUSSIAN
    theta: float = 0.1
    theta_grid: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    adaptive_prior: str = 'pooled'
    weighted_lasso_prior: str = 'pooled_external'
    assume_shared_nulls: bool = False
    cv_folds: int = 5
    n_lambda: int = 100
    gamma_grid: Tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

    def __post_init__(self):
        try:
            object.__setattr__(self, 'family', Family(self.family))
        except ValueError:
            raise ConfigError(f"family: 只能是 gaussian 或 binomial（当前值: {self.family!r}）") from None
        object.__setattr__(self, 'methods', tuple(
            m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in self.methods
        ))
        checks = [
            ('p', self.p >= 1, "p 必须为正整数"),
            ('n_per_env', self.n_per_env >= 2, "每个环境至少需要2个观测"),
            ('n_envs', self.n_envs >= 1, "至少需要一个环境"),
            ('rho', -1.0 < self.rho < 1.0, "rho 必须在 (-1, 1) 内"),
            ('n_signals', 1 <= self.n_signals <= self.p, "n_signals 必须在 [1, p] 内"),
            ('overlap', 0.0 <= self.overlap <= 1.0, "overlap 必须在 [0, 1] 内"),
            ('q', 0.0 < self.q < 1.0, "q 必须在 (0, 1) 内"),
            ('offset', self.offset in (0, 1), "offset 只能是 0 或 1"),
            ('replications', self.replications >= 1, "replications 至少为1"),
            ('seed', 0 <= self.seed < 2 ** 63, "seed 必须是非负整数"),
            ('theta', 0.0 <= self.theta <= 1.0, "theta 必须在 [0, 1] 内"),
            ('theta_grid', len(self.theta_grid) > 0 and all(0.0 <= t <= 1.0 for t in self.theta_grid),
             "theta_grid 必须非空且位于 [0, 1]"),
            ('methods', len(self.methods) > 0, "至少需要一个方法"),
            ('adaptive_prior', self.adaptive_prior in ('pooled', 'per_environment'),
             "adaptive_prior 只能是 pooled 或 per_environment"),
            ('weighted_lasso_prior', self.weighted_lasso_prior in ('pooled_external', 'mean_of_environments'),
             "weighted_lasso_prior 只能是 pooled_external 或 mean_of_environments"),
            ('cv_folds', 2 <= self.cv_folds <= self.n_per_env, "cv_folds 必须在 [2, n_per_env] 内"),
            ('n_lambda', self.n_lambda >= 1, "n_lambda 至少为1"),
            ('gamma_grid', len(self.gamma_grid) > 0 and all(0.0 <= g <= 1.0 for g in self.gamma_grid),
             "gamma_grid 必须非空且位于 [0, 1]"),
        ]
        for name, ok, message in checks:
            if not ok:
                raise ConfigError(f"{name}: {message}（当前值: {getattr(self, name)!r}）")

        if self.n_signals - self.shared_signals > self.p - self.n_signals:
            raise ConfigError(
                f"overlap: 重叠 {self.overlap} 下目标支持集无法与外部支持集分开"
                f"（需要 n_signals - round(overlap·n_signals) <= p - n_signals）"
            )
        names = {m.name for m in self.methods}
        if names & TRANSFER_METHODS and self.n_envs < 2:
            raise ConfigError("n_envs: 迁移方法至少需要一个外部环境（n_envs >= 2）")
        if MethodName.POOLED_WEIGHTED_LASSO in names and not self.assume_shared_nulls:
            raise ConfigError(
                "methods: pooled_weighted_lasso 要求 assume_shared_nulls = true（所有环境共享零变量）"
            )

    @property
    def shared_signals(self):
        """|S⁰ ∩ S¹| = round(overlap · n_signals)，四舍五入取半进一"""
        return int(math.floor(self.overlap * self.n_signals + 0.5))

    @property
    def amplitude(self):
        return self.amplitude_a / math.sqrt(self.n_per_env)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Environment:
    X: np.ndarray
    X_knockoff: np.ndarray
    y: np.ndarray
    support: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class EnvironmentBundle:
    """环境 0 为目标，其余为外部环境"""
    environments: Tuple[Environment, ...]
    family: Family = Family.GAUSSIAN
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def target(self):
        return self.environments[0]

    @property
    def external(self):
        return self.environments[1:]

    @property
    def p(self):
        return self.target.X.shape[1]


def stack_environments(environments: Sequence[Environment]) -> Tuple[np.ndarray, np.ndarray]:
    """按行拼接若干环境，返回 (X, X̃, y)"""
    X = np.vstack([env.X for env in environments])
    X_knockoff = np.vstack([env.X_knockoff for env in environments])
    y = np.concatenate([env.y for env in environments])
    return X, X_knockoff, y


def replication_rng(seed: int, replication: int, value_index: int = 0, stream: int = 0) -> np.random.Generator:
    """
    每个 (扫描值, 重复) 的独立随机数流

    Philox 的密钥为 (seed XOR replication, value_index)；同一重复内部的子流
    通过计数器的最高字区分。结果与 worker 数无关。
    """
    key = np.array([(seed ^ replication) & 0xFFFFFFFFFFFFFFFF, value_index], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _draw_supports(cfg, rng):
    p, k = cfg.p, cfg.n_signals
    external = rng.choice(p, size=k, replace=False)
    shared = rng.choice(external, size=cfg.shared_signals, replace=False)
    outside = np.setdiff1d(np.arange(p), external)
    fresh = rng.choice(outside, size=k - cfg.shared_signals, replace=False)
    target = np.concatenate([shared, fresh])
    return np.sort(target), np.sort(external)


def generate_environments(cfg: ExperimentConfig, rng: np.random.Generator) -> EnvironmentBundle:
    """
    按配置生成所有环境

    X 的行独立服从 N(0, Σ_AR1(ρ))；非零 β 为 ±a/√n，符号对每个坐标只抽一次，
    因此共享坐标在各环境中效应相同；knockoff 由真实 P_X 构造。
    """
    model, params = ar1_knockoff_sampler(cfg.p, cfg.rho)
    target_support, external_support = _draw_supports(cfg, rng)
    signs = rng.choice(np.array([-1.0, 1.0]), size=cfg.p)

    environments = []
    for e in range(cfg.n_envs):
        support = target_support if e == 0 else external_support
        beta = np.zeros(cfg.p)
        beta[support] = signs[support] * cfg.amplitude
        X = model.sample(cfg.n_per_env, rng)
        X_knockoff = sample_knockoffs(model, params, X, rng)
        eta = X @ beta
        if cfg.family is Family.GAUSSIAN:
            y = eta + rng.standard_normal(cfg.n_per_env)
        else:
            y = (rng.random(cfg.n_per_env) < expit(eta)).astype(float)
        environments.append(Environment(X=X, X_knockoff=X_knockoff, y=y, support=support, beta=beta))

    return EnvironmentBundle(
        environments=tuple(environments),
        family=cfg.family,
        metadata={'shared_signals': cfg.shared_signals},
    )


def score(discoveries: DiscoverySet, truth) -> MetricsRecord:
    """
    经验FDP与功效

    fdp = |Ŝ \\ S⁰| / max(|Ŝ|, 1), power = |Ŝ ∩ S⁰| / |S⁰|
    """
    truth = {int(j) for j in truth}
    if not truth:
        raise ValueError("真实支持集不能为空")
    selected = discoveries.as_set() if hasattr(discoveries, 'as_set') else {int(j) for j in discoveries}
    true_hits = len(selected & truth)
    return MetricsRecord(
        method='',
        replication=0,
        fdp=(len(selected) - true_hits) / max(len(selected), 1),
        power=true_hits / len(truth),
        n_discoveries=len(selected),
    )


def null_sign_fraction(statistics: Sequence[np.ndarray], null_masks: Sequence[np.ndarray]):
    """
    合并所有重复后零变量统计量中正号的比例

    w = 0 不计入。返回 (比例, 标准误, 相对 0.5 的 z 值, 计数)。
    """
    signs = np.concatenate([
        np.sign(np.asarray(w)[np.asarray(mask)]) for w, mask in zip(statistics, null_masks)
    ])
    signs = signs[signs != 0]
    count = signs.size
    if count == 0:
        return float('nan'), float('nan'), float('nan'), 0
    fraction = float(np.mean(signs > 0))
    se = 0.5 / math.sqrt(count)
    return fraction, se, (fraction - 0.5) / se, count


def sign_magnitude_slope_z(statistics: Sequence[np.ndarray], null_masks: Sequence[np.ndarray]) -> float:
    """
    零变量符号与 |w| 是否独立：对 1{w > 0} ~ 1 + |w| 做逻辑回归，返回斜率的 z 值
    """
    values = np.concatenate([
        np.asarray(w)[np.asarray(mask)] for w, mask in zip(statistics, null_masks)
    ])
    values = values[values != 0]
    if values.size < 3:
        return float('nan')
    magnitudes = np.abs(values)
    scale = magnitudes.std() or 1.0
    features = np.column_stack([np.ones(values.size), magnitudes / scale])
    labels = (values > 0).astype(float)
    theta, information = fit_logistic_irls(features, labels, ridge=1e-8, max_iter=100)
    covariance = np.linalg.inv(information)
    return float(theta[1] / math.sqrt(covariance[1, 1]))

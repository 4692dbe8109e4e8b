"""
方法管道：一次重复实验的数据 -> 发现集

每个方法一个管道类，所有管道共享同一个 ReplicationContext，因此目标环境的
标准统计量以及外部/合并拟合在一次重复中只计算一次，各方法的比较是配对的。
"""

import dataclasses
import logging
from functools import cached_property
from typing import List

import numpy as np

from transknock.filters import (
    FilterConfig,
    LogisticOrderingModel,
    adaptive_filter,
    threshold_filter,
)
from transknock.items import MetricsRecord
from transknock.simulation import (
    EnvironmentBundle,
    ExperimentConfig,
    MethodName,
    MethodSpec,
    generate_environments,
    replication_rng,
    score,
    stack_environments,
)
from transknock.statistics import (
    CVConfig,
    Construction,
    PriorInformation,
    Provenance,
    StatisticVector,
    augmented_design,
    fit_vanilla,
    lasso_statistics,
    linear_reorder,
    weighted_lasso_statistics,
)

logger = logging.getLogger(__name__)


# 同一重复内部的随机数子流编号
STREAM_DATA = 0
STREAM_TARGET = 1
STREAM_EXTERNAL = 2
STREAM_POOLED = 3
STREAM_WEIGHTED = 4
STREAM_POOLED_WEIGHTED = 5
STREAM_PER_ENV = 16


class ReplicationContext:
    """一次重复实验的数据与缓存的中间结果"""

    def __init__(self, cfg: ExperimentConfig, bundle: EnvironmentBundle, replication: int, value_index: int = 0):
        self.cfg = cfg
        self.bundle = bundle
        self.replication = replication
        self.value_index = value_index
        self.filter_config = FilterConfig(q=cfg.q, offset=cfg.offset)
        self.cv_config = CVConfig(gamma_grid=tuple(cfg.gamma_grid), folds=cfg.cv_folds, n_lambda=cfg.n_lambda)

    def rng(self, stream: int) -> np.random.Generator:
        return replication_rng(self.cfg.seed, self.replication, self.value_index, stream)

    def _fit(self, environments, stream):
        X, X_knockoff, y = stack_environments(environments)
        design = augmented_design(X, X_knockoff)
        _, fit = fit_vanilla(design, y, self.bundle.family, self.cv_config, self.rng(stream))
        return design, y, fit

    @cached_property
    def target(self):
        """(design, y, fit) of the target environment"""
        return self._fit(self.bundle.environments[:1], STREAM_TARGET)

    @cached_property
    def w0(self):
        return lasso_statistics(self.target[2], Construction.VANILLA, 'target')

    @cached_property
    def external_fit(self):
        return self._fit(self.bundle.external, STREAM_EXTERNAL)[2]

    @cached_property
    def wext(self):
        return lasso_statistics(self.external_fit, Construction.VANILLA, 'external')

    @cached_property
    def pooled_fit(self):
        return self._fit(self.bundle.environments, STREAM_POOLED)[2]

    @cached_property
    def per_environment_fits(self):
        return [
            self._fit([env], STREAM_PER_ENV + e)[2]
            for e, env in enumerate(self.bundle.external, start=1)
        ]

    def weighted_statistics(self, prior: PriorInformation, stream: int,
                            assume_shared_nulls: bool = False) -> StatisticVector:
        design, y, _ = self.target
        return weighted_lasso_statistics(
            design, y, prior, self.bundle.family, self.cv_config, self.rng(stream),
            assume_shared_nulls=assume_shared_nulls,
        )


class MethodPipeline:
    """管道基类：process 返回 (DiscoverySet, θ 或 None)"""

    def __init__(self, spec: MethodSpec):
        self.spec = spec

    def process(self, context):
        raise NotImplementedError


class VanillaPipeline(MethodPipeline):
    """只用目标环境的标准knockoff"""

    def process(self, context):
        return threshold_filter(context.w0, context.filter_config), None


class PoolingPipeline(MethodPipeline):
    """合并所有环境后运行标准knockoff（对目标环境无FDR保证）"""

    def process(self, context):
        w = lasso_statistics(context.pooled_fit, Construction.VANILLA, 'pooled')
        return threshold_filter(w, context.filter_config), None


class LroPipeline(MethodPipeline):
    """固定 θ 的线性重排统计量"""

    def process(self, context):
        theta = self.spec.theta if self.spec.theta is not None else context.cfg.theta
        w = linear_reorder(context.w0, context.wext, theta)
        return threshold_filter(w, context.filter_config), theta


class LroOraclePipeline(MethodPipeline):
    """在 θ 网格上取发现数最多的 θ（并列取较小者）；不是有效的FDR控制方法"""

    def process(self, context):
        best, best_theta = None, None
        for theta in sorted(context.cfg.theta_grid):
            found = threshold_filter(linear_reorder(context.w0, context.wext, theta), context.filter_config)
            if best is None or len(found) > len(best):
                best, best_theta = found, theta
        return best, best_theta


class AdaptivePipeline(MethodPipeline):
    """自适应knockoff过滤器，先验为外部统计量幅度"""

    def process(self, context):
        if context.cfg.adaptive_prior == 'per_environment':
            prior = np.column_stack([
                np.abs(lasso_statistics(fit).w) for fit in context.per_environment_fits
            ])
        else:
            prior = context.wext.magnitudes[:, None]
        found = adaptive_filter(context.w0, prior, LogisticOrderingModel(), context.filter_config)
        return found, None


class WeightedLassoPipeline(MethodPipeline):
    """外部环境系数构造 φ 的加权lasso统计量"""

    def process(self, context):
        if context.cfg.weighted_lasso_prior == 'mean_of_environments':
            prior = PriorInformation(
                multi_sources=[fit.coefficients for fit in context.per_environment_fits],
            )
        else:
            prior = PriorInformation(ext_coefficients=context.external_fit.coefficients)
        w = context.weighted_statistics(prior, STREAM_WEIGHTED)
        return threshold_filter(w, context.filter_config), None


class PooledWeightedLassoPipeline(MethodPipeline):
    """含目标环境的合并系数构造 φ；需要共享零假设"""

    def process(self, context):
        prior = PriorInformation(
            ext_coefficients=context.pooled_fit.coefficients,
            provenance=Provenance.POOLED,
        )
        w = context.weighted_statistics(
            prior, STREAM_POOLED_WEIGHTED, assume_shared_nulls=context.cfg.assume_shared_nulls,
        )
        return threshold_filter(w, context.filter_config), None


PIPELINES = {
    MethodName.VANILLA: VanillaPipeline,
    MethodName.POOLING: PoolingPipeline,
    MethodName.LRO: LroPipeline,
    MethodName.LRO_ORACLE: LroOraclePipeline,
    MethodName.ADAPTIVE: AdaptivePipeline,
    MethodName.WEIGHTED_LASSO: WeightedLassoPipeline,
    MethodName.POOLED_WEIGHTED_LASSO: PooledWeightedLassoPipeline,
}


def run_method(context: ReplicationContext, spec: MethodSpec):
    """按方法规格运行对应管道"""
    return PIPELINES[spec.name](spec).process(context)


def build_context(cfg: ExperimentConfig, replication: int, value_index: int = 0) -> ReplicationContext:
    """生成一次重复的环境数据并包装为上下文"""
    bundle = generate_environments(cfg, replication_rng(cfg.seed, replication, value_index, STREAM_DATA))
    return ReplicationContext(cfg, bundle, replication, value_index)


def failed_records(cfg: ExperimentConfig, replication: int, sweep_value: float, error: str) -> List[MetricsRecord]:
    return [
        MetricsRecord(
            method=spec.label, replication=replication, sweep_value=sweep_value,
            seed=cfg.seed, overlap=cfg.overlap, error=error,
        )
        for spec in cfg.methods
    ]


def run_replication(cfg: ExperimentConfig, replication: int, value_index: int = 0,
                    sweep_value: float = float('nan')) -> List[MetricsRecord]:
    """
    运行一次重复中的所有方法

    某个方法失败时记录失败行并继续其余方法。
    """
    context = build_context(cfg, replication, value_index)
    truth = context.bundle.target.support
    records = []
    for spec in cfg.methods:
        base = MetricsRecord(
            method=spec.label, replication=replication, sweep_value=sweep_value,
            seed=cfg.seed, overlap=cfg.overlap,
        )
        try:
            found, theta = run_method(context, spec)
            metrics = score(found, truth)
            records.append(dataclasses.replace(
                base,
                fdp=metrics.fdp,
                power=metrics.power,
                n_discoveries=metrics.n_discoveries,
                theta=theta,
            ))
        except Exception as e:
            logger.warning("方法 %s 在第 %d 次重复失败: %s", spec.label, replication, e)
            records.append(dataclasses.replace(base, error=f"{type(e).__name__}: {e}"))
    return records

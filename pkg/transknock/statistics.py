"""
knockoff 统计量

- lasso_statistics: W_j = |b_j| - |b_{j+p}|
- linear_reorder: 符号取自目标环境，幅度为目标与外部幅度的凸组合
- prior_weights / combine_multi_priors: 外部系数 -> 先验权重 φ
- weighted_lasso_statistics: 以 φ 为特征惩罚因子的目标环境加权 lasso
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from transknock.config import PriorConfig, SolverConfig
from transknock.errors import ContractError
from transknock.sparse_regression import (
    AugmentedDesign,
    Family,
    FitResult,
    cross_validate,
    fit_weighted_lasso,
    standardize,
)

logger = logging.getLogger(__name__)


class Construction(str, Enum):
    VANILLA = 'vanilla'
    LRO = 'lro'
    WEIGHTED_LASSO = 'weighted_lasso'
    POOLED_WEIGHTED_LASSO = 'pooled_weighted_lasso'


class Provenance(str, Enum):
    EXTERNAL_ONLY = 'external_only'
    POOLED = 'pooled'


@dataclass(frozen=True)
class StatisticVector:
    """一个环境（或一种构造）的 knockoff 统计量"""
    w: np.ndarray
    construction: Construction = Construction.VANILLA
    environment: str = 'target'

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1:
            raise ValueError(f"统计量必须是一维向量，当前形状: {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("统计量包含非有限值")
        object.__setattr__(self, 'w', w)
        object.__setattr__(self, 'construction', Construction(self.construction))

    def __len__(self):
        return self.w.size

    @property
    def magnitudes(self):
        return np.abs(self.w)


@dataclass(frozen=True)
class CVConfig:
    """weighted_lasso_statistics / vanilla_statistics 的交叉验证设置"""
    gamma_grid: Sequence[float] = field(default_factory=lambda: SolverConfig.GAMMA_GRID)
    lambda_grid: Optional[Sequence[float]] = None
    folds: int = field(default_factory=lambda: SolverConfig.CV_FOLDS)
    n_lambda: int = field(default_factory=lambda: SolverConfig.N_LAMBDA)


@dataclass(frozen=True)
class PriorInformation:
    """外部环境提供的先验信息"""
    ext_statistics: Optional[np.ndarray] = None
    ext_coefficients: Optional[np.ndarray] = None
    phi: Optional[np.ndarray] = None
    multi_sources: Optional[Sequence[np.ndarray]] = None
    provenance: Provenance = Provenance.EXTERNAL_ONLY

    def __post_init__(self):
        if all(v is None for v in (self.ext_statistics, self.ext_coefficients, self.phi, self.multi_sources)):
            raise ValueError("PriorInformation 至少需要一个字段")
        if self.phi is not None:
            phi = np.asarray(self.phi, dtype=float)
            if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
                raise ValueError("phi 必须为有限正数")
            object.__setattr__(self, 'phi', phi)
        object.__setattr__(self, 'provenance', Provenance(self.provenance))

    def resolve_phi(self, p: int, ridge: Optional[float] = None) -> np.ndarray:
        """长度为 p 的 φ；缺失时由外部系数（或多来源的均值）推导"""
        if self.phi is not None:
            phi = self.phi
        elif self.ext_coefficients is not None:
            phi = prior_weights(self.ext_coefficients, ridge=ridge)
        elif self.multi_sources:
            phi = prior_weights(combine_multi_priors(self.multi_sources), ridge=ridge)
        else:
            raise ContractError("无法从先验信息推导 phi（只有外部统计量）")
        if phi.size == 2 * p:
            phi = phi[:p]
        if phi.size != p:
            raise ValueError(f"phi 长度 {phi.size} 与变量数 {p} 不一致")
        return phi


def lasso_statistics(fit: FitResult, construction: Construction = Construction.VANILLA,
                     environment: str = 'target') -> StatisticVector:
    """W_j = |b_j| - |b_{j+p}|"""
    b = np.asarray(fit.coefficients, dtype=float)
    if b.size % 2 != 0:
        raise ValueError(f"系数长度必须是 2p，当前: {b.size}")
    p = b.size // 2
    return StatisticVector(w=np.abs(b[:p]) - np.abs(b[p:]), construction=construction, environment=environment)


def linear_reorder(w0: StatisticVector, wext: StatisticVector, theta: float) -> StatisticVector:
    """
    线性重排统计量

    sign(W_lro) = sign(W0), |W_lro| = (1 - θ)|W0| + θ|W_ext|
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta 必须在 [0, 1] 内，当前值: {theta}")
    a = w0.w if isinstance(w0, StatisticVector) else np.asarray(w0, dtype=float)
    b = wext.w if isinstance(wext, StatisticVector) else np.asarray(wext, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"统计量长度不一致: {a.shape} vs {b.shape}")
    w = np.sign(a) * ((1.0 - theta) * np.abs(a) + theta * np.abs(b))
    environment = w0.environment if isinstance(w0, StatisticVector) else 'target'
    return StatisticVector(w=w, construction=Construction.LRO, environment=environment)


def prior_weights(ext_coefficients, ridge: Optional[float] = None, duplicate: bool = False) -> np.ndarray:
    """
    φ_j = 1 / (ridge + |b_j| + |b_{j+p}|)

    Args:
        ext_coefficients: 长度 2p 的外部系数
        ridge: 默认 PriorConfig.PHI_RIDGE (0.05)
        duplicate: 为 True 时返回长度 2p 的 (φ, φ)
    """
    b = np.asarray(ext_coefficients, dtype=float)
    if b.ndim != 1 or b.size % 2 != 0:
        raise ValueError(f"外部系数长度必须是 2p，当前形状: {b.shape}")
    ridge = PriorConfig.PHI_RIDGE if ridge is None else ridge
    if ridge <= 0:
        raise ValueError(f"ridge 必须为正，当前值: {ridge}")
    p = b.size // 2
    phi = 1.0 / (ridge + np.abs(b[:p]) + np.abs(b[p:]))
    if duplicate:
        return np.concatenate([phi, phi])
    return phi


def combine_multi_priors(sources: Sequence[np.ndarray]) -> np.ndarray:
    """多个来源系数向量的逐坐标均值"""
    if sources is None or len(sources) == 0:
        raise ValueError("至少需要一个先验来源")
    arrays = [np.asarray(s, dtype=float) for s in sources]
    lengths = {a.shape for a in arrays}
    if len(lengths) != 1 or arrays[0].ndim != 1:
        raise ValueError(f"先验来源必须是等长的一维向量，当前形状: {sorted(lengths)}")
    return np.mean(arrays, axis=0)


def augmented_design(X, X_knockoff) -> AugmentedDesign:
    """标准化的 [X, X̃]"""
    return standardize(np.hstack([X, X_knockoff]))


def _cv_fit(design, y, phi2, family, cv_config, rng):
    cv_config = cv_config or CVConfig()
    penalty = cross_validate(
        design, y, family, phi2,
        lambda_grid=cv_config.lambda_grid,
        gamma_grid=cv_config.gamma_grid,
        folds=cv_config.folds,
        rng=rng,
        n_lambda=cv_config.n_lambda,
    )
    return penalty, fit_weighted_lasso(design, y, penalty, family)


def fit_vanilla(design: AugmentedDesign, y, family=Family.GAUSSIAN, cv_config: Optional[CVConfig] = None,
                rng: Optional[np.random.Generator] = None) -> FitResult:
    """交叉验证的均匀惩罚 lasso，返回 (PenaltySpec, FitResult)"""
    cv_config = cv_config or CVConfig()
    uniform = CVConfig(
        gamma_grid=(0.0,), lambda_grid=cv_config.lambda_grid, folds=cv_config.folds, n_lambda=cv_config.n_lambda,
    )
    return _cv_fit(design, y, np.ones(design.n_features), family, uniform, rng)


def vanilla_statistics(design: AugmentedDesign, y, family=Family.GAUSSIAN, cv_config: Optional[CVConfig] = None,
                       rng: Optional[np.random.Generator] = None, environment: str = 'target') -> StatisticVector:
    """标准 lasso knockoff 统计量"""
    _, fit = fit_vanilla(design, y, family, cv_config, rng)
    return lasso_statistics(fit, Construction.VANILLA, environment)


def weighted_lasso_statistics(target_design: AugmentedDesign, y, prior: PriorInformation, family=Family.GAUSSIAN,
                              cv_config: Optional[CVConfig] = None, rng: Optional[np.random.Generator] = None,
                              assume_shared_nulls: bool = False, ridge: Optional[float] = None) -> StatisticVector:
    """
    加权 lasso knockoff 统计量

    只在目标环境上交叉验证并拟合。合并先验（含目标环境数据）只有在
    调用方声明所有环境共享零变量时才合法。
    """
    if prior.provenance is Provenance.POOLED and not assume_shared_nulls:
        raise ContractError("合并先验要求声明共享零假设 (assume_shared_nulls=True)")
    phi = prior.resolve_phi(target_design.p, ridge=ridge)
    phi2 = np.concatenate([phi, phi])
    penalty, fit = _cv_fit(target_design, y, phi2, family, cv_config, rng)
    logger.debug("加权lasso: lambda=%.4g gamma=%.2f", penalty.lambda_, penalty.gamma)
    construction = (
        Construction.POOLED_WEIGHTED_LASSO
        if prior.provenance is Provenance.POOLED
        else Construction.WEIGHTED_LASSO
    )
    return lasso_statistics(fit, construction, 'target')

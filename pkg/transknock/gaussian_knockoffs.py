"""
多元高斯设计的 model-X knockoff 构造与采样

给定 X ~ N(mu, Sigma)，knockoff 从条件分布
    X̃ | X = x ~ N(x - (x - mu) Σ⁻¹ S, 2S - S Σ⁻¹ S),  S = diag(s)
中抽取，使得 [X, X̃] 的联合协方差为 [[Σ, Σ - S], [Σ - S, Σ]]。
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from transknock.errors import KnockoffConstructionError

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
EIGEN_CLIP = 1e-10


def _cholesky(sigma, what='Sigma'):
    """下三角 Cholesky 因子，失败时报告是哪一个分解"""
    try:
        return linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError as e:
        raise KnockoffConstructionError(f"{what} 的 Cholesky 分解失败（矩阵非正定）: {e}") from e


@dataclass(frozen=True)
class GaussianModel:
    """设计分布 P_X = N(mu, sigma)"""
    mu: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"sigma 必须是方阵，当前形状: {sigma.shape}")
        if mu.shape != (sigma.shape[0],):
            raise ValueError(f"mu 长度 {mu.shape} 与 sigma 维度 {sigma.shape[0]} 不一致")
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise KnockoffConstructionError("sigma 不对称")
        chol = _cholesky(sigma)
        object.__setattr__(self, 'mu', mu)
        object.__setattr__(self, 'sigma', sigma)
        object.__setattr__(self, 'chol', chol)

    @property
    def p(self):
        return self.sigma.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """抽取 n 行 X"""
        z = rng.standard_normal((n, self.p))
        return self.mu + z @ self.chol.T


@dataclass(frozen=True)
class KnockoffParameters:
    """条件采样器参数，构造后不可变，可在线程/进程间共享"""
    s: np.ndarray
    cond_coef: np.ndarray   # Σ⁻¹ diag(s)
    cond_chol: np.ndarray   # 条件协方差的下三角因子

    @property
    def p(self):
        return self.s.shape[0]


def ar1_covariance(p: int, rho: float) -> np.ndarray:
    """AR(1) 协方差 Σ_ij = rho^|i-j|"""
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho 必须在 (-1, 1) 内，当前值: {rho}")
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def equicorrelated_s(sigma) -> np.ndarray:
    """
    等相关构造: s_j = min(1, 2 λ_min(R)) · Σ_jj

    Args:
        sigma: p×p 协方差矩阵

    Returns:
        长度为 p 的 s 向量（协方差单位）
    """
    sigma = np.asarray(sigma, dtype=float)
    _cholesky(sigma)
    scale = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(scale, scale)
    lambda_min = float(linalg.eigvalsh(corr)[0])
    s_corr = max(0.0, min(1.0, 2.0 * lambda_min))
    return s_corr * np.diag(sigma)


def _lower_factor(matrix):
    """
    对半正定矩阵求下三角因子 L (L Lᵀ = matrix)

    特征值低于 EIGEN_CLIP 的部分截断为0；奇异情形下 Cholesky 不可用，
    因此对 sqrt(Λ) Qᵀ 做 QR 分解，取 Rᵀ。
    """
    matrix = 0.5 * (matrix + matrix.T)
    evals, evecs = linalg.eigh(matrix)
    if evals[0] < -PSD_TOL:
        raise KnockoffConstructionError(f"条件协方差非半正定，最小特征值 {evals[0]:.3e}")
    evals = np.where(evals < EIGEN_CLIP, 0.0, evals)
    root = np.sqrt(evals)[:, None] * evecs.T
    _, r = linalg.qr(root)
    # 对角线取非负
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return (signs[:, None] * r).T


def build_knockoff_parameters(model: GaussianModel, s: Optional[np.ndarray] = None) -> KnockoffParameters:
    """
    预计算条件采样器

    Σ⁻¹ 通过 Σ 的 Cholesky 因子做两次三角求解得到，不显式求逆。
    """
    if s is None:
        s = equicorrelated_s(model.sigma)
    s = np.array(s, dtype=float)
    if s.shape != (model.p,):
        raise ValueError(f"s 长度应为 {model.p}，当前: {s.shape}")
    if np.any(s < 0):
        raise KnockoffConstructionError("s 必须非负")

    guard = linalg.eigvalsh(2.0 * model.sigma - np.diag(s))[0]
    if guard < -PSD_TOL:
        raise KnockoffConstructionError(f"2Σ - diag(s) 非半正定，最小特征值 {guard:.3e}")

    cond_coef = linalg.cho_solve((model.chol, True), np.diag(s))
    cond_cov = 2.0 * np.diag(s) - np.diag(s) @ cond_coef
    cond_chol = _lower_factor(cond_cov)

    for arr in (s, cond_coef, cond_chol):
        arr.setflags(write=False)
    return KnockoffParameters(s=s, cond_coef=cond_coef, cond_chol=cond_chol)


def sample_knockoffs(model: GaussianModel, params: KnockoffParameters, X,
                     rng: np.random.Generator) -> np.ndarray:
    """
    按条件分布为每一行抽取 knockoff

    Args:
        model: GaussianModel
        params: KnockoffParameters
        X: n×p 设计矩阵
        rng: numpy Generator

    Returns:
        n×p 的 X̃
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.p or params.p != model.p:
        raise ValueError(f"X 的列数 {X.shape} 与模型维度 {model.p} 不一致")
    mean = X - (X - model.mu) @ params.cond_coef
    noise = rng.standard_normal(X.shape) @ params.cond_chol.T
    return mean + noise


def joint_covariance(sigma, s) -> np.ndarray:
    """[X, X̃] 的理论联合协方差 G"""
    off = sigma - np.diag(s)
    return np.block([[sigma, off], [off, sigma]])


@lru_cache(maxsize=16)
def ar1_knockoff_sampler(p: int, rho: float) -> Tuple[GaussianModel, KnockoffParameters]:
    """AR(1) 模型与其 knockoff 参数，按 (p, rho) 缓存"""
    model = GaussianModel(mu=np.zeros(p), sigma=ar1_covariance(p, rho))
    params = build_knockoff_parameters(model)
    logger.debug("构造AR(1) knockoff参数: p=%d rho=%.3f s=%.4f", p, rho, params.s[0])
    return model, params

"""
带特征专属惩罚因子的 L1 惩罚（广义）线性模型

目标函数:
    gaussian: (1/2n) Σ (y_i - b0 - z_iᵀb)² + Σ λ_j |b_j|
    binomial: (1/n) Σ NLL_i + Σ λ_j |b_j|
截距始终拟合且不受惩罚。

内层求解交给 sklearn 的坐标下降（lasso_path）：按观测权重中心化消去截距，
列除以惩罚因子后化为统一惩罚的 lasso。沿 λ 网格热启动；二项族外层使用IRLS。
"""

import logging
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import expit, xlogy
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lasso_path

from transknock.config import SolverConfig
from transknock.errors import DataError

logger = logging.getLogger(__name__)


class Family(str, Enum):
    GAUSSIAN = 'gaussian'
    BINOMIAL = 'binomial'


@dataclass(frozen=True)
class AugmentedDesign:
    """标准化后的 [X, X̃] 设计矩阵"""
    Z: np.ndarray
    col_means: np.ndarray
    col_scales: np.ndarray
    zero_variance: np.ndarray

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def n_features(self) -> int:
        return self.Z.shape[1]

    @property
    def p(self) -> int:
        return self.Z.shape[1] // 2


@dataclass(frozen=True)
class PenaltySpec:
    """
    惩罚设置 (λ, γ, φ)

    φ 以 λ 为单位：先归一化为均值 1 的 φ̄，再得到
        λ_j = (1 - γ) λ + γ λ φ̄_j
    即按 λ 缩放的 (1 - γ)λ + γφ_j。φ 的绝对尺度因此不影响拟合，
    γ = 0 时惩罚因子恰为 1，λ_max 由 max_j |g_j| / weight_j 给出。
    """
    lambda_: float
    gamma: float
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if self.lambda_ < 0:
            raise ValueError(f"lambda 必须非负，当前值: {self.lambda_}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma 必须在 [0, 1] 内，当前值: {self.gamma}")
        if phi.ndim != 1 or phi.size % 2 != 0:
            raise ValueError(f"phi 长度必须是 2p，当前形状: {phi.shape}")
        if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
            raise ValueError("phi 必须为有限正数")
        p = phi.size // 2
        if not np.array_equal(phi[:p], phi[p:]):
            raise ValueError("phi 必须满足 phi_j = phi_{j+p}")
        object.__setattr__(self, 'phi', phi)

    @property
    def weights(self) -> np.ndarray:
        return penalty_weights(self.phi, self.gamma)

    def penalties(self) -> np.ndarray:
        return self.lambda_ * self.weights


@dataclass(frozen=True)
class FitResult:
    """拟合结果，系数在标准化尺度上"""
    coefficients: np.ndarray
    intercept: float
    family: Family
    converged: bool
    iterations: int
    lambda_: float = float('nan')
    truncated: bool = False   # 路径提前终止后沿用上一个 λ 的解


def penalty_weights(phi, gamma: float) -> np.ndarray:
    """特征惩罚因子 (1 - γ) + γ φ̄"""
    phi = np.asarray(phi, dtype=float)
    return (1.0 - gamma) + gamma * (phi / phi.mean())


def standardize(raw) -> AugmentedDesign:
    """
    列中心化并按总体标准差缩放

    常数列以0存储，缩放取1并打上零方差标记。
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValueError(f"至少需要两行数据，当前形状: {raw.shape}")
    means = raw.mean(axis=0)
    centered = raw - means
    scales = np.sqrt((centered ** 2).mean(axis=0))
    zero_variance = scales <= 1e-12 * np.maximum(1.0, np.abs(means))
    scales = np.where(zero_variance, 1.0, scales)
    Z = np.where(zero_variance, 0.0, centered / scales)
    return AugmentedDesign(
        Z=np.asfortranarray(Z),
        col_means=means,
        col_scales=scales,
        zero_variance=zero_variance,
    )


def _check_response(y, family, n):
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ValueError(f"y 长度 {y.shape} 与设计矩阵行数 {n} 不一致")
    family = Family(family)
    if family is Family.BINOMIAL and not np.all((y == 0) | (y == 1)):
        raise ValueError("binomial 族要求 y 取值于 {0, 1}")
    return y, family


def _initial_intercept(y, family):
    if family is Family.GAUSSIAN:
        return float(y.mean())
    ybar = np.clip(y.mean(), 1e-5, 1 - 1e-5)
    return float(np.log(ybar / (1 - ybar)))


def _gradient(Z, y, coefficients, intercept, family):
    """光滑损失对系数的梯度"""
    eta = intercept + Z @ coefficients
    fitted = eta if family is Family.GAUSSIAN else expit(eta)
    return -(Z.T @ (y - fitted)) / len(y)


def _deviance(y, eta, family):
    if family is Family.GAUSSIAN:
        return float(np.sum((y - eta) ** 2))
    mu = np.clip(expit(eta), 1e-12, 1 - 1e-12)
    return float(-2.0 * np.sum(xlogy(y, mu) + xlogy(1 - y, 1 - mu)))


def lambda_max(design, y, weights, family=Family.GAUSSIAN) -> float:
    """使全部系数为0的最小 λ: max_j |Z_jᵀ(y - ȳ)| / (n · weight_j)"""
    Z = design.Z if isinstance(design, AugmentedDesign) else design
    y, family = _check_response(y, family, Z.shape[0])
    weights = np.asarray(weights, dtype=float)
    grad = np.abs(Z.T @ (y - y.mean())) / len(y)
    usable = weights > 0
    if not np.any(usable):
        return 0.0
    return float(np.max(grad[usable] / weights[usable]))


def kkt_residual(design, y, fit: FitResult, penalty) -> float:
    """KKT 条件的最大违背量"""
    Z = design.Z if isinstance(design, AugmentedDesign) else design
    y, family = _check_response(y, fit.family, Z.shape[0])
    penalties = penalty.penalties() if isinstance(penalty, PenaltySpec) else np.asarray(penalty)
    g = _gradient(Z, y, fit.coefficients, fit.intercept, family)
    b = fit.coefficients
    zero = b == 0
    violation = np.where(
        zero,
        np.maximum(0.0, np.abs(g) - penalties),
        np.abs(g + penalties * np.sign(b)),
    )
    return float(violation.max()) if violation.size else 0.0


class _ScaledProblem:
    """
    (1/2n) Σ w_i (y_i - b0 - z_iᵀb)² + λ Σ_j weight_j |b_j|

    中心化后 b0 = ȳ_w - z̄_wᵀb；c_j = weight_j b_j 使惩罚统一为 λ‖c‖₁。
    """

    def __init__(self, Z, y, obs_weights, weights, use_gram=True):
        total = obs_weights.sum()
        root = np.sqrt(obs_weights)
        self.weights = weights
        self.z_mean = obs_weights @ Z / total
        self.y_mean = float(obs_weights @ y / total)
        self.X = np.asfortranarray((Z - self.z_mean) * root[:, None] / weights)
        self.yc = (y - self.y_mean) * root
        self.empty = not np.any(self.yc)
        self.gram = self.xy = None
        # 行数多于列数时预计算 Gram 矩阵，每次坐标更新为 O(列数)
        if use_gram and self.X.shape[0] > self.X.shape[1]:
            self.gram = self.X.T @ self.X
            self.xy = self.X.T @ self.yc

    def solve(self, lam, beta, tol, max_iter):
        """返回 (b, b0, 迭代轮数)"""
        if self.empty:
            beta = np.zeros_like(beta)
            return beta, self.y_mean, 0
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', ConvergenceWarning)
            _, coefs, _, n_iters = lasso_path(
                self.X, self.yc,
                alphas=[lam],
                coef_init=np.asfortranarray(beta * self.weights),
                precompute=self.gram if self.gram is not None else False,
                Xy=self.xy,
                copy_X=False,
                return_n_iter=True,
                tol=tol,
                max_iter=max_iter,
            )
        beta = coefs[:, 0] / self.weights
        return beta, self.y_mean - float(self.z_mean @ beta), int(n_iters[0])


def _irls(Z, y, weights, lam, beta, intercept, tol, max_iter):
    """
    二项族: IRLS 外层 + 加权最小二乘 lasso

    外层在相邻两次解的最大变化低于 max(tol, IRLS_TOLERANCE) 时收敛；
    内层精度受 tol 限制，外层阈值不能比它更严。
    """
    outer_tol = max(tol, SolverConfig.IRLS_TOLERANCE)
    total_iterations = 0
    for _ in range(SolverConfig.IRLS_MAX_ITER):
        eta = intercept + Z @ beta
        mu = expit(eta)
        w = np.maximum(mu * (1.0 - mu), SolverConfig.IRLS_WEIGHT_FLOOR)
        working = eta + (y - mu) / w
        problem = _ScaledProblem(Z, working, w, weights, use_gram=False)
        new_beta, new_intercept, iterations = problem.solve(lam, beta, tol, max_iter)
        total_iterations += iterations
        change = max(np.max(np.abs(new_beta - beta), initial=0.0), abs(new_intercept - intercept))
        beta, intercept = new_beta, new_intercept
        if change < outer_tol and iterations < max_iter:
            return beta, intercept, True, total_iterations
    return beta, intercept, False, total_iterations


def fit_lasso_path(design, y, weights, lambdas: Sequence[float], family=Family.GAUSSIAN,
                   tol: Optional[float] = None, max_iter: Optional[int] = None,
                   init: Optional[FitResult] = None, stop_early: bool = False) -> List[FitResult]:
    """
    沿 λ 网格（从大到小）热启动拟合

    Args:
        design: AugmentedDesign 或 n×m 矩阵
        y: 响应
        weights: 长度 m 的正惩罚因子，λ_j = λ · weights_j
        lambdas: λ 网格（任意顺序）
        family: gaussian / binomial
        init: 热启动的初始解
        stop_early: 解释偏差比例超过 0.999 或不再增加时停止路径，
            其余 λ 沿用最后一个解（交叉验证用）

    Returns:
        每个 λ 对应的 FitResult 列表（与输入顺序一致）
    """
    Z = design.Z if isinstance(design, AugmentedDesign) else np.asfortranarray(design, dtype=float)
    y, family = _check_response(y, family, Z.shape[0])
    tol = SolverConfig.TOLERANCE if tol is None else tol
    max_iter = SolverConfig.MAX_ITER if max_iter is None else max_iter
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (Z.shape[1],) or np.any(weights <= 0):
        raise ValueError(f"惩罚因子必须是长度 {Z.shape[1]} 的正数向量")
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0):
        raise ValueError("lambda 必须非负")

    if init is not None:
        beta, intercept = init.coefficients.copy(), init.intercept
    else:
        beta, intercept = np.zeros(Z.shape[1]), _initial_intercept(y, family)
    problem = _ScaledProblem(Z, y, np.ones(len(y)), weights) if family is Family.GAUSSIAN else None
    null_deviance = _deviance(y, np.full(len(y), _initial_intercept(y, family)), family)

    fits: List[Optional[FitResult]] = [None] * lambdas.size
    last = None
    previous_ratio = 0.0
    for step, index in enumerate(np.argsort(-lambdas, kind='stable')):
        lam = float(lambdas[index])
        if last is not None and last.truncated:
            fits[index] = replace(last, lambda_=lam)
            continue
        if problem is not None:
            beta, intercept, iterations = problem.solve(lam, beta, tol, max_iter)
            converged = iterations < max_iter
        else:
            beta, intercept, converged, iterations = _irls(Z, y, weights, lam, beta, intercept, tol, max_iter)
        if not converged:
            logger.debug("坐标下降未收敛: lambda=%.4g, iterations=%d", lam, iterations)
        last = FitResult(
            coefficients=beta.copy(),
            intercept=float(intercept),
            family=family,
            converged=converged,
            iterations=iterations,
            lambda_=lam,
        )
        fits[index] = last

        if stop_early and null_deviance > 0:
            ratio = 1.0 - _deviance(y, intercept + Z @ beta, family) / null_deviance
            if step + 1 >= SolverConfig.PATH_MIN_STEPS and (
                ratio > SolverConfig.PATH_DEV_RATIO_MAX
                or ratio - previous_ratio < SolverConfig.PATH_DEV_CHANGE * ratio
            ):
                logger.debug("路径在第 %d 个 lambda 处提前终止 (偏差解释比例 %.4f)", step + 1, ratio)
                last = replace(last, truncated=True)
            previous_ratio = ratio
    return fits


def fit_weighted_lasso(design: AugmentedDesign, y, penalty: PenaltySpec, family=Family.GAUSSIAN,
                       tol: Optional[float] = None, max_iter: Optional[int] = None) -> FitResult:
    """
    按 PenaltySpec 拟合单个加权 lasso

    从 λ_max 沿短路径热启动到 λ；KKT 残差超过阈值时收紧容差继续求解。
    """
    if penalty.phi.size != design.n_features:
        raise ValueError(f"phi 长度 {penalty.phi.size} 与特征数 {design.n_features} 不一致")
    tol = SolverConfig.TOLERANCE if tol is None else tol
    weights = penalty.weights
    top = lambda_max(design, y, weights, family)
    lambdas = [penalty.lambda_]
    if 0 < penalty.lambda_ < top:
        lambdas = np.geomspace(top, penalty.lambda_, SolverConfig.WARM_STEPS)
    fit = fit_lasso_path(design, y, weights, lambdas, family, tol=tol, max_iter=max_iter)[-1]
    fit = replace(fit, lambda_=float(penalty.lambda_))

    residual = kkt_residual(design, y, fit, penalty)
    if fit.converged and residual > SolverConfig.KKT_TOL:
        logger.debug("KKT 残差 %.3g 超过阈值，收紧容差重新求解", residual)
        fit = fit_lasso_path(
            design, y, weights, [penalty.lambda_], family, tol=tol * 1e-4, max_iter=max_iter, init=fit,
        )[0]
    if not fit.converged:
        logger.warning("加权lasso未收敛: lambda=%.4g, iterations=%d", penalty.lambda_, fit.iterations)
    return fit


def default_lambda_grid(design, y, phi, gamma_grid: Sequence[float], family=Family.GAUSSIAN,
                        n_lambda: Optional[int] = None, min_ratio: Optional[float] = None,
                        n_train: Optional[int] = None) -> np.ndarray:
    """
    从 max_γ λ_max(γ) 到 min_ratio 倍处的对数等距网格

    未指定 min_ratio 时，训练样本数少于特征数取 LAMBDA_MIN_RATIO_WIDE。
    """
    n_lambda = SolverConfig.N_LAMBDA if n_lambda is None else n_lambda
    if min_ratio is None:
        n_train = design.n if n_train is None else n_train
        wide = n_train < design.n_features
        min_ratio = SolverConfig.LAMBDA_MIN_RATIO_WIDE if wide else SolverConfig.LAMBDA_MIN_RATIO
    top = max(lambda_max(design, y, penalty_weights(phi, g), family) for g in gamma_grid)
    if top <= 0:
        raise DataError("响应与所有特征无关（lambda_max = 0）")
    return np.geomspace(top, top * min_ratio, n_lambda)


@dataclass(frozen=True)
class CrossValidationResult:
    lambdas: np.ndarray
    gammas: np.ndarray
    loss: np.ndarray   # len(gammas) × len(lambdas) 平均留出损失
    best_lambda: float
    best_gamma: float


def cross_validation_path(design: AugmentedDesign, y, family, phi, lambda_grid=None, gamma_grid=None,
                          folds: Optional[int] = None, rng: Optional[np.random.Generator] = None,
                          n_lambda: Optional[int] = None) -> CrossValidationResult:
    """在 (λ, γ) 笛卡尔网格上计算K折平均留出损失"""
    Z = design.Z
    n = Z.shape[0]
    y, family = _check_response(y, family, n)
    folds = SolverConfig.CV_FOLDS if folds is None else folds
    gamma_grid = SolverConfig.GAMMA_GRID if gamma_grid is None else gamma_grid
    if folds < 2 or folds > n:
        raise ValueError(f"folds 必须在 [2, n] 内，当前值: {folds}")
    if len(gamma_grid) == 0:
        raise ValueError("gamma 网格不能为空")
    if np.var(y) == 0:
        raise DataError("响应方差为0，无法交叉验证")
    if rng is None:
        rng = np.random.default_rng()

    phi = np.asarray(phi, dtype=float)
    gammas = np.asarray(gamma_grid, dtype=float)
    if lambda_grid is None:
        n_train = n - -(-n // folds)
        lambdas = default_lambda_grid(design, y, phi, gammas, family, n_lambda=n_lambda, n_train=n_train)
    else:
        lambdas = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
        if lambdas.size == 0:
            raise ValueError("lambda 网格不能为空")

    fold_id = np.empty(n, dtype=int)
    fold_id[rng.permutation(n)] = np.arange(n) % folds

    loss = np.zeros((gammas.size, lambdas.size))
    for k in range(folds):
        test = fold_id == k
        Z_train = np.asfortranarray(Z[~test])
        Z_test = Z[test]
        for gi, gamma in enumerate(gammas):
            fits = fit_lasso_path(
                Z_train, y[~test], penalty_weights(phi, gamma), lambdas, family,
                tol=SolverConfig.CV_TOLERANCE, max_iter=SolverConfig.CV_MAX_ITER, stop_early=True,
            )
            for li, fit in enumerate(fits):
                eta = fit.intercept + Z_test @ fit.coefficients
                loss[gi, li] += _deviance(y[test], eta, family)
    loss /= n

    # 并列时取更大的 λ，再取更小的 γ
    best = loss.min()
    tied = loss <= best + 1e-12 * max(1.0, abs(best))
    gi_candidates, li_candidates = np.nonzero(tied)
    order = np.lexsort((gammas[gi_candidates], -lambdas[li_candidates]))
    gi, li = gi_candidates[order[0]], li_candidates[order[0]]
    return CrossValidationResult(
        lambdas=lambdas,
        gammas=gammas,
        loss=loss,
        best_lambda=float(lambdas[li]),
        best_gamma=float(gammas[gi]),
    )


def cross_validate(design: AugmentedDesign, y, family, phi, lambda_grid=None, gamma_grid=None,
                   folds: Optional[int] = None, rng: Optional[np.random.Generator] = None,
                   n_lambda: Optional[int] = None) -> PenaltySpec:
    """
    交叉验证选择 (λ*, γ*)

    Returns:
        PenaltySpec(λ*, γ*, φ)
    """
    result = cross_validation_path(design, y, family, phi, lambda_grid, gamma_grid, folds, rng, n_lambda)
    logger.debug("交叉验证结果: lambda=%.4g gamma=%.2f", result.best_lambda, result.best_gamma)
    return PenaltySpec(lambda_=result.best_lambda, gamma=result.best_gamma, phi=phi)

"""
knockoff 过滤器：统计量 -> 发现集

- threshold_filter: 阈值形式
      T = min{t > 0: (offset + #{W_j <= -t}) / (#{W_j >= t} ∨ 1) <= q}
- sequential_filter: 给定排序 π 的序贯形式，在 π 的尾部估计 FDR
- adaptive_filter: 逐步揭示符号，由排序模型决定下一个被剥离的假设

所有下标均为0起始；命令行输出时再转为1起始。
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Set

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from transknock.config import FilterDefaults
from transknock.errors import OrderingModelError
from transknock.statistics import StatisticVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    q: float = FilterDefaults.Q
    offset: int = FilterDefaults.OFFSET

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q 必须在 (0, 1) 内，当前值: {self.q}")
        if self.offset not in (0, 1):
            raise ValueError(f"offset 只能是 0 或 1，当前值: {self.offset}")


@dataclass(frozen=True)
class DiscoverySet:
    """
    过滤结果

    threshold 有限时 rejected = {j : w_j >= threshold}，只有阈值过滤器给出有限值；
    基于排序的过滤器由 stop_index 与 ordering 描述，threshold 为 ∞。
    """
    rejected: np.ndarray
    threshold: float = float('inf')
    stop_index: Optional[int] = None
    ordering: Optional[np.ndarray] = None
    fdr_trace: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.rejected.size

    def as_set(self) -> Set[int]:
        return {int(j) for j in self.rejected}


def _values(w):
    return w.w if isinstance(w, StatisticVector) else np.asarray(w, dtype=float)


def threshold_filter(w, cfg: FilterConfig) -> DiscoverySet:
    """
    阈值过滤器

    候选 t 为非零 |w_j| 的升序；若没有 t 满足条件，T = ∞，不拒绝任何假设。
    fdr_trace 与候选 t 一一对应。
    """
    w = _values(w)
    candidates = np.unique(np.abs(w[w != 0]))
    if candidates.size == 0:
        return DiscoverySet(rejected=np.array([], dtype=int), fdr_trace=np.array([]))

    pos = np.sort(w[w > 0])
    neg = np.sort(-w[w < 0])
    n_pos = pos.size - np.searchsorted(pos, candidates, side='left')
    n_neg = neg.size - np.searchsorted(neg, candidates, side='left')
    ratios = (cfg.offset + n_neg) / np.maximum(n_pos, 1)

    ok = np.flatnonzero(ratios <= cfg.q)
    if ok.size == 0:
        return DiscoverySet(rejected=np.array([], dtype=int), fdr_trace=ratios)
    T = float(candidates[ok[0]])
    return DiscoverySet(rejected=np.flatnonzero(w >= T), threshold=T, fdr_trace=ratios)


def brute_force_threshold(w, cfg: FilterConfig) -> float:
    """逐个枚举候选 t 的阈值（测试与校验用）"""
    w = _values(w)
    best = float('inf')
    for t in np.abs(w[w != 0]):
        ratio = (cfg.offset + np.sum(w <= -t)) / max(1, np.sum(w >= t))
        if ratio <= cfg.q and t < best:
            best = float(t)
    return best


def _check_permutation(pi, p):
    pi = np.asarray(pi)
    if pi.shape != (p,) or not np.issubdtype(pi.dtype, np.integer) \
            or not np.array_equal(np.sort(pi), np.arange(p)):
        raise ValueError(f"pi 必须是 0..{p - 1} 的一个排列")
    return pi


def _tail_counts(signs_in_order, offset):
    """FDR-hat(k) for k = 0..p-1，尾部为 π_{k+1..p}"""
    neg = np.cumsum((signs_in_order < 0)[::-1])[::-1]
    pos = np.cumsum((signs_in_order > 0)[::-1])[::-1]
    return (offset + neg) / np.maximum(pos, 1)


def sequential_filter(w, pi, cfg: FilterConfig) -> DiscoverySet:
    """
    序贯过滤器

    找到最小的 k 使 FDR-hat(k) <= q，拒绝 π 尾部中所有正统计量。
    """
    w = _values(w)
    pi = _check_permutation(pi, w.size)
    if w.size == 0:
        return DiscoverySet(rejected=np.array([], dtype=int), ordering=pi, fdr_trace=np.array([]))
    ordered = w[pi]
    trace = _tail_counts(ordered, cfg.offset)
    ok = np.flatnonzero(trace <= cfg.q)
    if ok.size == 0:
        return DiscoverySet(rejected=np.array([], dtype=int), ordering=pi, fdr_trace=trace)
    k = int(ok[0])
    tail = pi[k:]
    rejected = np.sort(tail[w[tail] > 0])
    return DiscoverySet(rejected=rejected, stop_index=k, ordering=pi, fdr_trace=trace)


def ascending_order(w) -> np.ndarray:
    """按 |w| 升序，并列按下标"""
    w = _values(w)
    return np.lexsort((np.arange(w.size), np.abs(w)))


class OrderingModel(ABC):
    """
    自适应过滤器的排序模型

    fit 只接收已揭示假设的下标与符号；被遮蔽的符号不会传入。
    score 返回每个候选假设 sign(w_j) = -1 的预测概率。
    """

    @abstractmethod
    def fit(self, revealed, revealed_signs, magnitudes, prior):
        raise NotImplementedError

    @abstractmethod
    def score(self, candidates):
        raise NotImplementedError


def fit_logistic_irls(features, labels, ridge: float, max_iter: int, tol: float = 1e-8):
    """带岭惩罚的逻辑回归 IRLS，返回系数与 Fisher 信息矩阵"""
    theta = np.zeros(features.shape[1])
    eye = ridge * np.eye(features.shape[1])
    for _ in range(max_iter):
        mu = expit(features @ theta)
        w = np.maximum(mu * (1.0 - mu), 1e-10)
        hessian = features.T @ (features * w[:, None]) + eye
        gradient = features.T @ (labels - mu) - ridge * theta
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError as e:
            raise OrderingModelError(f"IRLS 线性方程求解失败: {e}") from e
        theta = theta + step
        if not np.all(np.isfinite(theta)):
            raise OrderingModelError("IRLS 发散")
        if np.max(np.abs(step)) < tol:
            return theta, hessian
    raise OrderingModelError(f"IRLS 在 {max_iter} 次迭代内未收敛")


class LogisticOrderingModel(OrderingModel):
    """
    logit P[sign(W_j) = -1] = θ₁|W_j| + Σ_c θ_c prior_jc

    揭示的符号少于 warmup 个时，按 |w| 升序与先验升序的秩平均打分。
    θ₁ 约束为非正：拟合出正值时固定 θ₁ = 0，只用先验列重新拟合。
    """

    def __init__(self, ridge: float = FilterDefaults.LOGISTIC_RIDGE, max_iter: int = FilterDefaults.LOGISTIC_MAX_ITER,
                 warmup: Optional[int] = None):
        self.ridge = ridge
        self.max_iter = max_iter
        self.warmup = warmup
        self.theta = None
        self._features = None
        self._cold = True
        self._cold_scores = None

    def _warmup_size(self, p):
        return self.warmup if self.warmup is not None else max(10, p // 20)

    def fit(self, revealed, revealed_signs, magnitudes, prior):
        magnitudes = np.asarray(magnitudes, dtype=float)
        prior = np.asarray(prior, dtype=float).reshape(magnitudes.size, -1)
        self._features = np.column_stack([magnitudes, prior])
        self._cold = len(revealed) < self._warmup_size(magnitudes.size)
        if self._cold:
            ranks = [rankdata(magnitudes)] + [rankdata(col) for col in prior.T]
            self._cold_scores = -(ranks[0] + np.mean(ranks[1:], axis=0)) / 2.0
            return self
        labels = (np.asarray(revealed_signs) < 0).astype(float)
        features = self._features[revealed]
        theta, _ = fit_logistic_irls(features, labels, self.ridge, self.max_iter)
        if theta[0] > 0:
            rest, _ = fit_logistic_irls(features[:, 1:], labels, self.ridge, self.max_iter)
            theta = np.concatenate([[0.0], rest])
        self.theta = theta
        return self

    def score(self, candidates):
        if self._cold:
            return self._cold_scores[candidates]
        return expit(self._features[candidates] @ self.theta)


class LinearOrderingModel(OrderingModel):
    """
    固定 θ 的排序: 先剥离 (1 - θ)|W| + θ·prior 最小的假设

    与 linear_reorder + 序贯过滤等价。
    """

    def __init__(self, theta: float):
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta 必须在 [0, 1] 内，当前值: {theta}")
        self.theta = theta
        self._scores = None

    def fit(self, revealed, revealed_signs, magnitudes, prior):
        prior = np.asarray(prior, dtype=float).reshape(len(magnitudes), -1)[:, 0]
        self._scores = -((1.0 - self.theta) * np.asarray(magnitudes) + self.theta * np.abs(prior))
        return self

    def score(self, candidates):
        return self._scores[candidates]


def adaptive_filter(w, prior, model: Optional[OrderingModel] = None,
                    cfg: Optional[FilterConfig] = None) -> DiscoverySet:
    """
    自适应knockoff过滤器

    所有符号初始被遮蔽。每一步先在遮蔽集上估计 FDR-hat，满足 <= q 即停止并拒绝
    遮蔽集中的正统计量；否则用已揭示符号重新拟合模型，剥离预测为负概率最高的
    假设（并列按 |w| 较小、再按下标）并揭示其符号。模型失败时本步退回 |w| 升序。
    """
    w = _values(w)
    p = w.size
    cfg = cfg or FilterConfig()
    model = model if model is not None else LogisticOrderingModel()
    prior = np.asarray(prior, dtype=float)
    if prior.ndim == 1:
        prior = prior[:, None]
    if prior.shape[0] != p or prior.shape[1] < 1:
        raise ValueError(f"先验矩阵形状 {prior.shape} 与假设数 {p} 不一致")

    magnitudes = np.abs(w)
    index = np.arange(p)
    masked = np.ones(p, dtype=bool)
    order = []
    trace = []
    n_neg = int(np.sum(w < 0))
    n_pos = int(np.sum(w > 0))

    for k in range(p):
        fdr_hat = (cfg.offset + n_neg) / max(n_pos, 1)
        trace.append(fdr_hat)
        if fdr_hat <= cfg.q:
            rejected = np.flatnonzero(masked & (w > 0))
            remaining = index[masked]
            remaining = remaining[np.lexsort((remaining, magnitudes[remaining]))]
            return DiscoverySet(
                rejected=rejected,
                stop_index=k,
                ordering=np.concatenate([np.array(order, dtype=int), remaining]),
                fdr_trace=np.array(trace),
            )

        candidates = index[masked]
        revealed = np.array(order, dtype=int)
        try:
            model.fit(revealed, np.sign(w[revealed]), magnitudes, prior)
            scores = np.asarray(model.score(candidates), dtype=float)
            if scores.shape != candidates.shape or not np.all(np.isfinite(scores)):
                raise OrderingModelError("排序模型返回了无效分数")
        except OrderingModelError as e:
            logger.debug("第 %d 步排序模型失败，退回 |w| 升序: %s", k, e)
            scores = -magnitudes[candidates]

        pick = candidates[np.lexsort((candidates, magnitudes[candidates], -scores))[0]]
        order.append(int(pick))
        masked[pick] = False
        if w[pick] < 0:
            n_neg -= 1
        elif w[pick] > 0:
            n_pos -= 1

    return DiscoverySet(
        rejected=np.array([], dtype=int),
        ordering=np.array(order, dtype=int),
        fdr_trace=np.array(trace),
    )

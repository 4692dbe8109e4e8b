#!/usr/bin/env python3
"""
测试knockoff过滤器
"""

import numpy as np
import pytest

from transknock.errors import OrderingModelError
from transknock.filters import (
    DiscoverySet,
    FilterConfig,
    LinearOrderingModel,
    LogisticOrderingModel,
    OrderingModel,
    adaptive_filter,
    ascending_order,
    brute_force_threshold,
    sequential_filter,
    threshold_filter,
)
from transknock.statistics import linear_reorder


class PriorStubModel(OrderingModel):
    """打分为 -prior 的固定模型"""

    def fit(self, revealed, revealed_signs, magnitudes, prior):
        self.scores = -np.asarray(prior)[:, 0]
        return self

    def score(self, candidates):
        return self.scores[candidates]


class FailingModel(OrderingModel):
    def fit(self, revealed, revealed_signs, magnitudes, prior):
        raise OrderingModelError("总是失败")

    def score(self, candidates):
        raise AssertionError("不应被调用")


class RecordingModel(LogisticOrderingModel):
    """记录每次 fit 收到的已揭示下标"""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.calls = []

    def fit(self, revealed, revealed_signs, magnitudes, prior):
        self.calls.append(np.array(revealed))
        return super().fit(revealed, revealed_signs, magnitudes, prior)


def _random_w(rng, p):
    w = rng.standard_normal(p)
    signals = rng.choice(p, size=max(1, p // 4), replace=False)
    w[signals] = np.abs(w[signals]) + rng.uniform(1.0, 4.0, size=signals.size)
    return w


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(q=0.0)
    with pytest.raises(ValueError):
        FilterConfig(q=1.0)
    with pytest.raises(ValueError):
        FilterConfig(q=0.1, offset=2)


def test_threshold_offset_one_no_discoveries():
    """w = (1,2,3), q = 0.2, offset 1: 比值 1/3, 1/2, 1 都大于 q"""
    found = threshold_filter(np.array([1.0, 2.0, 3.0]), FilterConfig(q=0.2, offset=1))
    assert len(found) == 0
    assert found.threshold == float('inf')
    np.testing.assert_allclose(found.fdr_trace, [1 / 3, 1 / 2, 1.0])


def test_threshold_offset_zero_rejects_all():
    found = threshold_filter(np.array([1.0, 2.0, 3.0]), FilterConfig(q=0.2, offset=0))
    assert found.threshold == 1.0
    assert found.as_set() == {0, 1, 2}


def test_threshold_all_negative():
    for q in (0.05, 0.5, 0.99):
        assert len(threshold_filter(np.array([-1.0, -2.0, -3.0]), FilterConfig(q=q, offset=0))) == 0


def test_threshold_empty_and_zero_statistics():
    assert len(threshold_filter(np.zeros(4), FilterConfig())) == 0
    assert len(threshold_filter(np.array([]), FilterConfig())) == 0


def test_threshold_matches_brute_force(rng):
    """1000 个随机统计量向量上与逐个枚举一致"""
    for _ in range(1000):
        p = int(rng.integers(5, 101))
        w = _random_w(rng, p)
        cfg = FilterConfig(q=float(rng.uniform(0.05, 0.5)), offset=int(rng.integers(0, 2)))
        found = threshold_filter(w, cfg)
        assert found.threshold == brute_force_threshold(w, cfg)
        if np.isfinite(found.threshold):
            assert np.array_equal(found.rejected, np.flatnonzero(w >= found.threshold))
        assert np.all(w[found.rejected] > 0)


def test_sequential_ascending_matches_threshold(rng):
    """|w| 升序的序贯过滤器与阈值过滤器等价"""
    for _ in range(1000):
        p = int(rng.integers(5, 101))
        w = _random_w(rng, p)
        cfg = FilterConfig(q=float(rng.uniform(0.05, 0.5)), offset=int(rng.integers(0, 2)))
        assert np.array_equal(
            sequential_filter(w, ascending_order(w), cfg).rejected,
            threshold_filter(w, cfg).rejected,
        )


def test_sequential_hand_trace():
    """w = (5, -5), π = (2, 1): 两步的 FDR-hat 为 2 和 1，都不满足 q = 0.5"""
    found = sequential_filter(np.array([5.0, -5.0]), np.array([1, 0]), FilterConfig(q=0.5, offset=1))
    assert len(found) == 0
    assert found.stop_index is None
    np.testing.assert_allclose(found.fdr_trace, [2.0, 1.0])


def test_ordering_filters_report_infinite_threshold():
    """π 的前缀里被剥离的大正统计量不在拒绝集中，因此不给出有限阈值"""
    w = np.concatenate([[10.0, -0.5], np.ones(20)])
    cfg = FilterConfig(q=0.06, offset=1)
    found = sequential_filter(w, np.arange(22), cfg)
    assert found.stop_index == 2
    assert found.rejected.tolist() == list(range(2, 22))
    assert 0 not in found.as_set()
    assert found.threshold == float('inf')

    adaptive = adaptive_filter(w, np.ones(22), LinearOrderingModel(0.0), cfg)
    assert adaptive.threshold == float('inf')


def test_sequential_all_positive_offset_zero(rng):
    w = rng.uniform(0.1, 2.0, size=8)
    found = sequential_filter(w, rng.permutation(8), FilterConfig(q=0.01, offset=0))
    assert found.stop_index == 0
    assert found.as_set() == set(range(8))


@pytest.mark.parametrize('pi', [np.array([0, 0, 1]), np.array([0, 1]), np.array([0.0, 1.0, 2.0]), np.array([1, 2, 3])])
def test_sequential_invalid_permutation(pi):
    with pytest.raises(ValueError):
        sequential_filter(np.ones(3), pi, FilterConfig())


def test_rejections_monotone_in_q(rng):
    for _ in range(200):
        w = _random_w(rng, 40)
        small = threshold_filter(w, FilterConfig(q=0.1)).as_set()
        large = threshold_filter(w, FilterConfig(q=0.3)).as_set()
        assert small <= large


def test_adaptive_hand_trace():
    """p = 4 的手算例子：剥离顺序 3, 2, 1, 4（1起始），没有发现"""
    w = np.array([3.0, -2.0, 1.0, 4.0])
    prior = np.array([1.0, 0.0, 0.0, 1.0])
    found = adaptive_filter(w, prior, PriorStubModel(), FilterConfig(q=0.34, offset=1))
    assert len(found) == 0
    assert found.ordering.tolist() == [2, 1, 0, 3]
    np.testing.assert_allclose(found.fdr_trace, [2 / 3, 1.0, 0.5, 1.0])


def test_adaptive_all_negative(rng):
    w = -rng.uniform(0.1, 3.0, size=15)
    for model in (PriorStubModel(), LogisticOrderingModel(), LinearOrderingModel(0.5)):
        found = adaptive_filter(w, rng.standard_normal(15), model, FilterConfig(q=0.9, offset=0))
        assert len(found) == 0


def test_adaptive_constant_prior_matches_ascending(rng):
    """常数先验列 + 默认逻辑模型：与 |w| 升序的序贯过滤器一致"""
    agree = 0
    for _ in range(200):
        p = int(rng.integers(5, 60))
        w = _random_w(rng, p)
        cfg = FilterConfig(q=float(rng.uniform(0.1, 0.3)), offset=1)
        adaptive = adaptive_filter(w, np.ones(p), LogisticOrderingModel(), cfg)
        sequential = sequential_filter(w, ascending_order(w), cfg)
        agree += np.array_equal(adaptive.rejected, sequential.rejected)
    assert agree >= 190


def test_adaptive_model_failure_falls_back(rng):
    """模型失败时退回 |w| 升序，不中断"""
    w = _random_w(rng, 30)
    cfg = FilterConfig(q=0.2)
    found = adaptive_filter(w, np.ones(30), FailingModel(), cfg)
    assert np.array_equal(found.rejected, sequential_filter(w, ascending_order(w), cfg).rejected)


def test_adaptive_prior_shape_mismatch():
    with pytest.raises(ValueError):
        adaptive_filter(np.ones(4), np.ones(3), LogisticOrderingModel())


def test_adaptive_never_sees_masked_signs(rng):
    """打乱被遮蔽的符号不改变已选出的排序前缀"""
    p = 40
    w = _random_w(rng, p)
    prior = np.column_stack([np.abs(w) + rng.standard_normal(p), rng.standard_normal(p)])
    cfg = FilterConfig(q=1e-6)
    ordering = adaptive_filter(w, prior, LogisticOrderingModel(warmup=3), cfg).ordering
    assert sorted(ordering.tolist()) == list(range(p))
    for m in (0, 5, 12, 25):
        scrambled = w.copy()
        tail = ordering[m:]
        scrambled[tail] = np.abs(w[tail]) * rng.choice([-1.0, 1.0], size=tail.size)
        again = adaptive_filter(scrambled, prior, LogisticOrderingModel(warmup=3), cfg).ordering
        assert np.array_equal(again[:m + 1], ordering[:m + 1])


def test_adaptive_fit_receives_only_revealed(rng):
    w = _random_w(rng, 20)
    model = RecordingModel(warmup=2)
    found = adaptive_filter(w, np.abs(w), model, FilterConfig(q=1e-6))
    for k, revealed in enumerate(model.calls):
        assert np.array_equal(revealed, found.ordering[:k])


def test_linear_ordering_model_reproduces_lro(rng):
    """LinearOrderingModel(θ) 下的自适应过滤器等价于线性重排统计量 + 阈值过滤器"""
    for _ in range(100):
        p = int(rng.integers(10, 60))
        w0, wext = _random_w(rng, p), _random_w(rng, p)
        theta = float(rng.uniform(0.0, 1.0))
        cfg = FilterConfig(q=float(rng.uniform(0.1, 0.4)))
        adaptive = adaptive_filter(w0, np.abs(wext), LinearOrderingModel(theta), cfg)
        lro = threshold_filter(linear_reorder(w0, wext, theta), cfg)
        assert np.array_equal(adaptive.rejected, lro.rejected)


def test_logistic_model_cold_start_uses_ranks():
    model = LogisticOrderingModel(warmup=5)
    magnitudes = np.array([3.0, 1.0, 2.0])
    model.fit(np.array([], dtype=int), np.array([]), magnitudes, np.array([1.0, 1.0, 1.0]))
    scores = model.score(np.arange(3))
    assert np.argmax(scores) == 1
    assert np.argmin(scores) == 0


def test_discovery_set_helpers():
    found = DiscoverySet(rejected=np.array([4, 1]))
    assert len(found) == 2
    assert found.as_set() == {1, 4}

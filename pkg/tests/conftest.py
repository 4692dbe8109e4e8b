"""
共享测试夹具
"""

import numpy as np
import pytest

from transknock.simulation import ExperimentConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    """几秒内跑完的小规模实验配置"""
    return ExperimentConfig(
        p=20,
        n_per_env=60,
        n_envs=3,
        n_signals=5,
        amplitude_a=6.0,
        overlap=1.0,
        replications=2,
        seed=7,
        cv_folds=3,
        n_lambda=10,
        gamma_grid=(0.0, 0.5, 1.0),
        methods=('vanilla', 'pooling', 'lro(0.3)', 'lro_oracle', 'adaptive', 'weighted_lasso'),
    )

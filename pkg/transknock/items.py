import math
from dataclasses import dataclass, field
from typing import Optional


# 结果文件的固定列
RESULT_COLUMNS = ('method', 'sweep_value', 'replication', 'fdp', 'power', 'n_discoveries', 'seed')

SUMMARY_COLUMNS = (
    'method', 'sweep_value', 'replications', 'failed',
    'mean_fdp', 'se_fdp', 'mean_power', 'se_power', 'mean_discoveries', 'mean_theta',
)


@dataclass(frozen=True)
class MetricsRecord:
    """一次重复实验中某个方法的FDP与功效"""
    method: str                    # 方法标签，例如 lro(0.1)
    replication: int               # 重复编号
    fdp: float = float('nan')      # 经验错误发现比例
    power: float = float('nan')    # 经验功效
    n_discoveries: int = 0         # 发现数
    sweep_value: float = float('nan')
    seed: int = 0
    overlap: Optional[float] = None
    theta: Optional[float] = None  # lro 系列的 θ（oracle 为所选 θ）
    error: Optional[str] = None    # 失败时的错误信息

    @property
    def failed(self):
        return self.error is not None

    def as_row(self):
        """按 RESULT_COLUMNS 输出一行，失败行的数值列留空"""
        if self.failed:
            return [self.method, repr(self.sweep_value), self.replication, '', '', '', self.seed]
        return [
            self.method,
            repr(self.sweep_value),
            self.replication,
            repr(self.fdp),
            repr(self.power),
            self.n_discoveries,
            self.seed,
        ]

    def group_key(self):
        # 没有扫描变量时 sweep_value 为 nan，nan 不能参与排序和分组
        value = self.sweep_value
        return (self.method, float('-inf') if math.isnan(value) else value)

    def sort_key(self):
        return self.group_key() + (self.replication,)


@dataclass(frozen=True)
class SummaryRow:
    """按 (方法, 扫描值) 聚合的结果"""
    method: str
    sweep_value: float
    replications: int
    failed: int
    mean_fdp: float
    se_fdp: float
    mean_power: float
    se_power: float
    mean_discoveries: float
    mean_theta: float = float('nan')   # lro 系列的平均 θ（oracle 为所选 θ）；其他方法为空

    def as_row(self):
        return [
            self.method, repr(self.sweep_value), self.replications, self.failed,
            repr(self.mean_fdp), repr(self.se_fdp),
            repr(self.mean_power), repr(self.se_power),
            repr(self.mean_discoveries),
            '' if math.isnan(self.mean_theta) else repr(self.mean_theta),
        ]

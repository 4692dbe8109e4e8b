"""
异常类型

所有异常都继承自 ValueError，调用方可以只捕获 ValueError。
命令行按异常类型决定退出码：ConfigError -> 2，DataError -> 3。
"""

from typing import Optional


class TransKnockError(ValueError):
    """基础异常"""


class KnockoffConstructionError(TransKnockError):
    """knockoff构造失败（协方差矩阵分解失败等）"""


class ContractError(TransKnockError):
    """调用前提被违反（例如未声明共享零假设却使用合并先验）"""


class OrderingModelError(TransKnockError):
    """自适应过滤器的排序模型拟合失败"""


class ConfigError(TransKnockError):
    """实验配置无效"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ''
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class DataError(TransKnockError):
    """输入数据文件无效"""

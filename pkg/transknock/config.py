import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _getenv_floats(name, default):
    """读取逗号分隔的浮点数列表"""
    raw = os.getenv(name)
    if not raw:
        return tuple(default)
    return tuple(float(v) for v in raw.split(',') if v.strip())


class SolverConfig:
    """坐标下降求解器与交叉验证的默认设置"""

    TOLERANCE = float(os.getenv('TRANSKNOCK_TOLERANCE', 1e-8))
    MAX_ITER = int(os.getenv('TRANSKNOCK_MAX_ITER', 100000))
    KKT_TOL = 1e-6
    WARM_STEPS = 10

    # 交叉验证路径: 较宽的容差与轮数上限，偏差解释比例饱和时提前终止
    CV_TOLERANCE = float(os.getenv('TRANSKNOCK_CV_TOLERANCE', 1e-6))
    CV_MAX_ITER = int(os.getenv('TRANSKNOCK_CV_MAX_ITER', 10000))
    PATH_MIN_STEPS = 5
    PATH_DEV_RATIO_MAX = 0.999
    PATH_DEV_CHANGE = 1e-5

    # 二项族外层IRLS
    IRLS_MAX_ITER = int(os.getenv('TRANSKNOCK_IRLS_MAX_ITER', 25))
    IRLS_WEIGHT_FLOOR = 1e-5
    IRLS_TOLERANCE = 1e-6

    # λ 网格与 γ 网格
    N_LAMBDA = int(os.getenv('TRANSKNOCK_N_LAMBDA', 100))
    LAMBDA_MIN_RATIO = float(os.getenv('TRANSKNOCK_LAMBDA_MIN_RATIO', 1e-3))
    LAMBDA_MIN_RATIO_WIDE = float(os.getenv('TRANSKNOCK_LAMBDA_MIN_RATIO_WIDE', 1e-2))
    GAMMA_GRID = _getenv_floats('TRANSKNOCK_GAMMA_GRID', (0.0, 0.2, 0.4, 0.6, 0.8, 1.0))
    CV_FOLDS = int(os.getenv('TRANSKNOCK_CV_FOLDS', 5))


class PriorConfig:
    """先验权重 φ 的设置"""

    # φ_j = 1 / (PHI_RIDGE + |b_j| + |b_{j+p}|)
    PHI_RIDGE = float(os.getenv('TRANSKNOCK_PHI_RIDGE', 0.05))


class FilterDefaults:
    """knockoff过滤器默认参数"""

    Q = float(os.getenv('TRANSKNOCK_Q', 0.1))
    OFFSET = int(os.getenv('TRANSKNOCK_OFFSET', 1))
    LOGISTIC_RIDGE = 1e-4
    LOGISTIC_MAX_ITER = 50


class RunConfig:
    """模拟运行设置"""

    RESULTS_DIR = os.getenv('TRANSKNOCK_RESULTS_DIR', 'results')
    WORKERS = int(os.getenv('TRANSKNOCK_WORKERS', os.cpu_count() or 1))
    LOG_LEVEL = os.getenv('TRANSKNOCK_LOG_LEVEL', 'INFO')
    SEED = int(os.getenv('TRANSKNOCK_SEED', 20240601))

    @classmethod
    def get_log_params(cls):
        """logging.basicConfig 参数"""
        return {
            'level': cls.LOG_LEVEL.upper(),
            'format': '%(asctime)s - %(levelname)s - %(message)s',
        }

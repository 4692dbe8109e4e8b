#!/usr/bin/env python3
"""
迁移学习knockoff模拟运行脚本

用法:
    python run_simulation.py run experiment.cfg --out results/demo --workers 4
    python run_simulation.py sweep scripts/theta_sweep_config.cfg > summary.csv
    python run_simulation.py filter stats.txt --q 0.1 --offset 1 --mode threshold
"""

import sys

from transknock.cli import main


if __name__ == '__main__':
    sys.exit(main())

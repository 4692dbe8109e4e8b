#!/usr/bin/env python3
"""
重叠扫描结果检查脚本
读取 summary.csv，检查 FDR 控制、pooling 失效、功效排序与 θ 敏感性
"""

import argparse
import csv
import math
import sys
from pathlib import Path


VALID_METHODS = ('vanilla', 'lro(0.1)', 'adaptive', 'weighted_lasso')


class SummaryChecker:
    """summary.csv 检查器"""

    def __init__(self, summary_path, q=0.1, power_gain=0.03, power_slack=0.05):
        self.summary_path = Path(summary_path)
        self.q = q
        self.power_gain = power_gain
        self.power_slack = power_slack
        self.table = self._load()
        self.results = []

    def _load(self):
        table = {}
        with open(self.summary_path, 'r', encoding='utf-8', newline='') as f:
            for row in csv.DictReader(f):
                key = (row['method'], float(row['sweep_value']))
                table[key] = {
                    'fdr': float(row['mean_fdp']),
                    'se_fdr': float(row['se_fdp']) if row['se_fdp'] else 0.0,
                    'power': float(row['mean_power']),
                }
        return table

    def overlaps(self):
        return sorted({value for _, value in self.table if not math.isnan(value)})

    def get(self, method, overlap):
        return self.table.get((method, overlap))

    def record(self, name, ok, detail):
        self.results.append((name, ok, detail))

    def check_fdr_control(self):
        for method in VALID_METHODS:
            for overlap in self.overlaps():
                row = self.get(method, overlap)
                if row is None:
                    continue
                bound = self.q + 3 * row['se_fdr']
                self.record(
                    f"FDR {method} @ overlap={overlap:g}",
                    row['fdr'] <= bound,
                    f"{row['fdr']:.4f} <= {bound:.4f}",
                )

    def check_pooling_invalid(self):
        row = self.get('pooling', 0.0)
        if row is None:
            return
        bound = self.q + 3 * row['se_fdr']
        self.record("pooling FDR 超出 @ overlap=0", row['fdr'] > bound, f"{row['fdr']:.4f} > {bound:.4f}")

    def check_power_ordering(self):
        for method in ('weighted_lasso', 'adaptive'):
            for overlap, check in ((1.0, 'gain'), (0.0, 'slack')):
                row, base = self.get(method, overlap), self.get('vanilla', overlap)
                if row is None or base is None:
                    continue
                if check == 'gain':
                    ok = row['power'] >= base['power'] + self.power_gain
                    detail = f"{row['power']:.4f} >= {base['power']:.4f} + {self.power_gain}"
                else:
                    ok = row['power'] >= base['power'] - self.power_slack
                    detail = f"{row['power']:.4f} >= {base['power']:.4f} - {self.power_slack}"
                self.record(f"功效 {method} vs vanilla @ overlap={overlap:g}", ok, detail)

    def check_theta_sensitivity(self):
        gaps = {}
        for method in ('lro(0.1)', 'lro(0.4)'):
            high, low = self.get(method, 1.0), self.get(method, 0.0)
            if high is None or low is None:
                return
            gaps[method] = high['power'] - low['power']
        self.record(
            "θ 敏感性 lro(0.4) vs lro(0.1)",
            gaps['lro(0.4)'] > gaps['lro(0.1)'],
            f"{gaps['lro(0.4)']:.4f} > {gaps['lro(0.1)']:.4f}",
        )

    def run_all(self):
        self.check_fdr_control()
        self.check_pooling_invalid()
        self.check_power_ordering()
        self.check_theta_sensitivity()
        return self.results


def main():
    """主函数"""
    parser = argparse.ArgumentParser(description='重叠扫描结果检查工具')
    parser.add_argument('summary', help='summary.csv 路径')
    parser.add_argument('--q', type=float, default=0.1, help='名义FDR水平 (默认: 0.1)')
    args = parser.parse_args()

    print("重叠扫描结果检查")
    print("=" * 60)

    try:
        checker = SummaryChecker(args.summary, q=args.q)
    except FileNotFoundError:
        print(f"错误: 找不到汇总文件: {args.summary}")
        return 1
    except (KeyError, ValueError) as e:
        print(f"错误: 汇总文件格式无效: {e}")
        return 1

    results = checker.run_all()
    if not results:
        print("没有可检查的条目（缺少所需方法或扫描值）")
        return 1

    failed = 0
    for name, ok, detail in results:
        print(f"{'✓' if ok else '✗'} {name}: {detail}")
        failed += not ok

    print("-" * 60)
    print(f"通过: {len(results) - failed}  失败: {failed}")
    return 0 if failed == 0 else 1


if __name__ == '__main__':
    sys.exit(main())

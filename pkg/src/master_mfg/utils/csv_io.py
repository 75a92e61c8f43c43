"""
CSV 入出力モジュール。

このモジュールは、列順を固定した CSV の書き出しを提供します。
浮動小数は repr で書き出すため、同じ入力からは同じバイト列になります。
"""

import csv
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from src.master_mfg.core.policy import MasterPolicy
from src.master_mfg.meanfield.flow import MeanFieldFlow

EXPLOITABILITY_COLUMNS: tuple[str, ...] = (
    'iteration',
    'seed',
    'mu0_label',
    'noise_label',
    'gap',
)
SUMMARY_COLUMNS: tuple[str, ...] = ('iteration', 'mean', 'std', 'runs')


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float | np.floating):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_rows(
    file_path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]
) -> None:
    """ヘッダ行付きで行を書き出します。列にない値は無視します。"""
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[column]) for column in columns])


def read_rows(file_path: Path) -> list[dict[str, str]]:
    """write_rows で書き出した CSV を文字列の辞書として読み込みます。"""
    with open(file_path, encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


def summarize_runs(rows: Iterable[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """反復ごとに、シードごとの平均 gap の平均と標準偏差を計算します。

    Args:
        rows: iteration、seed、gap を含む行

    Returns:
        list: iteration、mean、std、runs を持つ行(反復の昇順)
    """
    per_run: dict[int, dict[Any, list[float]]] = {}
    for row in rows:
        iteration = int(row['iteration'])
        per_run.setdefault(iteration, {}).setdefault(row['seed'], []).append(
            float(row['gap'])
        )
    summary = []
    for iteration in sorted(per_run):
        means = np.array([np.mean(gaps) for gaps in per_run[iteration].values()])
        summary.append(
            {
                'iteration': iteration,
                'mean': float(means.mean()),
                'std': float(means.std()),
                'runs': len(means),
            }
        )
    return summary


def export_policy_csv(
    policy: MasterPolicy,
    flow: MeanFieldFlow,
    action_names: Sequence[str],
    file_path: Path,
) -> None:
    """評価フローに沿った行動確率表を書き出します(列: n, state, 各行動)。"""
    columns = ('n', 'state', *action_names)
    rows = []
    for n in range(flow.horizon + 1):
        table = policy.distribution(n, flow[n], flow.observation(n))
        for x, probabilities in enumerate(table):
            row: dict[str, Any] = {'n': n, 'state': x}
            row.update(
                zip(action_names, (float(p) for p in probabilities), strict=True)
            )
            rows.append(row)
    write_rows(file_path, columns, rows)

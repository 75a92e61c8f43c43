"""
プロットモジュール。

このモジュールは、exploitability の平均を折れ線、±標準偏差を帯で描いた
SVG を書き出します。SVG の日付メタデータは出力しません。
"""

from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402


def plot_exploitability(
    curves: Mapping[str, Sequence[Mapping[str, Any]]],
    file_path: Path,
    title: str = 'exploitability',
) -> None:
    """反復ごとの平均 ± 標準偏差を SVG に描きます。

    Args:
        curves: 系列名から summarize_runs の行への写像
        file_path: 出力する SVG のパス
        title: 図のタイトル
    """
    file_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        for name, rows in curves.items():
            iterations = [row['iteration'] for row in rows]
            mean = [row['mean'] for row in rows]
            lower = [row['mean'] - row['std'] for row in rows]
            upper = [row['mean'] + row['std'] for row in rows]
            (line,) = ax.plot(iterations, mean, label=name)
            ax.fill_between(iterations, lower, upper, color=line.get_color(), alpha=0.2)
        ax.set_xlabel('iteration')
        ax.set_ylabel('exploitability')
        ax.set_title(title)
        if len(curves) > 1:
            ax.legend()
        fig.tight_layout()
        # 要素 ID のソルトを固定する
        with plt.rc_context({'svg.hashsalt': 'master_mfg'}):
            fig.savefig(file_path, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)

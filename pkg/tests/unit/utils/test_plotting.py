"""
プロットモジュールのテスト。
"""

from pathlib import Path

from src.master_mfg.utils.plotting import plot_exploitability


def test_plot_writes_svg_without_date(tmp_path: Path) -> None:
    """SVG が書き出され日付メタデータを含まないことのテスト。"""
    rows = [
        {'iteration': 1, 'mean': 2.0, 'std': 0.5, 'runs': 2},
        {'iteration': 2, 'mean': 1.0, 'std': 0.2, 'runs': 2},
    ]
    file_path = tmp_path / 'plots' / 'exploitability.svg'
    plot_exploitability({'tau=1': rows, 'tau=10': rows}, file_path, title='sweep')
    content = file_path.read_text(encoding='utf-8')
    assert content.lstrip().startswith('<?xml')
    assert '<dc:date>' not in content


def test_plot_is_reproducible(tmp_path: Path) -> None:
    """同じ入力から同じ SVG になることのテスト。"""
    rows = [{'iteration': 1, 'mean': 1.0, 'std': 0.0, 'runs': 1}]
    first = tmp_path / 'a.svg'
    second = tmp_path / 'b.svg'
    plot_exploitability({'run': rows}, first)
    plot_exploitability({'run': rows}, second)
    assert first.read_bytes() == second.read_bytes()

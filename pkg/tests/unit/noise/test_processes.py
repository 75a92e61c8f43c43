"""
共通ノイズ過程のテスト。
"""

from pathlib import Path

import numpy as np
import pytest

from src.master_mfg.core.errors import NoiseError
from src.master_mfg.noise.processes import (
    CommonNoisePath,
    NoiseTree,
    closure_process,
    default_closure_window,
    dump_paths_csv,
    load_paths_csv,
    lq_step_process,
    reveal,
    sample_closure_paths,
    split_by_origin,
)


def test_closure_switches_once_inside_window() -> None:
    """開閉経路がウィンドウ内で一度だけ閉店に切り替わることのテスト。"""
    for seed in range(20):
        path = closure_process(12, (4, 8), seed=seed)
        values = path.as_array()
        switch = int(np.argmin(values))
        assert 4 <= switch < 8
        assert (values[:switch] == 1.0).all()
        assert (values[switch:] == 0.0).all()
        assert path.kind == 'closure'
        assert path.horizon == 12


def test_closure_invalid_window() -> None:
    """不正なウィンドウのテスト。"""
    with pytest.raises(NoiseError):
        closure_process(10, (5, 5))
    with pytest.raises(NoiseError):
        closure_process(10, (2, 11))


def test_default_window() -> None:
    """既定ウィンドウ [N_T/3, 2N_T/3) のテスト。"""
    assert default_closure_window(30) == (10, 20)
    lo, hi = default_closure_window(2)
    assert 0 <= lo < hi <= 2


def test_sample_closure_paths_deterministic() -> None:
    """経路のサンプルがシードから決定的であることのテスト。"""
    first = sample_closure_paths(9, None, 4, seed=5)
    second = sample_closure_paths(9, None, 4, seed=5)
    assert first == second
    assert [path.label for path in first] == [f'closure_{i}' for i in range(4)]


def test_lq_step_process() -> None:
    """LQ の階段状ノイズの値と符号反転のテスト。"""
    xi1 = lq_step_process('xi1', 30)
    xi2 = lq_step_process('xi2', 30)
    assert xi1.value(0) == -10.0
    assert xi1.value(8) == -10.0
    assert xi1.value(9) == 0.0
    assert xi1.value(20) == 0.0
    assert xi1.value(21) == 10.0
    np.testing.assert_array_equal(xi2.as_array(), -xi1.as_array())
    with pytest.raises(NoiseError):
        lq_step_process('xi3', 30)  # type: ignore[arg-type]


def test_reveal_pads_future_with_zeros() -> None:
    """開示されていない時刻がゼロ埋めされることのテスト。"""
    path = CommonNoisePath(values=(1.0, 2.0, 3.0, 4.0), label='p')
    obs = reveal(path, 1)
    np.testing.assert_array_equal(obs.padded, [1.0, 2.0, 0.0, 0.0])
    assert obs.reveal_index == 1
    assert obs.path_label == 'p'
    assert not obs.padded.flags.writeable
    with pytest.raises(NoiseError):
        reveal(path, 4)


def test_path_validation() -> None:
    """空の経路と非有限値のテスト。"""
    with pytest.raises(NoiseError):
        CommonNoisePath(values=(), label='empty')
    with pytest.raises(NoiseError):
        CommonNoisePath(values=(0.0, float('nan')), label='nan')


def test_paths_csv_round_trip(tmp_path: Path) -> None:
    """経路 CSV の書き出しと読み込みのテスト。"""
    paths = [closure_process(5, seed=1, label='closure_0'), lq_step_process('xi1', 5)]
    file_path = tmp_path / 'paths.csv'
    dump_paths_csv(paths, file_path)
    assert load_paths_csv(file_path) == paths


def test_paths_csv_keeps_kind_column(tmp_path: Path) -> None:
    """種別がラベルではなく列から読み込まれることのテスト。"""
    paths = [
        CommonNoisePath(values=(1.0, 0.0), label='bar_custom', kind='closure'),
        CommonNoisePath(values=(-10.0, 0.0), label='closure_like', kind='lq'),
    ]
    file_path = tmp_path / 'paths.csv'
    dump_paths_csv(paths, file_path)
    header = file_path.read_text(encoding='utf-8').splitlines()[0]
    assert header == 'label,kind,xi_0,xi_1'
    loaded = load_paths_csv(file_path)
    assert [path.kind for path in loaded] == ['closure', 'lq']


def test_paths_csv_rejects_missing_header(tmp_path: Path) -> None:
    """ヘッダの無い CSV と未知の種別が拒否されることのテスト。"""
    file_path = tmp_path / 'paths.csv'
    file_path.write_text('closure_0,1.0,0.0\n', encoding='utf-8')
    with pytest.raises(NoiseError):
        load_paths_csv(file_path)
    file_path.write_text('label,kind,xi_0\np,wind,1.0\n', encoding='utf-8')
    with pytest.raises(NoiseError):
        load_paths_csv(file_path)


def test_observation_history_ignores_future() -> None:
    """開示時刻までが同じ経路の観測が同じ履歴を持つことのテスト。"""
    early = closure_process(4, (1, 2), label='closure_early')
    late = closure_process(4, (3, 4), label='closure_late')
    assert reveal(early, 0).history == reveal(late, 0).history == (1.0,)
    assert reveal(early, 1).history == (1.0, 0.0)
    assert reveal(late, 1).history == (1.0, 1.0)
    assert late.history(2) == (1.0, 1.0, 1.0)


def test_noise_tree_groups_and_branches() -> None:
    """ノイズ木の履歴グループと子の条件付き確率のテスト。"""
    paths = (
        CommonNoisePath(values=(1.0, 1.0, 0.0), label='a', kind='closure'),
        CommonNoisePath(values=(1.0, 1.0, 1.0), label='b', kind='closure'),
        CommonNoisePath(values=(1.0, 0.0, 0.0), label='c', kind='closure'),
    )
    tree = NoiseTree(paths)
    assert tree.label == 'a+b+c'
    assert tree.horizon == 2
    assert tree.groups(0) == [(0, 1, 2)]
    assert tree.groups(1) == [(0, 1), (2,)]
    assert tree.groups(2) == [(0,), (1,), (2,)]
    children = dict(tree.branches((1.0,)))
    assert children == pytest.approx({(1.0, 1.0): 2 / 3, (1.0, 0.0): 1 / 3})
    assert dict(tree.branches((1.0, 0.0))) == {(1.0, 0.0, 0.0): 1.0}
    assert tree.contains((1.0, 1.0))
    assert not tree.contains((0.0,))
    with pytest.raises(NoiseError):
        tree.branches((0.0,))
    with pytest.raises(NoiseError):
        tree.branches((1.0, 1.0, 0.0))


def test_noise_tree_validation() -> None:
    """空の木、ホライズンの不一致、ラベル重複のテスト。"""
    with pytest.raises(NoiseError):
        NoiseTree(())
    with pytest.raises(NoiseError):
        NoiseTree((lq_step_process('xi1', 3), lq_step_process('xi2', 4)))
    path = lq_step_process('xi1', 3)
    with pytest.raises(NoiseError):
        NoiseTree((path, path))


def test_split_by_origin() -> None:
    """初期値 ξ₀ ごとに木が分かれることのテスト。"""
    closures = sample_closure_paths(6, (1, 4), 3, seed=0)
    assert [len(tree) for tree in split_by_origin(closures)] == [3]
    trees = split_by_origin([lq_step_process('xi1', 5), lq_step_process('xi2', 5)])
    assert [tree.label for tree in trees] == ['xi1', 'xi2']

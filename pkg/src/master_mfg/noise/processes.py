"""
共通ノイズ過程モジュール。

このモジュールは、ビーチバーの開閉切替過程、LQ の階段状ノイズ、
履歴 Ξ_n の開示(reveal)、設定された経路が張るノイズ木、
および経路の CSV 入出力を提供します。
"""

import csv
import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, cast, get_args

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import NoiseError

logger = logging.getLogger(__name__)

NoiseKind = Literal['closure', 'lq']
LqVariant = Literal['xi1', 'xi2']

# 開示済みの履歴 (ξ₀, …, ξ_n)。表形式方策と系譜キャッシュのキー
NoiseHistory = tuple[float, ...]

# LQ ノイズの区切り時刻と振幅
LQ_EARLY_END: int = 8
LQ_LATE_START: int = 20
LQ_AMPLITUDE: float = 10.0

PATHS_CSV_HEADER = ('label', 'kind')


@dataclass(frozen=True)
class CommonNoisePath:
    """実現した共通ノイズ経路 Ξ_{N_T} = (ξ₀, …, ξ_{N_T})。

    Attributes:
        values: 各時刻のノイズ値(LQ は実数、ビーチバーは開店フラグ 1/0)
        label: 経路の識別子
        kind: ノイズの種類
    """

    values: tuple[float, ...]
    label: str
    kind: NoiseKind = 'lq'

    def __post_init__(self) -> None:
        if len(self.values) == 0:
            raise NoiseError('ノイズ経路が空です')
        if not all(np.isfinite(v) for v in self.values):
            raise NoiseError(f'ノイズ経路 {self.label} に非有限値があります')

    @property
    def horizon(self) -> int:
        """ホライズン N_T(経路長 - 1)。"""
        return len(self.values) - 1

    def value(self, n: int) -> float:
        """時刻 n のノイズ値 ξ_n を返します。"""
        return self.values[n]

    def history(self, n: int) -> NoiseHistory:
        """時刻 n までの履歴 Ξ_n を返します。"""
        return tuple(float(v) for v in self.values[: n + 1])

    def as_array(self) -> npt.NDArray[np.float64]:
        """経路を配列として返します。"""
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class NoiseObservation:
    """時刻 n までを開示しゼロ埋めしたノイズ観測。

    Attributes:
        padded: 長さ N_T + 1 のベクトル。位置 n より後は 0。
        reveal_index: 開示済みの最終時刻 n
        path_label: 観測元の経路ラベル(ログとエクスポート用)
    """

    padded: npt.NDArray[np.float64] = field(repr=False)
    reveal_index: int
    path_label: str

    @property
    def history(self) -> NoiseHistory:
        """開示済みの履歴 Ξ_n。同じ履歴を持つ観測は経路によらず等しいキーです。"""
        return tuple(float(v) for v in self.padded[: self.reveal_index + 1])


@dataclass(frozen=True)
class NoiseTree:
    """設定された経路を等確率の経験分布とみなしたノイズ木。

    時刻 n の節点は履歴 Ξ_n で、子の条件付き確率はその履歴を共有する
    経路の本数の比です。

    Attributes:
        paths: 木を張る経路(同じホライズン、ラベルは一意)
    """

    paths: tuple[CommonNoisePath, ...]

    def __post_init__(self) -> None:
        if not self.paths:
            raise NoiseError('ノイズ木に経路がありません')
        horizons = {path.horizon for path in self.paths}
        if len(horizons) != 1:
            raise NoiseError(f'経路のホライズンが揃っていません: {sorted(horizons)}')
        labels = [path.label for path in self.paths]
        if len(set(labels)) != len(labels):
            raise NoiseError(f'経路ラベルが重複しています: {labels}')

    @property
    def horizon(self) -> int:
        """ホライズン N_T。"""
        return self.paths[0].horizon

    @property
    def label(self) -> str:
        """木のラベル(経路ラベルの連結)。"""
        return '+'.join(path.label for path in self.paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self) -> Iterator[CommonNoisePath]:
        return iter(self.paths)

    def groups(self, n: int) -> list[tuple[int, ...]]:
        """時刻 n の履歴を共有する経路番号の組を、初出順に返します。"""
        members: dict[NoiseHistory, list[int]] = {}
        for i, path in enumerate(self.paths):
            members.setdefault(path.history(n), []).append(i)
        return [tuple(indices) for indices in members.values()]

    def contains(self, history: NoiseHistory) -> bool:
        """履歴がいずれかの経路の接頭辞であるかどうか。"""
        n = len(history) - 1
        return 0 <= n <= self.horizon and any(
            path.history(n) == history for path in self.paths
        )

    def branches(self, history: NoiseHistory) -> list[tuple[NoiseHistory, float]]:
        """履歴 Ξ_n の子 Ξ_{n+1} と条件付き確率を初出順に返します。

        Raises:
            NoiseError: 履歴が木に無い場合、または終端の場合
        """
        n = len(history) - 1
        if not 0 <= n < self.horizon:
            raise NoiseError(f'履歴の長さ {n + 1} には子がありません')
        counts: dict[NoiseHistory, int] = {}
        for path in self.paths:
            if path.history(n) == history:
                child = path.history(n + 1)
                counts[child] = counts.get(child, 0) + 1
        total = sum(counts.values())
        if total == 0:
            raise NoiseError(f'履歴 {history} はノイズ木にありません')
        return [(child, count / total) for child, count in counts.items()]


def split_by_origin(paths: Sequence[CommonNoisePath]) -> list[NoiseTree]:
    """経路を初期値 ξ₀ ごとのノイズ木に分けます(初出順)。"""
    origins: dict[float, list[CommonNoisePath]] = {}
    for path in paths:
        origins.setdefault(float(path.values[0]), []).append(path)
    return [NoiseTree(tuple(members)) for members in origins.values()]

def default_closure_window(horizon: int) -> tuple[int, int]:
    """開閉切替の既定ウィンドウ [N_T/3, 2N_T/3) を返します。"""
    lo = horizon // 3
    hi = max(2 * horizon // 3, lo + 1)
    return lo, min(hi, horizon)


def closure_process(
    horizon: int,
    window: tuple[int, int] | None = None,
    seed: int = 0,
    label: str | None = None,
) -> CommonNoisePath:
    """ビーチバーの開閉切替経路を生成します。

    経路は開店 (1) から始まり、ウィンドウ内で一様に選ばれた時刻 s で
    一度だけ閉店 (0) に切り替わります(n < s で 1、n ≥ s で 0)。

    Args:
        horizon: ホライズン N_T
        window: 切替時刻の範囲 (lo, hi)。lo 以上 hi 未満から選ばれます。
        seed: 乱数シード
        label: 経路ラベル。省略時は切替時刻から生成します。

    Returns:
        CommonNoisePath: 開閉フラグの経路

    Raises:
        NoiseError: ウィンドウが 0 ≤ lo < hi ≤ horizon を満たさない場合
    """
    lo, hi = window if window is not None else default_closure_window(horizon)
    if not 0 <= lo < hi <= horizon:
        raise NoiseError(
            f'切替ウィンドウが不正です: ({lo}, {hi}), horizon={horizon}'
        )
    rng = np.random.default_rng(seed)
    switch = int(rng.integers(lo, hi))
    flags = tuple(1.0 if n < switch else 0.0 for n in range(horizon + 1))
    return CommonNoisePath(
        values=flags, label=label or f'closure_{switch}', kind='closure'
    )


def sample_closure_paths(
    horizon: int, window: tuple[int, int] | None, count: int, seed: int
) -> list[CommonNoisePath]:
    """開閉切替経路を count 本サンプルします(シードから決定的)。"""
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)
    return [
        closure_process(horizon, window, int(s), label=f'closure_{i}')
        for i, s in enumerate(seeds)
    ]


def lq_step_process(variant: LqVariant, horizon: int) -> CommonNoisePath:
    """LQ の階段状共通ノイズ経路を生成します。

    xi1 は n ≤ 8 で -10、8 < n ≤ 20 で 0、n > 20 で +10。xi2 はその符号反転です。

    Args:
        variant: 'xi1' または 'xi2'
        horizon: ホライズン N_T

    Returns:
        CommonNoisePath: ノイズ経路
    """
    if variant not in ('xi1', 'xi2'):
        raise NoiseError(f'未知の LQ ノイズ種別です: {variant}')
    if horizon <= LQ_LATE_START:
        logger.warning(
            'horizon=%d では LQ ノイズの区切り (8, 20) の一部が現れません', horizon
        )
    sign = 1.0 if variant == 'xi1' else -1.0
    values = []
    for n in range(horizon + 1):
        if n <= LQ_EARLY_END:
            base = -LQ_AMPLITUDE
        elif n <= LQ_LATE_START:
            base = 0.0
        else:
            base = LQ_AMPLITUDE
        values.append(sign * base + 0.0)
    return CommonNoisePath(values=tuple(values), label=variant, kind='lq')


def reveal(path: CommonNoisePath, n: int) -> NoiseObservation:
    """時刻 n までの履歴を開示し、残りをゼロ埋めした観測を返します。

    Args:
        path: ノイズ経路
        n: 開示する最終時刻

    Returns:
        NoiseObservation: 長さ N_T + 1 の観測

    Raises:
        NoiseError: n が [0, N_T] の外にある場合
    """
    if not 0 <= n <= path.horizon:
        raise NoiseError(f'開示時刻 {n} が範囲 [0, {path.horizon}] の外です')
    padded = np.zeros(path.horizon + 1, dtype=np.float64)
    padded[: n + 1] = path.values[: n + 1]
    padded.flags.writeable = False
    return NoiseObservation(padded=padded, reveal_index=n, path_label=path.label)


def dump_paths_csv(paths: Sequence[CommonNoisePath], file_path: Path) -> None:
    """経路を CSV に書き出します。

    1 行目はヘッダ (label, kind, xi_0, …)、以降 1 行 = 1 経路です。
    """
    file_path.parent.mkdir(parents=True, exist_ok=True)
    width = max((len(path.values) for path in paths), default=0)
    with open(file_path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow([*PATHS_CSV_HEADER, *(f'xi_{n}' for n in range(width))])
        for path in paths:
            writer.writerow([path.label, path.kind, *(repr(v) for v in path.values)])


def load_paths_csv(file_path: Path) -> list[CommonNoisePath]:
    """dump_paths_csv で書き出した経路を読み込みます。

    Raises:
        NoiseError: ヘッダが無い場合、または未知の種別の場合
    """
    paths = []
    with open(file_path, encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header[:2]) != PATHS_CSV_HEADER:
            raise NoiseError(f'経路 CSV のヘッダが不正です: {file_path}')
        for row in reader:
            if not row:
                continue
            label, kind, *values = row
            if kind not in get_args(NoiseKind):
                raise NoiseError(f'経路 {label} の種別が不明です: {kind}')
            paths.append(
                CommonNoisePath(
                    values=tuple(float(v) for v in values if v != ''),
                    label=label,
                    kind=cast(NoiseKind, kind),
                )
            )
    return paths

"""
表形式 Q モジュール。

このモジュールは、(時刻, 分布キー, ノイズキー) ごとに |𝒳|×|𝒜| の値表を保持する
連想テーブル TabularQ を提供します。Q^π、Q*、Q̃ のいずれもこの形で保持します。
"""

from collections.abc import Hashable, Iterator
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import FlowMismatchError, PolicyKeyMissError
from src.master_mfg.core.numerics import DistributionKey

if TYPE_CHECKING:
    from src.master_mfg.meanfield.flow import MeanFieldFlow

TableKey = tuple[int, DistributionKey, Hashable | None]


class TabularQ:
    """(n, x, 分布キー, ノイズキー, a) → 実数 の連想テーブル。

    格納された値表は読み取り専用になり、検索は完全一致のみです(補間なし)。

    Attributes:
        n_states: 状態数
        n_actions: 行動数
    """

    def __init__(self, n_states: int, n_actions: int) -> None:
        """初期化メソッド。

        Args:
            n_states: 状態数 |𝒳|
            n_actions: 行動数 |𝒜|
        """
        self.n_states = n_states
        self.n_actions = n_actions
        self._entries: dict[TableKey, npt.NDArray[np.float64]] = {}

    def store(
        self,
        n: int,
        key: DistributionKey,
        noise_key: Hashable | None,
        values: npt.ArrayLike,
    ) -> npt.NDArray[np.float64]:
        """値表を格納します。既に同じキーがあれば既存の値を返します。

        Args:
            n: 時刻
            key: 分布キー
            noise_key: ノイズキー(ノイズなしは None)
            values: (|𝒳|, |𝒜|) の値表

        Returns:
            NDArray: テーブルに格納されている値表

        Raises:
            ValueError: 形状不一致または非有限値の場合
        """
        table = np.array(values, dtype=np.float64)
        if table.shape != (self.n_states, self.n_actions):
            raise ValueError(
                f'値表の形状 {table.shape} が '
                f'({self.n_states}, {self.n_actions}) と一致しません'
            )
        if not np.all(np.isfinite(table)):
            raise ValueError(f'時刻 {n} の値表に非有限値があります')
        table.flags.writeable = False
        return self._entries.setdefault((n, key, noise_key), table)

    def table(
        self, n: int, key: DistributionKey, noise_key: Hashable | None = None
    ) -> npt.NDArray[np.float64]:
        """格納済みの値表を返します。

        Raises:
            PolicyKeyMissError: キーが存在しない場合
        """
        try:
            return self._entries[(n, key, noise_key)]
        except KeyError:
            raise PolicyKeyMissError(n, key, noise_key) from None

    def value(
        self,
        n: int,
        x: int,
        key: DistributionKey,
        noise_key: Hashable | None,
        a: int,
    ) -> float:
        """単一要素 Q_n(x, μ, Ξ, a) を返します。"""
        return float(self.table(n, key, noise_key)[x, a])

    def __contains__(self, item: object) -> bool:
        return item in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[TableKey]:
        return iter(self._entries)

    @classmethod
    def from_flow(
        cls, values: npt.ArrayLike, flow: 'MeanFieldFlow'
    ) -> 'TabularQ':
        """フローに沿った (N_T+1, |𝒳|, |𝒜|) 配列からテーブルを作ります。

        Args:
            values: 時刻ごとの値表
            flow: 値表が対応する平均場フロー

        Returns:
            TabularQ: フロー上のキーで索引付けたテーブル
        """
        stacked = np.asarray(values, dtype=np.float64)
        if stacked.ndim != 3 or stacked.shape[0] != flow.horizon + 1:
            raise FlowMismatchError(
                f'値表の時刻数 {stacked.shape[0]} がフロー長 {flow.horizon + 1} と'
                '一致しません'
            )
        q = cls(stacked.shape[1], stacked.shape[2])
        for n in range(flow.horizon + 1):
            q.store(n, flow.key(n), flow.noise_key(n), stacked[n])
        return q

    def along(self, flow: 'MeanFieldFlow') -> npt.NDArray[np.float64]:
        """フロー上の値表を (N_T+1, |𝒳|, |𝒜|) 配列として取り出します。"""
        return np.stack(
            [
                self.table(n, flow.key(n), flow.noise_key(n))
                for n in range(flow.horizon + 1)
            ]
        )

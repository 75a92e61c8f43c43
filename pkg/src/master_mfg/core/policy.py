"""
方策モジュール。

このモジュールは、マスター方策 π(·|n, x, μ, Ξ) のプロトコルと、
一様方策、集団非依存の表形式方策(時刻のみ、またはノイズ履歴付き)、
分布キー付き表形式方策の実現を提供します。
"""

from collections.abc import Hashable, Sequence
from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import PolicyKeyMissError
from src.master_mfg.core.numerics import distribution_key, softmax_policy
from src.master_mfg.core.spaces import check_action_rows
from src.master_mfg.core.tabular import TabularQ

if TYPE_CHECKING:
    from src.master_mfg.noise.processes import CommonNoisePath, NoiseObservation

PolicyTable = npt.NDArray[np.float64]


@runtime_checkable
class MasterPolicy(Protocol):
    """マスター方策のプロトコル。

    distribution は時刻 n、集団分布 μ、開示済みノイズ観測を受け取り、
    全状態の行動分布を (|𝒳|, |𝒜|) 行列で返します。
    """

    population_dependent: bool

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: 'NoiseObservation | None' = None,
    ) -> PolicyTable: ...


def noise_key_of(obs: 'NoiseObservation | None') -> Hashable | None:
    """ノイズ観測から表形式方策用のノイズキー(開示済みの履歴 Ξ_n)を取り出します。

    キーは開示済みの接頭辞だけで決まり、未来のノイズを含みません。
    """
    return None if obs is None else obs.history


class UniformPolicy:
    """全状態で一様な方策。"""

    population_dependent = False

    def __init__(self, n_states: int, n_actions: int) -> None:
        self._table = np.full((n_states, n_actions), 1.0 / n_actions)
        self._table.flags.writeable = False

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: 'NoiseObservation | None' = None,
    ) -> PolicyTable:
        return self._table


class TabularPolicy:
    """集団に依存しない表形式方策 π_n(a|x)。

    Attributes:
        table: (N_T+1, |𝒳|, |𝒜|) の行動確率
    """

    population_dependent = False

    def __init__(self, table: npt.ArrayLike) -> None:
        """初期化メソッド。

        Args:
            table: 時刻ごとの行動確率

        Raises:
            DistributionError: 単体条件を満たさない行がある場合
        """
        stacked = np.array(table, dtype=np.float64)
        for rows in stacked:
            check_action_rows(rows)
        stacked.flags.writeable = False
        self.table = stacked

    @property
    def horizon(self) -> int:
        """ホライズン N_T。"""
        return self.table.shape[0] - 1

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: 'NoiseObservation | None' = None,
    ) -> PolicyTable:
        return self.table[n]

    @classmethod
    def softmax(cls, q: npt.ArrayLike, tau: float) -> 'TabularPolicy':
        """(N_T+1, |𝒳|, |𝒜|) の値から softmax 方策を作ります。"""
        return cls(softmax_policy(q, tau))

    @classmethod
    def greedy(cls, q: npt.ArrayLike) -> 'TabularPolicy':
        """値の argmax による決定的方策を作ります(同値は小さい行動番号)。"""
        values = np.asarray(q, dtype=np.float64)
        table = np.zeros_like(values)
        best = values.argmax(axis=-1)
        np.put_along_axis(table, best[..., None], 1.0, axis=-1)
        return cls(table)


class HistoryTabularPolicy:
    """(時刻, 開示済みノイズ履歴) で索引付けた集団非依存の表形式方策。

    共通ノイズ下の FP と OMD が返す方策です。同じ履歴 Ξ_n を共有する経路では
    同じ行動分布を使います。

    Attributes:
        tables: (n, 履歴) → (|𝒳|, |𝒜|) の行動確率
    """

    population_dependent = False

    def __init__(
        self, tables: dict[tuple[int, Hashable | None], npt.NDArray[np.float64]]
    ) -> None:
        for rows in tables.values():
            check_action_rows(rows)
            rows.flags.writeable = False
        self.tables = tables

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: 'NoiseObservation | None' = None,
    ) -> PolicyTable:
        noise_key = noise_key_of(obs)
        try:
            return self.tables[(n, noise_key)]
        except KeyError:
            raise PolicyKeyMissError(n, None, noise_key) from None

    @classmethod
    def from_paths(
        cls,
        tables: Sequence[npt.ArrayLike],
        paths: Sequence['CommonNoisePath | None'],
    ) -> 'HistoryTabularPolicy':
        """経路ごとの (N_T+1, |𝒳|, |𝒜|) 方策表から履歴キーの方策を作ります。

        Args:
            tables: 経路ごとの方策表
            paths: 各方策表が対応する経路(ノイズなしは None)

        Returns:
            HistoryTabularPolicy: 履歴で索引付けた方策

        Raises:
            ValueError: 同じ履歴で異なる行動分布が与えられた場合
        """
        entries: dict[tuple[int, Hashable | None], npt.NDArray[np.float64]] = {}
        for table, path in zip(tables, paths, strict=True):
            stacked = np.array(table, dtype=np.float64)
            for n, rows in enumerate(stacked):
                key = (n, None if path is None else path.history(n))
                known = entries.setdefault(key, rows)
                if not np.allclose(known, rows, rtol=0.0, atol=1e-12):
                    raise ValueError(f'履歴 {key} で方策表が一致しません')
        return cls(entries)


class KeyedTabularPolicy:
    """(時刻, 分布キー, ノイズキー) で索引付けた集団依存の表形式方策。

    Q̃ テーブルの softmax として定義され、未登録のキーでは
    PolicyKeyMissError を送出します(既定値で補完しません)。
    """

    population_dependent = True

    def __init__(self, q: TabularQ, tau: float) -> None:
        self.q = q
        self.tau = tau

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: 'NoiseObservation | None' = None,
    ) -> PolicyTable:
        values = self.q.table(n, distribution_key(mu, n), noise_key_of(obs))
        return softmax_policy(values, self.tau)

"""
例外定義モジュール。

このモジュールは、パッケージ全体で使用する例外階層を定義します。
"""

from collections.abc import Hashable


class MasterMfgError(Exception):
    """パッケージ共通の基底例外。"""


class DistributionError(MasterMfgError, ValueError):
    """確率分布(単体)の不変条件違反。"""


class EnvConfigurationError(MasterMfgError, ValueError):
    """環境パラメータの不正。"""


class NoiseError(MasterMfgError, ValueError):
    """共通ノイズ過程の引数不正。"""


class FlowMismatchError(MasterMfgError, ValueError):
    """平均場フロー・方策・環境の定義域不一致。"""


class PolicyKeyMissError(MasterMfgError, KeyError):
    """表形式方策に存在しない分布キーでの評価。

    Attributes:
        timestep: 評価しようとした時刻
        key: 見つからなかった分布キー
        noise_key: ノイズキー
    """

    def __init__(
        self, timestep: int, key: Hashable, noise_key: Hashable | None = None
    ) -> None:
        super().__init__(
            f'表形式方策に未登録のキーです: n={timestep}, key={key!r}, '
            f'noise={noise_key!r}'
        )
        self.timestep = timestep
        self.key = key
        self.noise_key = noise_key


class LineageBudgetError(MasterMfgError, RuntimeError):
    """系譜厳密評価のコスト推定が上限を超えた。

    Attributes:
        estimated: 推定キャッシュエントリ数
        limit: 設定された上限
    """

    def __init__(self, estimated: int, limit: int, detail: str = '') -> None:
        message = (
            f'系譜厳密評価の推定コストが上限を超えています: '
            f'推定 {estimated:,} エントリ > 上限 {limit:,}'
        )
        if detail:
            message = f'{message} ({detail})'
        super().__init__(message)
        self.estimated = estimated
        self.limit = limit


class EnumerationLimitError(MasterMfgError, RuntimeError):
    """全方策列挙の件数が上限を超えた。

    Attributes:
        count: 列挙が必要な決定的マルコフ方策の数
        limit: 上限
    """

    def __init__(self, count: int, limit: int) -> None:
        super().__init__(
            f'決定的マルコフ方策の数 {count:,} が列挙上限 {limit:,} を超えています'
        )
        self.count = count
        self.limit = limit


class TrainingDivergedError(MasterMfgError, RuntimeError):
    """学習中の損失が非有限値になった。

    Attributes:
        lr: 発散時の学習率
        iteration: 発散した反復番号(学習器の外では None)
        step: 反復内の勾配更新の通し番号(学習器の外では None)
    """

    def __init__(
        self, lr: float, iteration: int | None = None, step: int | None = None
    ) -> None:
        where = '' if iteration is None else f'反復 {iteration}、更新 {step} で'
        super().__init__(f'{where}損失が非有限値になりました (learning_rate={lr})')
        self.lr = lr
        self.iteration = iteration
        self.step = step


class InteractionUndefinedError(MasterMfgError, ValueError):
    """環境が集団との相互作用報酬を宣言していない。"""

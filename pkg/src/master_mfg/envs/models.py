"""
環境モデルモジュール。

このモジュールは、有限平均場ゲーム環境の抽象基底クラス EnvModel を定義します。
遷移核と報酬は、全状態・全行動を一度に返す行列形式で提供します。
"""

from abc import ABC, abstractmethod

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import InteractionUndefinedError
from src.master_mfg.core.spaces import ActionSpace, StateSpace
from src.master_mfg.noise.processes import CommonNoisePath, NoiseKind


class EnvModel(ABC):
    """有限ホライズン平均場ゲーム環境。

    時刻 n = 0, …, N_T のすべてで行動を選び、n = N_T では遷移しません。
    n = N_T の報酬は、終端報酬が宣言されていればそれを、なければ段階報酬を使います。

    Attributes:
        name: 環境名
        state_space: 状態空間 𝒳
        action_space: 行動空間 𝒜
        horizon: ホライズン N_T
        noise_kind: 共通ノイズの種類(なければ None)
    """

    name: str = 'env'
    noise_kind: NoiseKind | None = None

    def __init__(
        self, state_space: StateSpace, action_space: ActionSpace, horizon: int
    ) -> None:
        if horizon < 0:
            raise ValueError(f'ホライズンは非負である必要があります: {horizon}')
        self.state_space = state_space
        self.action_space = action_space
        self.horizon = horizon

    @property
    def n_states(self) -> int:
        """状態数 |𝒳|。"""
        return self.state_space.size

    @property
    def n_actions(self) -> int:
        """行動数 |𝒜|。"""
        return self.action_space.size

    @property
    def population_independent_transitions(self) -> bool:
        """遷移が μ に依存しないかどうか。"""
        return True

    @abstractmethod
    def transition_tensor(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        """遷移核 p_n(x'|x, a, μ, ξ) を (|𝒳|, |𝒜|, |𝒳|) で返します。"""

    @abstractmethod
    def reward_table(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        """報酬 r_n(x, a, μ, ξ) を (|𝒳|, |𝒜|) で返します。"""

    def transition(
        self,
        n: int,
        x: int,
        a: int,
        mu: npt.NDArray[np.float64],
        xi: float | None = None,
    ) -> npt.NDArray[np.float64]:
        """単一の遷移行 p_n(·|x, a, μ, ξ) を返します。"""
        return self.transition_tensor(n, mu, xi)[x, a]

    def reward(
        self,
        n: int,
        x: int,
        a: int,
        mu: npt.NDArray[np.float64],
        xi: float | None = None,
    ) -> float:
        """単一の報酬 r_n(x, a, μ, ξ) を返します。"""
        return float(self.reward_table(n, mu, xi)[x, a])

    def interaction_reward(
        self, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        """報酬のうち μ に依存する相互作用成分 r̄(x, μ, ξ) を返します。

        Raises:
            InteractionUndefinedError: 環境が相互作用成分を宣言していない場合
        """
        raise InteractionUndefinedError(
            f'環境 {self.name} は相互作用報酬を宣言していません'
        )

    def noise_value(self, path: CommonNoisePath | None, n: int) -> float | None:
        """経路から時刻 n のノイズ値を取り出します(経路なしは None)。"""
        if path is None:
            return None
        return path.value(n)

"""
ビーチバー環境モジュール。

このモジュールは、浜辺の中央にあるバーへ向かうエージェントの環境を提供します。
報酬は r(x, a, μ) = d_bar(x) - |a|/|𝒳| - C log μ(x) で、C はバーの開店時 1、閉店時 0 です。
"""

from typing import Literal

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import EnvConfigurationError
from src.master_mfg.core.numerics import LOG_CLIP
from src.master_mfg.core.spaces import (
    GridGeometry,
    LineGeometry,
    StateSpace,
    grid_actions,
    line_actions,
)
from src.master_mfg.envs.grid import movement_kernel
from src.master_mfg.envs.models import EnvModel

Dimension = Literal['1d', '2d']


class BeachBarEnv(EnvModel):
    """ビーチバー環境。

    Attributes:
        bar: バーのある状態番号
        closure_noise: 開閉を共通ノイズで駆動するかどうか
    """

    name = 'beach_bar'

    def __init__(
        self, state_space: StateSpace, bar: int, horizon: int, closure_noise: bool
    ) -> None:
        actions = (
            grid_actions()
            if isinstance(state_space.geometry, GridGeometry)
            else line_actions(1)
        )
        super().__init__(state_space, actions, horizon)
        self.bar = bar
        self.closure_noise = closure_noise
        self.noise_kind = 'closure' if closure_noise else None
        self._kernel = movement_kernel(state_space, actions)
        self._move_cost = actions.magnitudes() / state_space.size
        self._attractiveness = 1.0 - self._distances() / state_space.size

    def _distances(self) -> npt.NDArray[np.float64]:
        space = self.state_space
        if isinstance(space.geometry, GridGeometry):
            bar_row, bar_col = space.coords(self.bar)
            return np.array(
                [
                    abs(row - bar_row) + abs(col - bar_col)
                    for row, col in (space.coords(x) for x in range(space.size))
                ],
                dtype=np.float64,
            )
        return np.abs(np.arange(space.size) - self.bar).astype(np.float64)

    @property
    def attractiveness(self) -> npt.NDArray[np.float64]:
        """d_bar(x) = 1 - dist(x, bar)/|𝒳|。"""
        return self._attractiveness

    def crowd_coefficient(self, xi: float | None) -> float:
        """混雑項の係数 C(開店 1、閉店 0)。ノイズ値なしは開店扱い。"""
        if not self.closure_noise or xi is None:
            return 1.0
        return float(xi)

    def transition_tensor(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return self._kernel

    def interaction_reward(
        self, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        coefficient = self.crowd_coefficient(xi)
        if coefficient == 0.0:
            return np.zeros(self.n_states)
        return -coefficient * np.log(np.maximum(mu, LOG_CLIP))

    def reward_table(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        state_part = self._attractiveness + self.interaction_reward(mu, xi)
        return state_part[:, None] - self._move_cost[None, :]


def make_beach_bar(
    dimension: Dimension = '1d',
    size: int = 11,
    closure_noise: bool = False,
    horizon: int = 30,
) -> BeachBarEnv:
    """ビーチバー環境を構築します。

    Args:
        dimension: '1d'(長さ size の直線)または '2d'(size×size の格子)
        size: 1 辺のセル数 (≥ 3)
        closure_noise: 開閉切替ノイズを有効にするかどうか
        horizon: ホライズン N_T

    Returns:
        BeachBarEnv: ビーチバー環境

    Raises:
        EnvConfigurationError: size < 3 または未知の次元の場合
    """
    if size < 3:
        raise EnvConfigurationError(f'ビーチバーの size は 3 以上である必要があります: {size}')
    if dimension == '1d':
        space = StateSpace(size=size, geometry=LineGeometry(length=size))
        bar = size // 2
    elif dimension == '2d':
        space = StateSpace(
            size=size * size, geometry=GridGeometry(width=size, height=size)
        )
        bar = space.index(size // 2, size // 2)
    else:
        raise EnvConfigurationError(f'未知の次元です: {dimension}')
    return BeachBarEnv(space, bar, horizon, closure_noise)

"""
探索環境モジュール。

このモジュールは、混雑を嫌うエージェントが格子(1 部屋または 4 部屋)を
探索する環境を提供します。報酬は r(x, a, μ) = -log μ(x) - |a|/|𝒳| です。
"""

from typing import Literal

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import EnvConfigurationError
from src.master_mfg.core.numerics import LOG_CLIP
from src.master_mfg.core.spaces import GridGeometry, StateSpace, grid_actions
from src.master_mfg.envs.grid import movement_kernel
from src.master_mfg.envs.models import EnvModel

Geometry = Literal['one_room', 'four_rooms']

# 4 部屋の扉位置(各壁区間の長さに対する比)
FOUR_ROOMS_DOORS: tuple[float, float] = (0.25, 0.75)


def four_rooms_walls(width: int, height: int) -> frozenset[tuple[int, int]]:
    """4 部屋レイアウトの壁セルを返します。

    中央の行と列を壁とし、各壁区間の 1/4 と 3/4 の位置に 1 セルの扉を開けます。

    Args:
        width: 列数(奇数)
        height: 行数(奇数)

    Returns:
        frozenset: 壁セル (行, 列) の集合
    """
    mid_row, mid_col = height // 2, width // 2
    door_rows = {int(height * f) for f in FOUR_ROOMS_DOORS}
    door_cols = {int(width * f) for f in FOUR_ROOMS_DOORS}
    walls = {(row, mid_col) for row in range(height) if row not in door_rows}
    walls |= {(mid_row, col) for col in range(width) if col not in door_cols}
    walls.add((mid_row, mid_col))
    return frozenset(walls)


class ExplorationEnv(EnvModel):
    """混雑回避の探索環境。"""

    name = 'exploration'

    def __init__(self, state_space: StateSpace, horizon: int) -> None:
        super().__init__(state_space, grid_actions(), horizon)
        self._kernel = movement_kernel(state_space, self.action_space)
        self._move_cost = self.action_space.magnitudes() / state_space.size

    def transition_tensor(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return self._kernel

    def interaction_reward(
        self, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return -np.log(np.maximum(mu, LOG_CLIP))

    def reward_table(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return self.interaction_reward(mu)[:, None] - self._move_cost[None, :]


def make_exploration(
    geometry: Geometry = 'one_room',
    width: int = 11,
    height: int = 11,
    horizon: int = 30,
) -> ExplorationEnv:
    """探索環境を構築します。

    Args:
        geometry: 'one_room' または 'four_rooms'
        width: 列数 (≥ 2)
        height: 行数 (≥ 2)
        horizon: ホライズン N_T

    Returns:
        ExplorationEnv: 探索環境

    Raises:
        EnvConfigurationError: 寸法が不正、または 4 部屋で偶数寸法の場合
    """
    if width < 2 or height < 2:
        raise EnvConfigurationError(
            f'探索環境の寸法は 2 以上である必要があります: {width}x{height}'
        )
    if geometry == 'four_rooms':
        if width % 2 == 0 or height % 2 == 0:
            raise EnvConfigurationError(
                f'four_rooms には奇数の寸法が必要です: {width}x{height}'
            )
        blocked = four_rooms_walls(width, height)
    elif geometry == 'one_room':
        blocked = frozenset()
    else:
        raise EnvConfigurationError(f'未知の形状です: {geometry}')
    space = StateSpace(
        size=width * height,
        geometry=GridGeometry(width=width, height=height, blocked=blocked),
    )
    return ExplorationEnv(space, horizon)

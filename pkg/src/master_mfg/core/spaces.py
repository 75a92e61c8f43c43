"""
状態・行動空間モジュール。

このモジュールは、有限状態空間 𝒳 と有限行動空間 𝒜、
および状態分布・行動分布の検証関数を定義します。
"""

from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.master_mfg.core.errors import DistributionError

# 単体の総和許容誤差
SIMPLEX_TOLERANCE: float = 1e-9

StateDistribution = npt.NDArray[np.float64]
ActionDistribution = npt.NDArray[np.float64]

# 格子上の変位 (行, 列)
GRID_DISPLACEMENTS: dict[str, tuple[int, int]] = {
    'up': (-1, 0),
    'down': (1, 0),
    'left': (0, -1),
    'right': (0, 1),
    'stay': (0, 0),
}


class GridGeometry(BaseModel):
    """2 次元格子の形状。

    Attributes:
        width: 列数
        height: 行数
        blocked: 壁セル (行, 列) の集合
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['grid'] = 'grid'
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    blocked: frozenset[tuple[int, int]] = frozenset()

    @model_validator(mode='after')
    def _check_blocked(self) -> 'GridGeometry':
        for row, col in self.blocked:
            if not (0 <= row < self.height and 0 <= col < self.width):
                raise ValueError(f'壁セル {(row, col)} が格子の外にあります')
        return self


class LineGeometry(BaseModel):
    """1 次元の直線形状。

    Attributes:
        length: セル数
        offset: 添字 0 に対応する座標値 (LQ では -L)
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal['line'] = 'line'
    length: int = Field(..., ge=1)
    offset: int = 0


class StateSpace(BaseModel):
    """有限状態空間 𝒳。

    Attributes:
        size: 状態数 |𝒳|
        geometry: 格子または直線の形状記述(任意)
    """

    model_config = ConfigDict(frozen=True)

    size: int = Field(..., ge=1)
    geometry: GridGeometry | LineGeometry | None = None

    @model_validator(mode='after')
    def _check_geometry(self) -> 'StateSpace':
        if isinstance(self.geometry, GridGeometry):
            if self.geometry.width * self.geometry.height != self.size:
                raise ValueError('格子の大きさと状態数が一致しません')
            if len(self.geometry.blocked) >= self.size:
                raise ValueError('すべてのセルが壁です')
            for x in range(self.size):
                if self.is_blocked(x):
                    continue
                row, col = self.coords(x)
                neighbours = [
                    (row + dr, col + dc)
                    for dr, dc in GRID_DISPLACEMENTS.values()
                    if (dr, dc) != (0, 0)
                ]
                if self.size > 1 and not any(
                    self._free_cell(r, c) for r, c in neighbours
                ):
                    raise ValueError(f'セル {(row, col)} に移動可能な隣接セルがありません')
        elif isinstance(self.geometry, LineGeometry):
            if self.geometry.length != self.size:
                raise ValueError('直線の長さと状態数が一致しません')
        return self

    def _free_cell(self, row: int, col: int) -> bool:
        assert isinstance(self.geometry, GridGeometry)
        geometry = self.geometry
        return (
            0 <= row < geometry.height
            and 0 <= col < geometry.width
            and (row, col) not in geometry.blocked
        )

    def coords(self, x: int) -> tuple[int, int]:
        """格子状態の (行, 列) 座標を返します。"""
        if not isinstance(self.geometry, GridGeometry):
            raise ValueError('格子形状ではありません')
        return divmod(x, self.geometry.width)

    def index(self, row: int, col: int) -> int:
        """(行, 列) 座標から状態番号を返します。"""
        if not isinstance(self.geometry, GridGeometry):
            raise ValueError('格子形状ではありません')
        return row * self.geometry.width + col

    def is_blocked(self, x: int) -> bool:
        """状態 x が壁セルかどうかを返します。"""
        if isinstance(self.geometry, GridGeometry):
            return self.coords(x) in self.geometry.blocked
        return False

    def admissible_mask(self) -> npt.NDArray[np.bool_]:
        """壁でない状態を True とするマスクを返します。"""
        return np.array([not self.is_blocked(x) for x in range(self.size)])

    def admissible_states(self) -> list[int]:
        """壁でない状態番号のリストを返します。"""
        return [x for x in range(self.size) if not self.is_blocked(x)]

    def values(self) -> npt.NDArray[np.float64]:
        """直線形状の座標値 (LQ の x) を返します。"""
        if isinstance(self.geometry, LineGeometry):
            return np.arange(self.size, dtype=np.float64) + self.geometry.offset
        return np.arange(self.size, dtype=np.float64)


class ActionSpace(BaseModel):
    """有限行動空間 𝒜。

    Attributes:
        names: 行動名の順序付きリスト
        displacements: 各行動の整数変位(格子は (行, 列)、直線は (変位,))
    """

    model_config = ConfigDict(frozen=True)

    names: tuple[str, ...] = Field(..., min_length=1)
    displacements: tuple[tuple[int, ...], ...]

    @model_validator(mode='after')
    def _check_lengths(self) -> 'ActionSpace':
        if len(self.names) != len(self.displacements):
            raise ValueError('行動名と変位の数が一致しません')
        return self

    @property
    def size(self) -> int:
        """行動数 |𝒜|。"""
        return len(self.names)

    def index(self, name: str) -> int:
        """行動名から行動番号を返します。"""
        return self.names.index(name)

    def magnitudes(self) -> npt.NDArray[np.float64]:
        """各行動の大きさ |a|(変位の L1 ノルム)を返します。"""
        return np.array(
            [float(sum(abs(d) for d in disp)) for disp in self.displacements]
        )


def grid_actions() -> ActionSpace:
    """格子用の 5 行動 (up/down/left/right/stay) を返します。"""
    return ActionSpace(
        names=tuple(GRID_DISPLACEMENTS),
        displacements=tuple(GRID_DISPLACEMENTS.values()),
    )


def line_actions(max_step: int = 1) -> ActionSpace:
    """直線用の行動 {-M, ..., M} を返します。

    Args:
        max_step: 最大変位 M

    Returns:
        ActionSpace: 行動空間
    """
    steps = range(-max_step, max_step + 1)
    return ActionSpace(
        names=tuple(str(s) for s in steps),
        displacements=tuple((s,) for s in steps),
    )


def check_state_distribution(
    mu: npt.ArrayLike, space: StateSpace | None = None
) -> StateDistribution:
    """状態分布の不変条件を検証し、float64 配列として返します。

    Args:
        mu: 質量ベクトル
        space: 状態空間。指定時は長さと壁セルの質量ゼロも検証します。

    Returns:
        StateDistribution: 検証済みの分布

    Raises:
        DistributionError: 負の要素、総和のずれ、壁セルへの質量がある場合
    """
    mass = np.asarray(mu, dtype=np.float64)
    if mass.ndim != 1:
        raise DistributionError(f'状態分布は 1 次元である必要があります: shape={mass.shape}')
    if space is not None and mass.shape[0] != space.size:
        raise DistributionError(
            f'状態分布の長さ {mass.shape[0]} が |𝒳|={space.size} と一致しません'
        )
    if not np.all(np.isfinite(mass)):
        bad = int(np.flatnonzero(~np.isfinite(mass))[0])
        raise DistributionError(f'状態 {bad} の質量が非有限値です')
    if np.any(mass < 0.0):
        bad = int(np.flatnonzero(mass < 0.0)[0])
        raise DistributionError(f'状態 {bad} の質量が負です: {mass[bad]}')
    total = float(mass.sum())
    if abs(total - 1.0) > SIMPLEX_TOLERANCE:
        raise DistributionError(f'状態分布の総和が 1 ではありません: {total}')
    if space is not None:
        blocked = ~space.admissible_mask()
        if np.any(mass[blocked] > 0.0):
            bad = int(np.flatnonzero(blocked & (mass > 0.0))[0])
            raise DistributionError(f'壁セル {bad} に質量があります')
    return mass


def check_action_rows(policy_rows: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """状態ごとの行動分布 (|𝒳|, |𝒜|) を検証します。

    Args:
        policy_rows: 各行が行動分布である配列

    Returns:
        NDArray: 検証済みの配列

    Raises:
        DistributionError: 単体条件を満たさない行がある場合(状態番号を含む)
    """
    rows = np.asarray(policy_rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DistributionError(f'方策行列は 2 次元である必要があります: shape={rows.shape}')
    bad_value = ~np.isfinite(rows).all(axis=1) | (rows < 0.0).any(axis=1)
    bad_sum = np.abs(rows.sum(axis=1) - 1.0) > SIMPLEX_TOLERANCE
    bad = np.flatnonzero(bad_value | bad_sum)
    if bad.size:
        state = int(bad[0])
        raise DistributionError(
            f'状態 {state} の行動分布が単体条件を満たしません: {rows[state]}'
        )
    return rows

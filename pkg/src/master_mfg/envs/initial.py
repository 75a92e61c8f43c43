"""
初期分布モジュール。

このモジュールは、学習・評価に使う初期分布 μ₀ の集合と、
実行中に新しいエージェント群が合流するアドホックチームの注入を提供します。
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import stats

from src.master_mfg.core.errors import EnvConfigurationError
from src.master_mfg.core.spaces import (
    GridGeometry,
    StateDistribution,
    check_state_distribution,
)
from src.master_mfg.envs.models import EnvModel

InitialKind = Literal['fixed_points', 'gaussians', 'random_points', 'uniform']
SetRole = Literal['training', 'testing']

# random_points で使う点数の上限
MAX_RANDOM_POINTS: int = 5

# 評価用集合のシードずらし(学習用と重ならないようにする)
_TESTING_SEED_OFFSET: int = 7919


@dataclass(frozen=True)
class InitialDistributionSet:
    """ラベル付き初期分布の集合。

    Attributes:
        members: (ラベル, 状態分布) の組
        role: 'training' または 'testing'
    """

    members: tuple[tuple[str, StateDistribution], ...]
    role: SetRole = 'training'

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError('初期分布集合が空です')
        labels = [label for label, _ in self.members]
        if len(set(labels)) != len(labels):
            raise ValueError(f'初期分布のラベルが重複しています: {labels}')

    def __len__(self) -> int:
        return len(self.members)

    @property
    def labels(self) -> list[str]:
        """ラベルの一覧。"""
        return [label for label, _ in self.members]

    def merged(self, other: 'InitialDistributionSet') -> 'InitialDistributionSet':
        """同じ役割の集合を連結します。"""
        if other.role != self.role:
            raise ValueError('学習用と評価用の集合は連結できません')
        return InitialDistributionSet(self.members + other.members, self.role)


def _point_mass(size: int, x: int) -> npt.NDArray[np.float64]:
    mass = np.zeros(size)
    mass[x] = 1.0
    return mass


def _coordinates(env: EnvModel) -> npt.NDArray[np.float64]:
    space = env.state_space
    if isinstance(space.geometry, GridGeometry):
        return np.array([space.coords(x) for x in range(space.size)], dtype=np.float64)
    return np.arange(space.size, dtype=np.float64)[:, None]


def _gaussian(
    env: EnvModel, center: int, scale: float
) -> npt.NDArray[np.float64]:
    coords = _coordinates(env)
    density = stats.norm.pdf(coords, loc=coords[center], scale=scale).prod(axis=1)
    density = density * env.state_space.admissible_mask()
    return density / density.sum()


def make_initial_set(
    kind: InitialKind,
    count: int,
    env: EnvModel,
    seed: int,
    role: SetRole = 'training',
) -> InitialDistributionSet:
    """初期分布の集合を生成します(シードから決定的)。

    Args:
        kind: 'fixed_points'(点質量)、'gaussians'(切断正規)、
            'random_points'(ランダムな数点への配分)、'uniform'(一様)
        count: 生成する分布の数 (≥ 1)
        env: 対象環境
        seed: 乱数シード
        role: 集合の役割

    Returns:
        InitialDistributionSet: 初期分布集合

    Raises:
        EnvConfigurationError: count が不正、または点質量が状態数を超える場合
    """
    if count < 1:
        raise EnvConfigurationError(f'count は 1 以上である必要があります: {count}')
    rng = np.random.default_rng(seed)
    free = np.array(env.state_space.admissible_states())
    size = env.n_states
    members: list[tuple[str, npt.NDArray[np.float64]]] = []

    if kind == 'fixed_points':
        if count > free.size:
            raise EnvConfigurationError(
                f'点質量の数 {count} が移動可能な状態数 {free.size} を超えています'
            )
        for i, x in enumerate(rng.choice(free, size=count, replace=False)):
            members.append((f'fixed_points_{i}', _point_mass(size, int(x))))
    elif kind == 'gaussians':
        extent = float(_coordinates(env).max(axis=0).max()) + 1.0
        for i in range(count):
            center = int(rng.choice(free))
            scale = float(rng.uniform(0.5, max(1.0, extent / 4.0)))
            members.append((f'gaussians_{i}', _gaussian(env, center, scale)))
    elif kind == 'random_points':
        for i in range(count):
            n_points = int(rng.integers(1, min(MAX_RANDOM_POINTS, free.size) + 1))
            points = rng.choice(free, size=n_points, replace=False)
            weights = rng.dirichlet(np.ones(n_points))
            mass = np.zeros(size)
            mass[points] = weights
            members.append((f'random_points_{i}', mass))
    elif kind == 'uniform':
        mass = env.state_space.admissible_mask().astype(np.float64)
        mass /= mass.sum()
        for i in range(count):
            members.append((f'uniform_{i}', mass.copy()))
    else:
        raise EnvConfigurationError(f'未知の初期分布種別です: {kind}')

    validated = []
    for label, mass in members:
        checked = check_state_distribution(mass, env.state_space)
        checked.flags.writeable = False
        validated.append((label, checked))
    return InitialDistributionSet(tuple(validated), role)


def make_protocol_set(
    env: EnvModel, role: SetRole = 'training', seed: int = 0
) -> InitialDistributionSet:
    """各タスクの 5 要素の学習用/評価用集合を生成します。

    点質量 2、正規 2、ランダム点 1 で構成し、評価用は別のシード系列を使います。
    """
    base = seed if role == 'training' else seed + _TESTING_SEED_OFFSET
    parts = [
        make_initial_set('fixed_points', 2, env, base, role),
        make_initial_set('gaussians', 2, env, base + 1, role),
        make_initial_set('random_points', 1, env, base + 2, role),
    ]
    result = parts[0]
    for part in parts[1:]:
        result = result.merged(part)
    return result


def team_fraction(existing: int, joining: int) -> float:
    """合流後の総数に対する新規エージェントの割合を返します。"""
    if existing < 0 or joining <= 0:
        raise ValueError(f'エージェント数が不正です: existing={existing}, joining={joining}')
    return joining / (existing + joining)


def inject_adhoc_team(
    mu: npt.ArrayLike, newcomers: npt.ArrayLike, fraction: float
) -> StateDistribution:
    """新しいエージェント群を合流させた分布 (1 - f)μ + f·newcomers を返します。

    Args:
        mu: 既存の集団分布
        newcomers: 合流するエージェント群の分布
        fraction: 合流後の総質量に対する新規質量の割合 f ∈ (0, 1)

    Returns:
        StateDistribution: 合流後の分布

    Raises:
        ValueError: fraction が (0, 1) の外にある場合
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f'fraction は (0, 1) の範囲である必要があります: {fraction}')
    current = check_state_distribution(mu)
    joining = check_state_distribution(newcomers)
    if current.shape != joining.shape:
        raise ValueError('分布の長さが一致しません')
    return (1.0 - fraction) * current + fraction * joining

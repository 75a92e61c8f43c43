"""
テスト用の共通フィクスチャとヘルパー関数。

このモジュールは、テスト全体で使用するフィクスチャやヘルパー関数を提供します。
"""

import logging
import os
from collections.abc import Generator
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pytest

from src.master_mfg.config.settings import Settings
from src.master_mfg.core.spaces import ActionSpace, StateSpace
from src.master_mfg.envs.beach_bar import BeachBarEnv, make_beach_bar
from src.master_mfg.envs.exploration import ExplorationEnv, make_exploration
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.noise.processes import CommonNoisePath, closure_process
from src.master_mfg.utils.logging import PACKAGE_LOGGER_NAME


class MockSettings(Settings):
    """テスト用のモック設定クラス。

    出力先を一時ディレクトリに向け、系譜評価の上限を小さくします。
    """

    output_root: Path = Path('test-outputs')
    log_level: str = 'DEBUG'
    log_dir: Path = Path('test-logs')
    lineage_cache_limit: int = 2_000_000
    workers: int = 1


class RandomMeanFieldEnv(EnvModel):
    """乱数で生成する小さな平均場ゲーム。

    報酬は r_n(x, a, μ) = base_n(x, a) - crowd·μ(x)、遷移は
    p_n(·|x, a, μ) = (1 - w) K(·|x, a) + w μ で、w > 0 なら遷移も μ に依存します。
    """

    name = 'random'

    def __init__(
        self,
        n_states: int = 3,
        n_actions: int = 2,
        horizon: int = 2,
        seed: int = 0,
        crowd: float = 1.0,
        mixing: float = 0.2,
    ) -> None:
        actions = ActionSpace(
            names=tuple(f'a{i}' for i in range(n_actions)),
            displacements=tuple((i,) for i in range(n_actions)),
        )
        super().__init__(StateSpace(size=n_states), actions, horizon)
        rng = np.random.default_rng(seed)
        self.base = rng.normal(size=(horizon + 1, n_states, n_actions))
        self.kernel = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        self.crowd = crowd
        self.mixing = mixing

    @property
    def population_independent_transitions(self) -> bool:
        return self.mixing == 0.0

    def transition_tensor(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return (1.0 - self.mixing) * self.kernel + self.mixing * mu[None, None, :]

    def interaction_reward(
        self, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return -self.crowd * mu

    def reward_table(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        return self.base[n] + self.interaction_reward(mu)[:, None]


def point_mass(size: int, x: int) -> npt.NDArray[np.float64]:
    """状態 x に全質量を置いた分布。"""
    mass = np.zeros(size)
    mass[x] = 1.0
    return mass


def uniform(size: int) -> npt.NDArray[np.float64]:
    """一様分布。"""
    return np.full(size, 1.0 / size)


def single_set(
    mu0: npt.NDArray[np.float64], label: str = 'mu0'
) -> InitialDistributionSet:
    """1 要素の初期分布集合。"""
    return InitialDistributionSet(((label, mu0),))


@pytest.fixture
def mock_settings(tmp_path: Path) -> MockSettings:
    """テスト用のモック設定を提供します。

    Returns:
        MockSettings: 出力先が一時ディレクトリのモック設定
    """
    return MockSettings(output_root=tmp_path / 'outputs', log_dir=tmp_path / 'logs')


@pytest.fixture
def random_env() -> RandomMeanFieldEnv:
    """3 状態・2 行動・N_T=2 の乱数環境を提供します。"""
    return RandomMeanFieldEnv()


@pytest.fixture
def tiny_exploration() -> ExplorationEnv:
    """2×2 の 1 部屋探索環境 (N_T=2) を提供します。"""
    return make_exploration('one_room', 2, 2, horizon=2)


@pytest.fixture
def small_exploration() -> ExplorationEnv:
    """3×3 の 1 部屋探索環境 (N_T=3) を提供します。"""
    return make_exploration('one_room', 3, 3, horizon=3)


@pytest.fixture
def beach_bar_1d() -> BeachBarEnv:
    """5 セルの 1 次元ビーチバー (N_T=3) を提供します。"""
    return make_beach_bar('1d', 5, closure_noise=False, horizon=3)


@pytest.fixture
def closure_beach_bar() -> BeachBarEnv:
    """開閉ノイズ付きの 5 セルのビーチバー (N_T=3) を提供します。"""
    return make_beach_bar('1d', 5, closure_noise=True, horizon=3)


@pytest.fixture
def closure_paths() -> list[CommonNoisePath]:
    """N_T=3 の開閉経路 2 本を提供します。"""
    return [
        closure_process(3, (1, 2), seed=0, label='closure_a'),
        closure_process(3, (2, 3), seed=1, label='closure_b'),
    ]


@pytest.fixture
def mock_env_vars() -> Generator[None, None, None]:
    """テスト用の環境変数を設定します。

    テスト終了後に元の環境変数に戻します。

    Yields:
        None
    """
    # 元の環境変数を保存
    original_env = os.environ.copy()

    # テスト用の環境変数を設定
    os.environ['MASTER_MFG_OUTPUT_ROOT'] = 'env-outputs'
    os.environ['MASTER_MFG_LOG_LEVEL'] = 'debug'
    os.environ['MASTER_MFG_LINEAGE_CACHE_LIMIT'] = '12345'
    os.environ['MASTER_MFG_WORKERS'] = '3'

    yield

    # 元の環境変数に戻す
    os.environ.clear()
    os.environ.update(original_env)


@pytest.fixture(autouse=True)
def reset_package_logger() -> Generator[None, None, None]:
    """エントリーポイントが設定したハンドラをテストごとに外します。

    Yields:
        None
    """
    yield
    package_logger = logging.getLogger(PACKAGE_LOGGER_NAME)
    for handler in package_logger.handlers[:]:
        package_logger.removeHandler(handler)
        handler.close()
    package_logger.propagate = True
    package_logger.setLevel(logging.NOTSET)

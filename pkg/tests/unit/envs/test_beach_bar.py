"""
ビーチバー環境のテスト。
"""

import numpy as np
import pytest

from src.master_mfg.core.errors import EnvConfigurationError
from src.master_mfg.envs.beach_bar import BeachBarEnv, make_beach_bar
from src.master_mfg.exact.exploitability import monotonicity_probe


def test_one_dimensional_layout() -> None:
    """1 次元ビーチバーの状態と行動のテスト。"""
    env = make_beach_bar('1d', 11, horizon=10)
    assert env.n_states == 11
    assert env.n_actions == 3
    assert env.bar == 5
    assert env.noise_kind is None
    np.testing.assert_allclose(env.attractiveness[[0, 5, 10]], [6 / 11, 1.0, 6 / 11])


def test_two_dimensional_layout() -> None:
    """2 次元ビーチバーの状態と行動のテスト。"""
    env = make_beach_bar('2d', 5, horizon=2)
    assert env.n_states == 25
    assert env.n_actions == 5
    assert env.state_space.coords(env.bar) == (2, 2)


def test_closure_removes_crowd_term(beach_bar_1d: BeachBarEnv) -> None:
    """閉店時は混雑項が消えることのテスト。"""
    env = make_beach_bar('1d', 5, closure_noise=True, horizon=3)
    mu = np.array([0.1, 0.2, 0.4, 0.2, 0.1])
    opened = env.reward_table(0, mu, 1.0)
    closed = env.reward_table(0, mu, 0.0)
    np.testing.assert_allclose(opened - closed, -np.log(mu)[:, None])
    assert env.noise_kind == 'closure'
    # ノイズのない環境では ξ を無視する
    np.testing.assert_allclose(
        beach_bar_1d.reward_table(0, mu, 0.0), beach_bar_1d.reward_table(0, mu)
    )


def test_reward_prefers_bar(beach_bar_1d: BeachBarEnv) -> None:
    """一様な集団ではバーに近いほど報酬が高いことのテスト。"""
    rewards = beach_bar_1d.reward_table(0, np.full(5, 0.2))
    stay = beach_bar_1d.action_space.index('0')
    assert rewards[2, stay] > rewards[1, stay] > rewards[0, stay]


def test_kernel_rows_sum_to_one(beach_bar_1d: BeachBarEnv) -> None:
    """遷移核の行の総和のテスト。"""
    rng = np.random.default_rng(1)
    for _ in range(100):
        mu = rng.dirichlet(np.ones(5))
        kernel = beach_bar_1d.transition_tensor(0, mu)
        np.testing.assert_allclose(kernel.sum(axis=2), 1.0, atol=1e-12)


def test_monotonicity_when_open(beach_bar_1d: BeachBarEnv) -> None:
    """開店時の相互作用が単調であることのテスト。"""
    rng = np.random.default_rng(2)
    for _ in range(1000):
        mu = rng.dirichlet(np.ones(5))
        mu_prime = rng.dirichlet(np.ones(5))
        assert monotonicity_probe(beach_bar_1d, mu, mu_prime) <= 1e-12


def test_invalid_size() -> None:
    """セル数が 3 未満のビーチバーを構成エラーとして拒否することのテスト。"""
    with pytest.raises(EnvConfigurationError):
        make_beach_bar('1d', 2)

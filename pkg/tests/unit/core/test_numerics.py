"""
基本数値演算モジュールのテスト。
"""

import numpy as np
import pytest

from src.master_mfg.core.errors import DistributionError
from src.master_mfg.core.numerics import (
    LOG_CLIP,
    clipped_log,
    distribution_key,
    kl_divergence,
    softmax_policy,
)


def test_softmax_of_zeros_is_uniform() -> None:
    """ゼロの softmax が一様になることのテスト。"""
    np.testing.assert_allclose(softmax_policy(np.zeros(4), 1.0), np.full(4, 0.25))


def test_softmax_large_values_do_not_overflow() -> None:
    """|Q|/τ が大きくても溢れないことのテスト。"""
    probs = softmax_policy([1e6, 0.0], 1e-3)
    np.testing.assert_allclose(probs, [1.0, 0.0])


def test_softmax_rows() -> None:
    """2 次元入力が行ごとに正規化されることのテスト。"""
    probs = softmax_policy(np.array([[0.0, np.log(3.0)], [1.0, 1.0]]), 1.0)
    np.testing.assert_allclose(probs, [[0.25, 0.75], [0.5, 0.5]])


def test_softmax_temperature_flattens() -> None:
    """τ → ∞ で一様に近づくことのテスト。"""
    probs = softmax_policy([10.0, -10.0, 3.0], 1e9)
    assert np.abs(probs - 1.0 / 3.0).max() <= 1e-6


def test_softmax_invalid_inputs() -> None:
    """不正な τ と非有限値のテスト。"""
    with pytest.raises(ValueError):
        softmax_policy([0.0, 1.0], 0.0)
    with pytest.raises(DistributionError, match='行動 1'):
        softmax_policy([0.0, np.inf], 1.0)


def test_clipped_log() -> None:
    """確率 0 が LOG_CLIP で切り詰められることのテスト。"""
    values = clipped_log([0.0, 1.0])
    assert values[0] == pytest.approx(np.log(LOG_CLIP))
    assert values[1] == 0.0


def test_kl_divergence() -> None:
    """KL ダイバージェンスの値と非負性のテスト。"""
    assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    expected = 0.5 * np.log(0.5 / 0.25) + 0.5 * np.log(0.5 / 0.75)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected)
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == pytest.approx(-np.log(LOG_CLIP))
    with pytest.raises(DistributionError):
        kl_divergence([0.5, 0.5], [0.5, 0.25, 0.25])


def test_distribution_key_quantization() -> None:
    """量子化の分解能以下の差は同じキーになることのテスト。"""
    mu = np.array([0.3, 0.7])
    assert distribution_key(mu, 1) == distribution_key(mu + [1e-12, -1e-12], 1)
    assert distribution_key(mu, 1) != distribution_key(mu, 2)
    assert distribution_key(mu, 1) != distribution_key([0.31, 0.69], 1)
    assert hash(distribution_key(mu, 0)) == hash(distribution_key(mu.copy(), 0))

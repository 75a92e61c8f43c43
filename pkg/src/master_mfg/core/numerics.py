"""
基本数値演算モジュール。

このモジュールは、softmax 方策、KL ダイバージェンス、分布キーの量子化など、
全モジュールで共有する純粋関数を提供します。
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import DistributionError
from src.master_mfg.core.spaces import SIMPLEX_TOLERANCE, ActionDistribution

# log π の評価で確率を下から切り詰める閾値(全アルゴリズム共通)
LOG_CLIP: float = 1e-6

# 分布キーの量子化分解能
DEFAULT_RESOLUTION: float = 1e-9


@dataclass(frozen=True)
class DistributionKey:
    """表形式で集団依存関数を引くための分布キー。

    Attributes:
        quantized: 各質量を分解能で丸めた整数列
        timestep: 時刻 n
    """

    quantized: tuple[int, ...]
    timestep: int


def softmax_policy(q_row: npt.ArrayLike, tau: float) -> ActionDistribution:
    """Q 値の行(または行の配列)から softmax 方策を計算します。

    最大値を差し引いてから指数を取るため、|Q|/τ が大きくても溢れません。

    Args:
        q_row: 行動上の実数ベクトル。2 次元の場合は最終軸ごとに正規化します。
        tau: 温度 τ (> 0)

    Returns:
        ActionDistribution: exp(q/τ) / Σ exp(q/τ)

    Raises:
        ValueError: τ が正でない場合
        DistributionError: 非有限値を含む場合(該当する行動番号を含む)
    """
    if not tau > 0.0:
        raise ValueError(f'温度 τ は正である必要があります: {tau}')
    q = np.asarray(q_row, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        bad = np.argwhere(~np.isfinite(q))[0]
        raise DistributionError(f'行動 {int(bad[-1])} の Q 値が非有限値です')
    z = q / tau
    z = z - z.max(axis=-1, keepdims=True)
    weights = np.exp(z)
    return weights / weights.sum(axis=-1, keepdims=True)


def clipped_log(prob: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """確率を LOG_CLIP で下から切り詰めた自然対数を返します。"""
    return np.log(np.maximum(np.asarray(prob, dtype=np.float64), LOG_CLIP))


def kl_divergence(p: npt.ArrayLike, q: npt.ArrayLike) -> float:
    """KL(p‖q) = ⟨p, ln p − ln q⟩ を計算します。

    q は ln の前に LOG_CLIP で切り詰めます。p の零要素は寄与しません。

    Args:
        p: 行動分布
        q: 行動分布

    Returns:
        float: 非負の KL ダイバージェンス

    Raises:
        DistributionError: 入力が行動分布でない場合
    """
    p_arr = _check_simplex(p)
    q_arr = _check_simplex(q)
    if p_arr.shape != q_arr.shape:
        raise DistributionError('KL の引数の長さが一致しません')
    support = p_arr > 0.0
    terms = p_arr[support] * (np.log(p_arr[support]) - clipped_log(q_arr[support]))
    return max(float(terms.sum()), 0.0)


def distribution_key(
    mu: npt.ArrayLike, n: int, resolution: float = DEFAULT_RESOLUTION
) -> DistributionKey:
    """状態分布を量子化してキーを作ります。

    Args:
        mu: 状態分布
        n: 時刻
        resolution: 量子化分解能

    Returns:
        DistributionKey: 決定的な分布キー
    """
    mass = np.asarray(mu, dtype=np.float64)
    quantized = np.rint(mass / resolution).astype(np.int64)
    return DistributionKey(quantized=tuple(quantized.tolist()), timestep=n)


def _check_simplex(p: npt.ArrayLike) -> npt.NDArray[np.float64]:
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise DistributionError(f'行動分布ではありません: {arr}')
    if abs(float(arr.sum()) - 1.0) > SIMPLEX_TOLERANCE:
        raise DistributionError(f'行動分布の総和が 1 ではありません: {arr.sum()}')
    return arr

"""
線形二次 (LQ) 環境モジュール。

このモジュールは、状態 {-L, …, L} 上で行動 {-M, …, M} だけ移動する
離散化された LQ 平均場ゲームを提供します。共通ノイズ ξ は相関 ρ で移動に加わります。
"""

import logging
import math
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import stats

from src.master_mfg.core.errors import EnvConfigurationError
from src.master_mfg.core.spaces import LineGeometry, StateSpace, line_actions
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.noise.processes import LQ_AMPLITUDE

logger = logging.getLogger(__name__)

NoiseVariant = Literal['none', 'xi1', 'xi2']

# 個別ノイズ ε の離散化幅(σ の何倍まで)
EPSILON_SPAN: int = 3
DEFAULT_RHO: float = 0.5


def round_half_away(value: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """0 から遠い方へ丸める四捨五入。"""
    return np.sign(value) * np.floor(np.abs(value) + 0.5)


def epsilon_half_width(sigma: float) -> int:
    """ε の支持 {-3σ, …, 3σ} の半幅 ⌈3σ⌉。σ=0 では 0 です。"""
    return max(0, math.ceil(EPSILON_SPAN * sigma - 1e-9))


def epsilon_bins(
    sigma: float = 1.0,
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """ε ~ N(0, 1) を整数点 {-⌈3σ⌉, …, ⌈3σ⌉} へ離散化した支持点と確率を返します。

    点 j の確率は Φ(j+½) - Φ(j-½) を正規化したものです。
    """
    half_width = epsilon_half_width(sigma)
    support = np.arange(-half_width, half_width + 1, dtype=np.float64)
    prob = stats.norm.cdf(support + 0.5) - stats.norm.cdf(support - 0.5)
    return support, prob / prob.sum()


class LinearQuadraticEnv(EnvModel):
    """離散 LQ 平均場ゲーム。

    Attributes:
        L: 状態の半幅
        M: 行動の最大変位
        sigma: 揺らぎの大きさ σ
        q: 交差項係数
        kappa: 平均への引力係数 κ
        c_term: 終端コスト係数
        delta: 時間刻み Δ
        rho: 共通ノイズの相関 ρ(ノイズなしでは 0)
        noise_variant: 'none'、'xi1'、'xi2'
    """

    name = 'linear_quadratic'

    def __init__(
        self,
        L: int,
        M: int,
        sigma: float,
        q: float,
        kappa: float,
        c_term: float,
        delta: float,
        rho: float,
        noise_variant: NoiseVariant,
        horizon: int,
    ) -> None:
        space = StateSpace(
            size=2 * L + 1, geometry=LineGeometry(length=2 * L + 1, offset=-L)
        )
        super().__init__(space, line_actions(M), horizon)
        self.L = L
        self.M = M
        self.sigma = sigma
        self.q = q
        self.kappa = kappa
        self.c_term = c_term
        self.delta = delta
        self.noise_variant = noise_variant
        self.rho = rho if noise_variant != 'none' else 0.0
        self.noise_kind = 'lq' if noise_variant != 'none' else None
        self._positions = space.values()
        self._action_values = np.array(
            [d[0] for d in self.action_space.displacements], dtype=np.float64
        )
        self._kernels: dict[float, npt.NDArray[np.float64]] = {}

    def _build_kernel(self, xi: float) -> npt.NDArray[np.float64]:
        support, prob = epsilon_bins(self.sigma)
        root_delta = math.sqrt(self.delta)
        common = self.sigma * self.rho * xi * root_delta
        idiosyncratic = self.sigma * math.sqrt(1.0 - self.rho**2) * support * root_delta
        kernel = np.zeros((self.n_states, self.n_actions, self.n_states))
        for x_idx, x in enumerate(self._positions):
            for a_idx, a in enumerate(self._action_values):
                raw = x + a * self.delta + common + idiosyncratic
                targets = np.clip(round_half_away(raw), -self.L, self.L) + self.L
                np.add.at(kernel[x_idx, a_idx], targets.astype(np.int64), prob)
        kernel.flags.writeable = False
        return kernel

    def transition_tensor(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        value = 0.0 if xi is None or self.noise_variant == 'none' else float(xi)
        if value not in self._kernels:
            self._kernels[value] = self._build_kernel(value)
        return self._kernels[value]

    def mean(self, mu: npt.NDArray[np.float64]) -> float:
        """集団平均 m = Σ x μ(x)。"""
        return float(self._positions @ mu)

    def interaction_reward(
        self, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        gap = self.mean(mu) - self._positions
        return -0.5 * self.kappa * gap**2 * self.delta

    def reward_table(
        self, n: int, mu: npt.NDArray[np.float64], xi: float | None = None
    ) -> npt.NDArray[np.float64]:
        gap = self.mean(mu) - self._positions
        if n == self.horizon:
            terminal = -0.5 * self.c_term * gap**2
            return np.repeat(terminal[:, None], self.n_actions, axis=1)
        a = self._action_values[None, :]
        running = (
            -0.5 * a**2
            + self.q * a * gap[:, None]
            - 0.5 * self.kappa * gap[:, None] ** 2
        )
        return running * self.delta

    def terminal_reward(self, x: int, mu: npt.NDArray[np.float64]) -> float:
        """終端報酬 -(c_term/2)(m - x)²。x は状態番号。"""
        gap = self.mean(mu) - self._positions[x]
        return float(-0.5 * self.c_term * gap**2)


def make_linear_quadratic(
    L: int = 50,
    M: int = 3,
    sigma: float = 1.0,
    q: float = 0.01,
    kappa: float = 0.5,
    c_term: float = 1.0,
    delta: float = 1.0,
    rho: float | None = None,
    noise_variant: NoiseVariant = 'none',
    horizon: int = 30,
) -> LinearQuadraticEnv:
    """LQ 環境を構築します。

    Args:
        L: 状態の半幅 (≥ 1)
        M: 行動の最大変位 (≥ 1)
        sigma: 揺らぎの大きさ σ
        q: 交差項係数
        kappa: 平均への引力係数 κ
        c_term: 終端コスト係数
        delta: 時間刻み Δ
        rho: 共通ノイズの相関 ρ ∈ [0, 1]。省略時はノイズありで 0.5。
        noise_variant: 'none'、'xi1'、'xi2'
        horizon: ホライズン N_T

    Returns:
        LinearQuadraticEnv: LQ 環境

    Raises:
        EnvConfigurationError: パラメータが範囲外の場合
    """
    if L < 1 or M < 1:
        raise EnvConfigurationError(f'L と M は 1 以上である必要があります: L={L}, M={M}')
    if sigma < 0.0 or delta <= 0.0:
        raise EnvConfigurationError(
            f'σ は非負、Δ は正である必要があります: σ={sigma}, Δ={delta}'
        )
    rho_value = DEFAULT_RHO if rho is None else rho
    if not 0.0 <= rho_value <= 1.0:
        raise EnvConfigurationError(f'ρ は [0, 1] の範囲である必要があります: {rho_value}')
    if noise_variant not in ('none', 'xi1', 'xi2'):
        raise EnvConfigurationError(f'未知のノイズ種別です: {noise_variant}')

    root_delta = math.sqrt(delta)
    common = (
        sigma * rho_value * LQ_AMPLITUDE * root_delta
        if noise_variant != 'none'
        else 0.0
    )
    reach = M * delta + epsilon_half_width(sigma) * sigma * root_delta + common
    if reach > 2 * L:
        logger.warning(
            '1 ステップの最大移動量 %.2f が 2L=%d を超えます。フローが境界に張り付きます',
            reach,
            2 * L,
        )
    return LinearQuadraticEnv(
        L=L,
        M=M,
        sigma=sigma,
        q=q,
        kappa=kappa,
        c_term=c_term,
        delta=delta,
        rho=rho_value,
        noise_variant=noise_variant,
        horizon=horizon,
    )

"""
入力エンコーディングモジュール。

このモジュールは、Q ネットワークの入力
[one-hot(n, N_T+1) ‖ one-hot(x, |𝒳|) ‖ μ ‖ ノイズ観測] を組み立てます。
μ の区間は集団依存の学習器でのみ、ノイズの区間は共通ノイズのある環境でのみ含みます。
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.errors import NoiseError
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.noise.processes import NoiseObservation


def encode_input(
    n: int,
    x: int,
    mu: npt.NDArray[np.float64] | None,
    obs: NoiseObservation | None,
    horizon: int,
    n_states: int,
) -> npt.NDArray[np.float64]:
    """1 つの (n, x, μ, Ξ_n) を入力ベクトルに変換します。

    Args:
        n: 時刻 (0 ≤ n ≤ horizon)
        x: 状態番号
        mu: 集団分布。None なら μ の区間を含めません。
        obs: ノイズ観測。None ならノイズの区間を含めません。
        horizon: ホライズン N_T
        n_states: 状態数 |𝒳|

    Returns:
        NDArray: 入力ベクトル
    """
    if not 0 <= n <= horizon:
        raise ValueError(f'時刻 {n} が範囲 [0, {horizon}] の外です')
    time_part = np.zeros(horizon + 1)
    time_part[n] = 1.0
    state_part = np.zeros(n_states)
    state_part[x] = 1.0
    parts = [time_part, state_part]
    if mu is not None:
        parts.append(np.asarray(mu, dtype=np.float64))
    if obs is not None:
        parts.append(obs.padded)
    return np.concatenate(parts)


@dataclass(frozen=True)
class InputEncoder:
    """環境ごとに長さが一定の入力を作るエンコーダ。

    Attributes:
        horizon: ホライズン N_T
        n_states: 状態数
        include_population: μ の区間を含めるかどうか
        include_noise: ノイズの区間を含めるかどうか
    """

    horizon: int
    n_states: int
    include_population: bool = True
    include_noise: bool = False

    @classmethod
    def for_env(cls, env: EnvModel, include_population: bool = True) -> 'InputEncoder':
        """環境からエンコーダを作ります。"""
        return cls(
            horizon=env.horizon,
            n_states=env.n_states,
            include_population=include_population,
            include_noise=env.noise_kind is not None,
        )

    @property
    def size(self) -> int:
        """入力ベクトルの長さ。"""
        length = self.horizon + 1 + self.n_states
        if self.include_population:
            length += self.n_states
        if self.include_noise:
            length += self.horizon + 1
        return length

    def _noise(self, obs: NoiseObservation | None) -> NoiseObservation | None:
        if not self.include_noise:
            return None
        if obs is None:
            raise NoiseError('共通ノイズのある環境ではノイズ観測が必要です')
        return obs

    def encode(
        self,
        n: int,
        x: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        """1 状態分の入力ベクトル。"""
        return encode_input(
            n,
            x,
            mu if self.include_population else None,
            self._noise(obs),
            self.horizon,
            self.n_states,
        )

    def encode_states(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        """全状態分の入力を (|𝒳|, D) で返します。"""
        noise = self._noise(obs)
        batch = np.zeros((self.n_states, self.size))
        batch[:, n] = 1.0
        offset = self.horizon + 1
        batch[np.arange(self.n_states), offset + np.arange(self.n_states)] = 1.0
        offset += self.n_states
        if self.include_population:
            batch[:, offset : offset + self.n_states] = mu
            offset += self.n_states
        if noise is not None:
            batch[:, offset:] = noise.padded
        return batch

    def decode(self, vector: npt.NDArray[np.float64]) -> tuple[int, int]:
        """one-hot の区間から (n, x) を復元します。"""
        time_part = vector[: self.horizon + 1]
        state_part = vector[self.horizon + 1 : self.horizon + 1 + self.n_states]
        return int(time_part.argmax()), int(state_part.argmax())

"""
リプレイバッファモジュール。

このモジュールは、反復ごとにリセットする容量固定の FIFO バッファを提供します。
遷移はエンコード済みの入力ベクトルとして保持し、反復番号のタグを付けます。
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt


@dataclass(frozen=True)
class TransitionSample:
    """1 つの遷移 ((n, x, μ_n, Ξ_n), a, r, (n+1, x', μ_{n+1}, Ξ_{n+1}))。

    状態側はエンコード済みの入力で保持します。終端 (n = N_T) の遷移では
    next_input は使われません。

    Attributes:
        n: 時刻
        x: 状態
        action: 行動
        reward: 報酬
        next_x: 次の状態(終端では x と同じ)
        terminal: 終端かどうか
        state_input: (n, x, μ_n, Ξ_n) のエンコード
        next_input: (n+1, x', μ_{n+1}, Ξ_{n+1}) のエンコード
        iteration: 遷移を生成した反復番号
    """

    n: int
    x: int
    action: int
    reward: float
    next_x: int
    terminal: bool
    state_input: npt.NDArray[np.float64]
    next_input: npt.NDArray[np.float64]
    iteration: int = 0


@dataclass(frozen=True)
class TransitionBatch:
    """サンプルしたミニバッチ。"""

    state_inputs: npt.NDArray[np.float64]
    actions: npt.NDArray[np.int64]
    rewards: npt.NDArray[np.float64]
    next_inputs: npt.NDArray[np.float64]
    terminals: npt.NDArray[np.bool_]
    iterations: npt.NDArray[np.int64]

    def __len__(self) -> int:
        return int(self.actions.shape[0])


class ReplayBuffer:
    """容量固定の FIFO リプレイバッファ。

    容量に達すると最も古い遷移から上書きします。
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f'容量は 1 以上である必要があります: {capacity}')
        self.capacity = capacity
        self.iteration = 0
        self._size = 0
        self._position = 0
        self._state_inputs: npt.NDArray[np.float64] | None = None
        self._next_inputs: npt.NDArray[np.float64] | None = None
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._terminals = np.zeros(capacity, dtype=np.bool_)
        self._iterations = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self._size

    @property
    def size(self) -> int:
        """格納済みの遷移数。"""
        return self._size

    def reset(self, iteration: int) -> None:
        """バッファを空にし、以後の遷移を iteration として受け付けます。"""
        self.iteration = iteration
        self._size = 0
        self._position = 0

    def push(self, sample: TransitionSample) -> None:
        """遷移を追加します。

        Raises:
            ValueError: 現在の反復と異なる反復の遷移を追加した場合
        """
        if sample.iteration != self.iteration:
            raise ValueError(
                f'反復 {sample.iteration} の遷移を反復 {self.iteration} の'
                'バッファに追加できません'
            )
        if self._state_inputs is None or self._next_inputs is None:
            width = sample.state_input.shape[0]
            self._state_inputs = np.zeros((self.capacity, width))
            self._next_inputs = np.zeros((self.capacity, width))
        i = self._position
        self._state_inputs[i] = sample.state_input
        self._next_inputs[i] = sample.next_input
        self._actions[i] = sample.action
        self._rewards[i] = sample.reward
        self._terminals[i] = sample.terminal
        self._iterations[i] = sample.iteration
        self._position = (self._position + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """格納済みの遷移から復元抽出でミニバッチを作ります。

        Raises:
            ValueError: バッファが空の場合
        """
        if self._size == 0 or self._state_inputs is None or self._next_inputs is None:
            raise ValueError('空のバッファからはサンプルできません')
        index = rng.integers(0, self._size, size=batch_size)
        return TransitionBatch(
            state_inputs=self._state_inputs[index],
            actions=self._actions[index],
            rewards=self._rewards[index],
            next_inputs=self._next_inputs[index],
            terminals=self._terminals[index],
            iterations=self._iterations[index],
        )

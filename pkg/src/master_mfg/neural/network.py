"""
Q ネットワークモジュール。

このモジュールは、隠れ層に ReLU、出力層に恒等写像を使う多層パーセプトロンを
numpy で実装します。逆伝播は各層の中間値を保存して解析的に計算し、
Adam と確率的勾配降下法の 2 種類のオプティマイザを提供します。
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

# チェックポイントの先頭に置く識別子
CHECKPOINT_MAGIC: bytes = b'MMFGQNET'
CHECKPOINT_VERSION: int = 1

OptimizerName = Literal['adam', 'sgd']
Gradients = list[tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]]


def relu(z: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.maximum(z, 0.0)


def relu_grad(z: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.where(z > 0.0, 1.0, 0.0)


@dataclass
class ForwardCache:
    """逆伝播用に保存した各層の入力と前活性。"""

    inputs: list[npt.NDArray[np.float64]] = field(default_factory=list)
    pre_activations: list[npt.NDArray[np.float64]] = field(default_factory=list)


class MlpQNetwork:
    """多層パーセプトロンの Q ネットワーク。

    Attributes:
        sizes: 層のサイズ (入力, 隠れ層..., |𝒜|)
        weights: 各層の重み (出力, 入力)
        biases: 各層のバイアス (出力,)
        version: パラメータを更新するたびに増える版番号
    """

    def __init__(
        self,
        sizes: tuple[int, ...],
        weights: list[npt.NDArray[np.float64]],
        biases: list[npt.NDArray[np.float64]],
    ) -> None:
        if len(sizes) < 2 or any(size < 1 for size in sizes):
            raise ValueError(f'層のサイズが不正です: {sizes}')
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ValueError('重みとバイアスの数が層の数と一致しません')
        for i, (w, b) in enumerate(zip(weights, biases, strict=True)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ValueError(f'第 {i} 層のパラメータ形状が不正です')
        self.sizes = tuple(sizes)
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self.version = 0

    @classmethod
    def initialize(
        cls, sizes: tuple[int, ...], rng: np.random.Generator
    ) -> 'MlpQNetwork':
        """重みを ±√(6/(fan_in + fan_out)) の一様分布で初期化します。"""
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:], strict=True):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(sizes, weights, biases)

    @classmethod
    def zeros(cls, sizes: tuple[int, ...]) -> 'MlpQNetwork':
        """全パラメータが 0 のネットワーク。"""
        return cls(
            sizes,
            [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:], strict=True)],
            [np.zeros(o) for o in sizes[1:]],
        )

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    @property
    def parameter_count(self) -> int:
        """重みとバイアスの総数。"""
        return sum(
            w.size + b.size for w, b in zip(self.weights, self.biases, strict=True)
        )

    def copy(self) -> 'MlpQNetwork':
        """パラメータを複製したネットワーク(版番号は引き継ぎます)。"""
        clone = MlpQNetwork(self.sizes, self.weights, self.biases)
        clone.version = self.version
        return clone

    def load_parameters_from(self, other: 'MlpQNetwork') -> None:
        """other のパラメータと版番号を写します(θ' ← θ)。"""
        if other.sizes != self.sizes:
            raise ValueError(f'層のサイズが一致しません: {other.sizes} != {self.sizes}')
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]
        self.version = other.version

    def _check_inputs(self, inputs: npt.ArrayLike) -> npt.NDArray[np.float64]:
        x = np.asarray(inputs, dtype=np.float64)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(
                f'入力の長さ {x.shape[-1]} がネットワークの入力 {self.n_inputs} と'
                '一致しません'
            )
        return x

    def forward(self, inputs: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Q 値を計算します。入力は (D,) または (B, D)。"""
        outputs, _ = self.forward_with_cache(inputs)
        return outputs

    def forward_with_cache(
        self, inputs: npt.ArrayLike
    ) -> tuple[npt.NDArray[np.float64], ForwardCache]:
        """Q 値と逆伝播用の中間値を計算します。"""
        a = self._check_inputs(inputs)
        cache = ForwardCache()
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            cache.inputs.append(a)
            z = a @ w.T + b
            cache.pre_activations.append(z)
            a = z if i == last else relu(z)
        return a, cache

    def backward(
        self, cache: ForwardCache, d_outputs: npt.NDArray[np.float64]
    ) -> Gradients:
        """出力に対する勾配から各層の (dW, db) を計算します。入力はバッチ形式。"""
        grads: Gradients = []
        delta = d_outputs
        for i in range(len(self.weights) - 1, -1, -1):
            if i != len(self.weights) - 1:
                delta = delta * relu_grad(cache.pre_activations[i])
            grads.append((delta.T @ cache.inputs[i], delta.sum(axis=0)))
            delta = delta @ self.weights[i]
        grads.reverse()
        return grads

    def flat_parameters(self) -> npt.NDArray[np.float64]:
        """全パラメータを層順 (W, b) に連結したベクトル。"""
        parts = []
        for w, b in zip(self.weights, self.biases, strict=True):
            parts.extend([w.ravel(), b])
        return np.concatenate(parts)

    def set_flat_parameters(self, flat: npt.ArrayLike) -> None:
        """flat_parameters と同じ並びのベクトルからパラメータを設定します。"""
        values = np.asarray(flat, dtype=np.float64)
        if values.size != self.parameter_count:
            raise ValueError(
                f'パラメータ数 {values.size} が {self.parameter_count} と一致しません'
            )
        offset = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            self.weights[i] = values[offset : offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[i] = values[offset : offset + b.size].copy()
            offset += b.size
        self.version += 1

    def save(self, file_path: Path) -> None:
        """チェックポイントを書き出します。

        形式は識別子、版、層数、各層サイズ (uint32 リトルエンディアン)、
        続いて各層の重み(行優先)とバイアスを float64 リトルエンディアンで並べます。
        """
        file_path.parent.mkdir(parents=True, exist_ok=True)
        header = CHECKPOINT_MAGIC + struct.pack(
            f'<II{len(self.sizes)}I', CHECKPOINT_VERSION, len(self.sizes), *self.sizes
        )
        with open(file_path, 'wb') as f:
            f.write(header)
            f.write(self.flat_parameters().astype('<f8').tobytes())

    @classmethod
    def load(cls, file_path: Path) -> 'MlpQNetwork':
        """save で書き出したチェックポイントを読み込みます。

        Raises:
            ValueError: 識別子や長さが一致しない場合
        """
        data = file_path.read_bytes()
        magic_len = len(CHECKPOINT_MAGIC)
        if data[:magic_len] != CHECKPOINT_MAGIC:
            raise ValueError(f'チェックポイントの識別子が不正です: {file_path}')
        version, n_layers = struct.unpack_from('<II', data, magic_len)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f'未対応のチェックポイント版です: {version}')
        offset = magic_len + 8
        sizes = struct.unpack_from(f'<{n_layers}I', data, offset)
        offset += 4 * n_layers
        net = cls.zeros(tuple(sizes))
        flat = np.frombuffer(data, dtype='<f8', offset=offset)
        if flat.size != net.parameter_count:
            raise ValueError(
                f'チェックポイントのパラメータ数 {flat.size} が '
                f'{net.parameter_count} と一致しません'
            )
        net.set_flat_parameters(flat.astype(np.float64))
        net.version = 0
        return net


def forward(net: MlpQNetwork, inputs: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """ネットワークの Q 値を計算します。"""
    return net.forward(inputs)


class SgdOptimizer:
    """確率的勾配降下法。"""

    def __init__(self, learning_rate: float) -> None:
        self.learning_rate = learning_rate

    def step(self, net: MlpQNetwork, grads: Gradients) -> None:
        for i, (dw, db) in enumerate(grads):
            net.weights[i] = net.weights[i] - self.learning_rate * dw
            net.biases[i] = net.biases[i] - self.learning_rate * db
        net.version += 1


class AdamOptimizer:
    """Adam (適応モーメント推定)。"""

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._t = 0
        self._m: list[npt.NDArray[np.float64]] = []
        self._v: list[npt.NDArray[np.float64]] = []

    def step(self, net: MlpQNetwork, grads: Gradients) -> None:
        flat_grads = [g for pair in grads for g in pair]
        if not self._m:
            self._m = [np.zeros_like(g) for g in flat_grads]
            self._v = [np.zeros_like(g) for g in flat_grads]
        self._t += 1
        correction1 = 1.0 - self.beta1**self._t
        correction2 = 1.0 - self.beta2**self._t
        updates = []
        for j, g in enumerate(flat_grads):
            self._m[j] = self.beta1 * self._m[j] + (1.0 - self.beta1) * g
            self._v[j] = self.beta2 * self._v[j] + (1.0 - self.beta2) * g**2
            m_hat = self._m[j] / correction1
            v_hat = self._v[j] / correction2
            updates.append(self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
        for i in range(len(net.weights)):
            net.weights[i] = net.weights[i] - updates[2 * i]
            net.biases[i] = net.biases[i] - updates[2 * i + 1]
        net.version += 1


Optimizer = SgdOptimizer | AdamOptimizer


def make_optimizer(name: OptimizerName, learning_rate: float) -> Optimizer:
    """名前からオプティマイザを作ります。"""
    if name == 'adam':
        return AdamOptimizer(learning_rate)
    if name == 'sgd':
        return SgdOptimizer(learning_rate)
    raise ValueError(f'未知のオプティマイザです: {name}')

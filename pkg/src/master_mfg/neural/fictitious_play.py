"""
ニューラル Fictitious Play モジュール。

Master OMD と比較するための深層 FP 学習器です。集団分布をネットワーク入力に
含める変種 'fp' と含めない変種 'fp_population_independent' があります。
各反復 k で

1. 直前の最適応答(k=1 では一様方策)のフローを平均フロー μ̄ に加え、
2. リプレイバッファをリセットして μ̄ に対する最適応答を DQN の目標値で学習し、
3. その貪欲方策を成分として保存します。

FP の方策は成分の一様混合で、(μ₀, ノイズ木) ごとに MixturePolicy として評価します。
"""

import logging
import time
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from src.master_mfg.core.policy import MasterPolicy, UniformPolicy
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.exploitability import (
    PairKey,
    evaluation_groups,
    exploitability,
    group_label,
)
from src.master_mfg.meanfield.flow import MeanFieldFlow, induced_flow
from src.master_mfg.neural.encoding import InputEncoder
from src.master_mfg.neural.network import MlpQNetwork
from src.master_mfg.neural.trainer import MasterOmdTrainer, TrainConfig
from src.master_mfg.noise.processes import CommonNoisePath, NoiseObservation, NoiseTree
from src.master_mfg.solvers.fictitious_play import (
    MixturePolicy,
    average_flows,
    flow_nodes,
)
from src.master_mfg.solvers.trace import SolverTrace, TraceRecord

logger = logging.getLogger(__name__)

# (成分番号, μ₀ のバイト列, 経路ラベル)
_FlowKey = tuple[int, bytes, str]


class GreedyNeuralPolicy:
    """Q ネットワークの argmax(同値は小さい行動番号)による決定的方策。"""

    def __init__(self, net: MlpQNetwork, encoder: InputEncoder) -> None:
        if net.n_inputs != encoder.size:
            raise ValueError(
                f'ネットワークの入力 {net.n_inputs} がエンコーダの長さ '
                f'{encoder.size} と一致しません'
            )
        self.net = net
        self.encoder = encoder

    @property
    def population_dependent(self) -> bool:
        return self.encoder.include_population

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        q = self.net.forward(self.encoder.encode_states(n, mu, obs))
        rows = np.zeros_like(q)
        rows[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
        return rows


class NeuralFpPolicy:
    """貪欲な最適応答の列としての FP 方策。

    成分のフローは (成分, μ₀, 経路) ごとにメモ化し、extended で作った
    後続の方策とも共有します。
    """

    def __init__(
        self,
        env: EnvModel,
        components: Sequence[GreedyNeuralPolicy] = (),
        cache: dict[_FlowKey, MeanFieldFlow] | None = None,
    ) -> None:
        self.env = env
        self.components = list(components)
        self._cache = {} if cache is None else cache

    def __len__(self) -> int:
        return len(self.components)

    @property
    def population_dependent(self) -> bool:
        return bool(self.components) and self.components[0].population_dependent

    def extended(self, component: GreedyNeuralPolicy) -> 'NeuralFpPolicy':
        """成分を 1 つ加えた方策を返します。"""
        return NeuralFpPolicy(self.env, [*self.components, component], self._cache)

    def component_flow(
        self,
        index: int,
        mu0: npt.NDArray[np.float64],
        path: CommonNoisePath | None,
        label: str = 'mu0',
    ) -> MeanFieldFlow:
        key = (index, np.asarray(mu0).tobytes(), path.label if path else 'none')
        if key not in self._cache:
            self._cache[key] = induced_flow(
                self.env, self.components[index], mu0, path, label
            )
        return self._cache[key]

    def mixture(
        self, mu0: npt.NDArray[np.float64], tree: NoiseTree | None, label: str = 'mu0'
    ) -> MixturePolicy:
        """1 つの (μ₀, ノイズ木) についての一様混合。

        Raises:
            ValueError: 成分がまだない場合
        """
        if not self.components:
            raise ValueError('FP 方策に成分がありません')
        paths = (None,) if tree is None else tree.paths
        nodes = [
            flow_nodes([self.component_flow(i, mu0, path, label) for path in paths])
            for i in range(len(self.components))
        ]
        return MixturePolicy(self.components, nodes)

    def mixtures(
        self,
        mu0_set: InitialDistributionSet,
        paths: Sequence[CommonNoisePath] | None = None,
    ) -> dict[PairKey, MixturePolicy]:
        """集合内の各 (μ₀, ノイズ木) についての混合方策。"""
        return {
            (label, group_label(tree)): self.mixture(mu0, tree, label)
            for label, mu0, tree in evaluation_groups(self.env, mu0_set, paths)
        }


class NeuralFpTrainer(MasterOmdTrainer):
    """深層 FP の学習器。

    ネットワーク構成とロールアウトは Master OMD と共通で、目標値だけを
    DQN 形式に切り替えます。平均フローは (μ₀, 経路) ごとに保持します。
    """

    def __init__(
        self,
        env: EnvModel,
        mu0_set: InitialDistributionSet,
        paths: Sequence[CommonNoisePath] | None,
        config: TrainConfig,
    ) -> None:
        if not config.fictitious_play:
            raise ValueError(f'{config.variant} は FP の変種ではありません')
        super().__init__(env, mu0_set, paths, config)
        self.fp_policy = NeuralFpPolicy(env)
        self.averages: list[npt.NDArray[np.float64]] | None = None

    def greedy(self) -> GreedyNeuralPolicy:
        """現在のオンラインネットワークの貪欲方策(パラメータは複製)。"""
        return GreedyNeuralPolicy(self.net.copy(), self.encoder)

    def run_iteration(self) -> NeuralFpPolicy:  # type: ignore[override]
        """1 反復を実行し、成分を 1 つ加えた FP 方策を返します。"""
        self.iteration += 1
        k = self.iteration
        latest: MasterPolicy = (
            self.fp_policy.components[-1]
            if self.fp_policy.components
            else UniformPolicy(self.env.n_states, self.env.n_actions)
        )
        current = self._flows(latest)
        previous = self.averages or [None] * len(current)
        self.averages = [
            average_flows(average, flow.distributions, k)
            for average, flow in zip(previous, current, strict=True)
        ]
        averaged = [
            MeanFieldFlow(average, label, path)
            for average, (label, _, path) in zip(self.averages, self.pairs, strict=True)
        ]
        self.buffer.reset(k)
        steps, mean_loss = self._rollout(averaged)
        self.fp_policy = self.fp_policy.extended(self.greedy())
        logger.debug(
            'FP iteration %d: steps=%d updates=%d loss=%.6g',
            k,
            steps,
            self.gradient_updates,
            mean_loss,
        )
        return self.fp_policy


def train_neural_fp(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
    config: TrainConfig,
    evaluation_set: InitialDistributionSet | None = None,
) -> tuple[NeuralFpPolicy, SolverTrace]:
    """深層 FP で方策を学習します。

    Args:
        env: 環境
        mu0_set: 学習用の初期分布集合
        paths: 共通ノイズ経路
        config: ハイパーパラメータ(variant は 'fp' か 'fp_population_independent')
        evaluation_set: 反復ごとの exploitability を評価する集合(既定は学習用)

    Returns:
        tuple: K 個の成分を持つ FP 方策と反復トレース

    Raises:
        TrainingDivergedError: 損失が非有限値になった場合
        ValueError: FP 以外の変種、または K=0 が指定された場合
    """
    if config.iterations < 1:
        raise ValueError(f'反復回数は 1 以上である必要があります: {config.iterations}')
    trainer = NeuralFpTrainer(env, mu0_set, paths, config)
    trace = SolverTrace(f'neural_{config.variant}')
    evaluation = evaluation_set or mu0_set
    policy = trainer.fp_policy
    for k in range(1, config.iterations + 1):
        started = time.perf_counter()
        policy = trainer.run_iteration()
        report = exploitability(
            env,
            policy.mixtures(evaluation, paths),
            evaluation,
            paths,
            iteration=k,
            seed=config.seed,
        )
        trace.append(TraceRecord(k, report, time.perf_counter() - started))
        logger.info(
            'neural %s iteration %d/%d: exploitability=%.6g',
            config.variant,
            k,
            config.iterations,
            report.mean_gap,
        )
    return policy, trace

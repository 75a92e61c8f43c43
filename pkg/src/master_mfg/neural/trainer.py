"""
Master OMD 学習器モジュール。

このモジュールは、Munchausen 形式の目標値で Q ネットワークを学習する
Master Deep OMD を実装します。各反復 k で

1. 直前の方策 π^{k-1} で各 μ₀ のフローを更新し、
2. リプレイバッファをリセットし、
3. ε-greedy のロールアウトで遷移を集めながら勾配ステップと
   ターゲットネットワークの同期を行い、
4. π^k = softmax(Q̃_θ/τ) を確定して θ_prev を保存します。
"""

import logging
import time
from collections.abc import Sequence
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.master_mfg.core.errors import TrainingDivergedError
from src.master_mfg.core.numerics import clipped_log, softmax_policy
from src.master_mfg.core.policy import MasterPolicy
from src.master_mfg.envs.initial import InitialDistributionSet
from src.master_mfg.envs.models import EnvModel
from src.master_mfg.exact.exploitability import evaluation_pairs, exploitability
from src.master_mfg.meanfield.flow import MeanFieldFlow, empirical_flow, induced_flow
from src.master_mfg.neural.encoding import InputEncoder
from src.master_mfg.neural.network import (
    MlpQNetwork,
    Optimizer,
    OptimizerName,
    make_optimizer,
)
from src.master_mfg.neural.replay import ReplayBuffer, TransitionBatch, TransitionSample
from src.master_mfg.noise.processes import CommonNoisePath, NoiseObservation
from src.master_mfg.solvers.trace import SolverTrace, TraceRecord

logger = logging.getLogger(__name__)

LearnerVariant = Literal[
    'master',
    'population_independent',
    'munchausen_omd',
    'fp',
    'fp_population_independent',
]
FlowMode = Literal['exact', 'empirical']


class TrainConfig(BaseModel):
    """学習器のハイパーパラメータ。"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    iterations: int = Field(default=200, ge=0)
    episodes_per_iteration: int | None = Field(default=None, gt=0)
    max_steps: int = Field(default=30000, gt=0)
    tau: float = Field(default=50.0, gt=0.0)
    gamma: float = Field(default=0.99, ge=0.0, le=1.0)
    exploration_fraction: float = Field(default=0.1, gt=0.0, le=1.0)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    batch_size: int = Field(default=32, gt=0)
    gradient_steps: int = Field(default=1, gt=0)
    update_period: int = Field(default=1, gt=0)
    target_sync_period: int = Field(default=4, gt=0)
    buffer_capacity: int = Field(default=30000, gt=0)
    learning_rate: float = Field(default=1e-4, gt=0.0)
    optimizer: OptimizerName = 'adam'
    hidden: tuple[int, ...] = (64, 64)
    seed: int = 0
    variant: LearnerVariant = 'master'
    alpha: float = Field(default=1.0, ge=0.0)
    flow_mode: FlowMode = 'exact'
    n_agents: int = Field(default=500, gt=0)

    @model_validator(mode='after')
    def _check_hidden(self) -> 'TrainConfig':
        if any(width < 1 for width in self.hidden):
            raise ValueError(f'隠れ層の幅は 1 以上である必要があります: {self.hidden}')
        if self.epsilon_end > self.epsilon_start:
            raise ValueError('epsilon_end は epsilon_start 以下である必要があります')
        return self

    @property
    def population_input(self) -> bool:
        """ネットワーク入力に μ を含めるかどうか。"""
        return self.variant in ('master', 'fp')

    @property
    def fictitious_play(self) -> bool:
        """各反復で平均フローへの最適応答を学習する FP 変種かどうか。"""
        return self.variant in ('fp', 'fp_population_independent')


class NeuralMasterPolicy:
    """Q ネットワークの softmax(Q̃_θ/τ) による方策。"""

    def __init__(self, net: MlpQNetwork, encoder: InputEncoder, tau: float) -> None:
        if net.n_inputs != encoder.size:
            raise ValueError(
                f'ネットワークの入力 {net.n_inputs} がエンコーダの長さ '
                f'{encoder.size} と一致しません'
            )
        self.net = net
        self.encoder = encoder
        self.tau = tau

    @property
    def population_dependent(self) -> bool:
        return self.encoder.include_population

    def q_values(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        """全状態の Q̃_θ を (|𝒳|, |𝒜|) で返します。"""
        return self.net.forward(self.encoder.encode_states(n, mu, obs))

    def distribution(
        self,
        n: int,
        mu: npt.NDArray[np.float64],
        obs: NoiseObservation | None = None,
    ) -> npt.NDArray[np.float64]:
        return softmax_policy(self.q_values(n, mu, obs), self.tau)


def epsilon_greedy(
    q_row: npt.ArrayLike, epsilon: float, rng: np.random.Generator
) -> int:
    """確率 ε で一様な行動、それ以外は argmax(同値は小さい行動番号)を返します。"""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f'ε は [0, 1] の範囲である必要があります: {epsilon}')
    values = np.asarray(q_row, dtype=np.float64)
    if rng.random() < epsilon:
        return int(rng.integers(values.shape[0]))
    return int(values.argmax())


def linear_epsilon(step: int, total_steps: int, config: TrainConfig) -> float:
    """反復内のステップ数に応じて ε を線形に減衰させます。"""
    horizon = max(1, int(config.exploration_fraction * total_steps))
    fraction = min(1.0, step / horizon)
    return config.epsilon_start + fraction * (config.epsilon_end - config.epsilon_start)


def munchausen_target(
    batch: TransitionBatch,
    net: MlpQNetwork,
    target_net: MlpQNetwork,
    prev_net: MlpQNetwork,
    tau: float,
    gamma: float,
    alpha: float = 1.0,
    continuation: Literal['target', 'previous'] = 'target',
) -> npt.NDArray[np.float64]:
    """Munchausen 形式の目標値を計算します。

    T = r + α τ ln π^{k-1}(a|s)
        + γ Σ_{a'} π_c(a'|s') (Q̃_{θ'}(s', a') - τ ln π^{k-1}(a'|s'))

    π^{k-1} は θ_prev の softmax、π_c は continuation='target' なら θ' の softmax、
    'previous' なら π^{k-1} です。ln は 10⁻⁶ で切り詰め、終端では継続項を除きます。
    目標値には勾配を流さないため、オンラインネットワーク net は参照しません。

    Returns:
        NDArray: バッチ長の目標値
    """
    del net
    rows = np.arange(len(batch))
    prev_policy = softmax_policy(prev_net.forward(batch.state_inputs), tau)
    log_term = alpha * tau * clipped_log(prev_policy[rows, batch.actions])
    targets = batch.rewards + log_term

    live = ~batch.terminals
    if gamma > 0.0 and np.any(live):
        next_inputs = batch.next_inputs[live]
        q_next = target_net.forward(next_inputs)
        prev_next = softmax_policy(prev_net.forward(next_inputs), tau)
        if continuation == 'target':
            continuation_policy = softmax_policy(q_next, tau)
        else:
            continuation_policy = prev_next
        soft_value = (
            continuation_policy * (q_next - tau * clipped_log(prev_next))
        ).sum(axis=1)
        targets[live] = targets[live] + gamma * soft_value
    return targets


def dqn_target(
    batch: TransitionBatch, target_net: MlpQNetwork, gamma: float
) -> npt.NDArray[np.float64]:
    """最適応答用の目標値 T = r + γ max_{a'} Q_{θ'}(s', a') を計算します。

    終端では継続項を除きます。
    """
    targets = np.array(batch.rewards, dtype=np.float64)
    live = ~batch.terminals
    if gamma > 0.0 and np.any(live):
        q_next = target_net.forward(batch.next_inputs[live])
        targets[live] = targets[live] + gamma * q_next.max(axis=1)
    return targets


def gradient_step(
    net: MlpQNetwork,
    batch: TransitionBatch,
    targets: npt.NDArray[np.float64],
    optimizer: Optimizer,
) -> float:
    """取った行動の Q̃_θ と目標値の平均二乗誤差で 1 回更新し、損失を返します。

    Raises:
        TrainingDivergedError: 損失が非有限値になった場合
        ValueError: バッチが空の場合
    """
    if len(batch) == 0:
        raise ValueError('空のバッチでは更新できません')
    outputs, cache = net.forward_with_cache(batch.state_inputs)
    rows = np.arange(len(batch))
    errors = outputs[rows, batch.actions] - targets
    loss = float(np.mean(errors**2))
    if not np.isfinite(loss):
        raise TrainingDivergedError(optimizer.learning_rate)
    d_outputs = np.zeros_like(outputs)
    d_outputs[rows, batch.actions] = 2.0 * errors / len(batch)
    optimizer.step(net, net.backward(cache, d_outputs))
    return loss


class MasterOmdTrainer:
    """Master Deep OMD の学習器。

    θ(オンライン)、θ'(ターゲット)、θ_prev(直前反復の最終パラメータ)の
    3 つのネットワークとリプレイバッファを保持します。
    """

    def __init__(
        self,
        env: EnvModel,
        mu0_set: InitialDistributionSet,
        paths: Sequence[CommonNoisePath] | None,
        config: TrainConfig,
    ) -> None:
        self.env = env
        self.mu0_set = mu0_set
        self.paths = list(paths) if paths else None
        self.config = config
        self.pairs = evaluation_pairs(env, mu0_set, paths)
        self.rng = np.random.default_rng(config.seed)
        self.encoder = InputEncoder.for_env(env, config.population_input)
        sizes = (self.encoder.size, *config.hidden, env.n_actions)
        self.net = MlpQNetwork.initialize(sizes, self.rng)
        self.target_net = self.net.copy()
        self.prev_net = self.net.copy()
        self.optimizer = make_optimizer(config.optimizer, config.learning_rate)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.iteration = 0
        self.gradient_updates = 0

    def policy(self, net: MlpQNetwork | None = None) -> NeuralMasterPolicy:
        """指定したパラメータ(既定は θ_prev)の方策。"""
        return NeuralMasterPolicy(
            (net or self.prev_net).copy(), self.encoder, self.config.tau
        )

    def _flows(self, policy: MasterPolicy) -> list[MeanFieldFlow]:
        flows = []
        for label, mu0, path in self.pairs:
            if self.config.flow_mode == 'empirical':
                seed = int(self.rng.integers(2**31 - 1))
                flows.append(
                    empirical_flow(
                        self.env, policy, mu0, self.config.n_agents, path, seed, label
                    )
                )
            else:
                flows.append(induced_flow(self.env, policy, mu0, path, label))
        return flows

    def _train_on_batch(self) -> float:
        config = self.config
        batch = self.buffer.sample(config.batch_size, self.rng)
        continuation: Literal['target', 'previous'] = (
            'previous' if config.variant == 'munchausen_omd' else 'target'
        )
        alpha = config.alpha if config.variant == 'munchausen_omd' else 1.0
        if config.fictitious_play:
            targets = dqn_target(batch, self.target_net, config.gamma)
        else:
            targets = munchausen_target(
                batch,
                self.net,
                self.target_net,
                self.prev_net,
                config.tau,
                config.gamma,
                alpha,
                continuation,
            )
        try:
            loss = gradient_step(self.net, batch, targets, self.optimizer)
        except TrainingDivergedError as e:
            raise TrainingDivergedError(
                e.lr, self.iteration, self.gradient_updates
            ) from e
        self.gradient_updates += 1
        if self.gradient_updates % config.target_sync_period == 0:
            self.target_net.load_parameters_from(self.net)
        return loss

    def _rollout(self, flows: list[MeanFieldFlow]) -> tuple[int, float]:
        """ε-greedy のロールアウトで遷移を集めながら学習します。"""
        config = self.config
        env = self.env
        steps = 0
        episodes = 0
        losses: list[float] = []
        while steps < config.max_steps:
            limit = config.episodes_per_iteration
            if limit is not None and episodes >= limit:
                break
            for flow in flows:
                x = int(self.rng.choice(env.n_states, p=flow[0]))
                for n in range(env.horizon + 1):
                    if steps >= config.max_steps:
                        break
                    obs = flow.observation(n)
                    state_input = self.encoder.encode(n, x, flow[n], obs)
                    epsilon = linear_epsilon(steps, config.max_steps, config)
                    q_row = self.net.forward(state_input)
                    action = epsilon_greedy(q_row, epsilon, self.rng)
                    xi = flow.xi(n)
                    reward = float(env.reward_table(n, flow[n], xi)[x, action])
                    terminal = n == env.horizon
                    if terminal:
                        next_x = x
                        next_input = state_input
                    else:
                        row = env.transition_tensor(n, flow[n], xi)[x, action]
                        next_x = int(self.rng.choice(env.n_states, p=row))
                        next_input = self.encoder.encode(
                            n + 1, next_x, flow[n + 1], flow.observation(n + 1)
                        )
                    self.buffer.push(
                        TransitionSample(
                            n,
                            x,
                            action,
                            reward,
                            next_x,
                            terminal,
                            state_input,
                            next_input,
                            self.iteration,
                        )
                    )
                    steps += 1
                    x = next_x
                    if (
                        steps % config.update_period == 0
                        and len(self.buffer) >= config.batch_size
                    ):
                        for _ in range(config.gradient_steps):
                            losses.append(self._train_on_batch())
            episodes += 1
        return steps, float(np.mean(losses)) if losses else float('nan')

    def run_iteration(self) -> NeuralMasterPolicy:
        """1 反復を実行し、π^k を返します。"""
        self.iteration += 1
        flows = self._flows(self.policy())
        self.buffer.reset(self.iteration)
        steps, mean_loss = self._rollout(flows)
        self.prev_net = self.net.copy()
        logger.debug(
            'iteration %d: steps=%d updates=%d loss=%.6g',
            self.iteration,
            steps,
            self.gradient_updates,
            mean_loss,
        )
        return self.policy()


def train_master_omd(
    env: EnvModel,
    mu0_set: InitialDistributionSet,
    paths: Sequence[CommonNoisePath] | None,
    config: TrainConfig,
    evaluation_set: InitialDistributionSet | None = None,
) -> tuple[NeuralMasterPolicy, SolverTrace]:
    """Master Deep OMD で方策を学習します。

    Args:
        env: 環境
        mu0_set: 学習用の初期分布集合
        paths: 共通ノイズ経路
        config: ハイパーパラメータ
        evaluation_set: 反復ごとの exploitability を評価する集合(既定は学習用)

    Returns:
        tuple: 反復 K の方策と反復トレース。K=0 なら未学習ネットワークの方策。

    Raises:
        TrainingDivergedError: 損失が非有限値になった場合
        ValueError: FP 変種が指定された場合(train_neural_fp を使います)
    """
    if config.fictitious_play:
        raise ValueError(f'{config.variant} は train_neural_fp で学習します')
    trainer = MasterOmdTrainer(env, mu0_set, paths, config)
    trace = SolverTrace(f'neural_{config.variant}')
    evaluation = evaluation_set or mu0_set
    policy = trainer.policy()
    for k in range(1, config.iterations + 1):
        started = time.perf_counter()
        policy = trainer.run_iteration()
        report = exploitability(
            env, policy, evaluation, paths, iteration=k, seed=config.seed
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
